#pragma once

// Scalar-generic log prior densities.  Each template instantiates for plain
// double and for the tape Var with identical floating point expressions, so
// gradient-free and gradient-carrying evaluations agree bit for bit.

#include <cmath>

#include "frodo/stats.hpp"

namespace frodo {

template <class TX, class TS>
auto prior_normal(const TX& x, double mu, const TS& sigma) {
  using std::log;
  auto z = (x - mu) / sigma;
  return -kHalfLog2Pi - log(sigma) - 0.5 * z * z;
}

template <class T>
auto prior_half_normal(const T& x, double scale) {
  auto z = x / scale;
  return (kLogHalfNormalUnit - std::log(scale)) - 0.5 * z * z;
}

template <class T>
auto prior_exponential(const T& x, double rate) {
  return std::log(rate) - rate * x;
}

// Gamma log density with fixed shape and rate.
template <class T>
auto prior_gamma(const T& x, double shape, double rate) {
  using std::log;
  return (shape * std::log(rate) - std::lgamma(shape)) +
         (shape - 1.0) * log(x) - rate * x;
}

}  // namespace frodo
