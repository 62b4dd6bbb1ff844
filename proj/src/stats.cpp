#include "frodo/stats.hpp"

#include <algorithm>

namespace frodo {

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  std::sort(out.begin(), out.end());
  return out;
}

double quantile_of(std::span<const double> x, double p) {
  const std::vector<double> s = sorted_copy(x);
  return quantile_sorted(s, p);
}

}  // namespace frodo
