#pragma once

// Reverse-mode automatic differentiation on a flat tape.
//
// Every intermediate value is a node holding its primal value and a compact
// record of (argument index, local partial) pairs stored in side arrays.  A
// single backward sweep accumulates adjoints.  Hot model operations (log-sum-
// exp, dot products, random-walk steps, fused log densities) are recorded as
// one n-ary node each, which keeps the tape short and the sweep cache-friendly.
//
// The primal value of every Var operation is computed by the same floating
// point expression as the plain-double overload, so a value computed through
// the tape is bit-identical to one computed without it.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "frodo/stats.hpp"

namespace frodo {

class Tape {
 public:
  struct Rec {
    std::int32_t off;
    std::int32_t n;
  };
  // Interleaving the argument index with its partial keeps the backward sweep
  // on one cache stream instead of two.
  struct Arg {
    std::int32_t idx;
    double w;
  };

  void clear() {
    val_.clear();
    rec_.clear();
    args_.clear();
  }

  std::int32_t add_input(double v) { return push0(v); }

  std::int32_t push0(double v) {
    val_.push_back(v);
    rec_.push_back({static_cast<std::int32_t>(args_.size()), 0});
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t push1(double v, std::int32_t a0, double w0) {
    args_.push_back({a0, w0});
    val_.push_back(v);
    rec_.push_back({static_cast<std::int32_t>(args_.size() - 1), 1});
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t push2(double v, std::int32_t a0, double w0, std::int32_t a1,
                     double w1) {
    args_.push_back({a0, w0});
    args_.push_back({a1, w1});
    val_.push_back(v);
    rec_.push_back({static_cast<std::int32_t>(args_.size() - 2), 2});
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t push3(double v, std::int32_t a0, double w0, std::int32_t a1,
                     double w1, std::int32_t a2, double w2) {
    args_.push_back({a0, w0});
    args_.push_back({a1, w1});
    args_.push_back({a2, w2});
    val_.push_back(v);
    rec_.push_back({static_cast<std::int32_t>(args_.size() - 3), 3});
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  // Begin an n-ary node: append (idx, w) pairs then seal with end_nary.
  void arg(std::int32_t a, double w) { args_.push_back({a, w}); }

  std::int32_t end_nary(double v, std::int32_t nargs) {
    val_.push_back(v);
    rec_.push_back({static_cast<std::int32_t>(args_.size()) - nargs, nargs});
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  double val(std::int32_t i) const { return val_[i]; }
  std::size_t size() const { return val_.size(); }
  std::size_t n_args() const { return args_.size(); }

  // Backward sweep from node `out` (adjoint seeded to 1).
  void reverse(std::int32_t out) {
    adj_.assign(val_.size(), 0.0);
    adj_[out] = 1.0;
    const Arg* args = args_.data();
    for (std::int32_t i = out; i >= 0; --i) {
      const double a = adj_[i];
      if (a == 0.0) continue;
      const Rec r = rec_[i];
      for (std::int32_t j = 0; j < r.n; ++j) {
        const Arg& ar = args[r.off + j];
        adj_[ar.idx] += a * ar.w;
      }
    }
  }

  double adj(std::int32_t i) const { return adj_[i]; }

  std::vector<double>& scratch() { return scratch_; }

 private:
  std::vector<double> val_;
  std::vector<Rec> rec_;
  std::vector<Arg> args_;
  std::vector<double> adj_;
  std::vector<double> scratch_;
};

struct Var {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
  double val = 0.0;
};

inline Var make_var(Tape& t, double v) { return {&t, t.add_input(v), v}; }

// --- arithmetic operators -------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  return {a.tape, a.tape->push2(a.val + b.val, a.idx, 1.0, b.idx, 1.0),
          a.val + b.val};
}
inline Var operator+(const Var& a, double b) {
  return {a.tape, a.tape->push1(a.val + b, a.idx, 1.0), a.val + b};
}
inline Var operator+(double a, const Var& b) { return b + a; }

inline Var operator-(const Var& a, const Var& b) {
  return {a.tape, a.tape->push2(a.val - b.val, a.idx, 1.0, b.idx, -1.0),
          a.val - b.val};
}
inline Var operator-(const Var& a, double b) {
  return {a.tape, a.tape->push1(a.val - b, a.idx, 1.0), a.val - b};
}
inline Var operator-(double a, const Var& b) {
  return {b.tape, b.tape->push1(a - b.val, b.idx, -1.0), a - b.val};
}
inline Var operator-(const Var& a) {
  return {a.tape, a.tape->push1(-a.val, a.idx, -1.0), -a.val};
}

inline Var operator*(const Var& a, const Var& b) {
  return {a.tape, a.tape->push2(a.val * b.val, a.idx, b.val, b.idx, a.val),
          a.val * b.val};
}
inline Var operator*(const Var& a, double b) {
  return {a.tape, a.tape->push1(a.val * b, a.idx, b), a.val * b};
}
inline Var operator*(double a, const Var& b) { return b * a; }

inline Var operator/(const Var& a, const Var& b) {
  const double v = a.val / b.val;
  return {a.tape, a.tape->push2(v, a.idx, 1.0 / b.val, b.idx, -v / b.val), v};
}
inline Var operator/(const Var& a, double b) {
  return {a.tape, a.tape->push1(a.val / b, a.idx, 1.0 / b), a.val / b};
}
inline Var operator/(double a, const Var& b) {
  const double v = a / b.val;
  return {b.tape, b.tape->push1(v, b.idx, -v / b.val), v};
}

// --- elementary functions -------------------------------------------------

inline Var exp(const Var& x) {
  const double v = std::exp(x.val);
  return {x.tape, x.tape->push1(v, x.idx, v), v};
}
inline Var log(const Var& x) {
  return {x.tape, x.tape->push1(std::log(x.val), x.idx, 1.0 / x.val),
          std::log(x.val)};
}
inline Var sqrt(const Var& x) {
  const double v = std::sqrt(x.val);
  return {x.tape, x.tape->push1(v, x.idx, 0.5 / v), v};
}
inline Var fabs(const Var& x) {
  const double s = x.val >= 0.0 ? 1.0 : -1.0;
  return {x.tape, x.tape->push1(std::fabs(x.val), x.idx, s), std::fabs(x.val)};
}
inline Var lgamma(const Var& x) {
  return {x.tape, x.tape->push1(std::lgamma(x.val), x.idx, digamma(x.val)),
          std::lgamma(x.val)};
}

// --- fused n-ary operations ----------------------------------------------
// Each has a plain-double overload computing the value with byte-identical
// arithmetic, used by the gradient-free evaluation path.

inline double lse_span(std::span<const double> x) { return log_sum_exp(x); }

inline Var lse_span(std::span<const Var> x) {
  Tape& t = *x[0].tape;
  double m = -HUGE_VAL;
  for (const Var& v : x) m = v.val > m ? v.val : m;
  std::vector<double>& e = t.scratch();
  e.resize(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i].val - m);
    s += e[i];
  }
  const double v = m + std::log(s);
  for (std::size_t i = 0; i < x.size(); ++i) t.arg(x[i].idx, e[i] / s);
  return {&t, t.end_nary(v, static_cast<std::int32_t>(x.size())), v};
}

// Weighted sum with constant weights.
inline double dot_w(std::span<const double> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}
inline Var dot_w(std::span<const double> w, std::span<const Var> x) {
  Tape& t = *x[0].tape;
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += w[i] * x[i].val;
    t.arg(x[i].idx, w[i]);
  }
  return {&t, t.end_nary(s, static_cast<std::int32_t>(w.size())), s};
}

inline double dot_vv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline Var dot_vv(std::span<const Var> a, std::span<const Var> b) {
  Tape& t = *a[0].tape;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].val * b[i].val;
    t.arg(a[i].idx, b[i].val);
    t.arg(b[i].idx, a[i].val);
  }
  return {&t, t.end_nary(s, static_cast<std::int32_t>(2 * a.size())), s};
}

inline double sum_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}
inline Var sum_sq(std::span<const Var> x) {
  Tape& t = *x[0].tape;
  double s = 0.0;
  for (const Var& v : x) {
    s += v.val * v.val;
    t.arg(v.idx, 2.0 * v.val);
  }
  return {&t, t.end_nary(s, static_cast<std::int32_t>(x.size())), s};
}

// exp(x - m): a softmax component given the log normalizer m.
inline double exp_diff(double x, double m) { return std::exp(x - m); }
inline Var exp_diff(const Var& x, const Var& m) {
  const double v = std::exp(x.val - m.val);
  return {x.tape, x.tape->push2(v, x.idx, v, m.idx, -v), v};
}

// Random-walk inversions: next value from previous ones plus tau * u.
inline double rw1(double a, double tau, double u) { return a + tau * u; }
inline Var rw1(const Var& a, const Var& tau, const Var& u) {
  const double v = a.val + tau.val * u.val;
  return {a.tape,
          a.tape->push3(v, a.idx, 1.0, tau.idx, u.val, u.idx, tau.val), v};
}

inline double rw2(double a, double b, double tau, double u) {
  return 2.0 * a - b + tau * u;
}
inline Var rw2(const Var& a, const Var& b, const Var& tau, const Var& u) {
  const double v = 2.0 * a.val - b.val + tau.val * u.val;
  Tape& t = *a.tape;
  t.arg(a.idx, 2.0);
  t.arg(b.idx, -1.0);
  t.arg(tau.idx, u.val);
  t.arg(u.idx, tau.val);
  return {&t, t.end_nary(v, 4), v};
}

inline double rw3(double a, double b, double c, double tau, double u) {
  return 3.0 * a - 3.0 * b + c + tau * u;
}
inline Var rw3(const Var& a, const Var& b, const Var& c, const Var& tau,
               const Var& u) {
  const double v = 3.0 * a.val - 3.0 * b.val + c.val + tau.val * u.val;
  Tape& t = *a.tape;
  t.arg(a.idx, 3.0);
  t.arg(b.idx, -3.0);
  t.arg(c.idx, 1.0);
  t.arg(tau.idx, u.val);
  t.arg(u.idx, tau.val);
  return {&t, t.end_nary(v, 5), v};
}

// coef * (xi - center) * invv + tau * u, the order-3 tail-mean step where
// invv carries 1 / sigma_X^2.
inline double theta_free3(double coef, double xi, double center, double invv,
                          double tau, double u) {
  return coef * (xi - center) * invv + tau * u;
}
inline Var theta_free3(double coef, const Var& xi, double center,
                       const Var& invv, const Var& tau, const Var& u) {
  const double v = coef * (xi.val - center) * invv.val + tau.val * u.val;
  Tape& t = *xi.tape;
  t.arg(xi.idx, coef * invv.val);
  t.arg(invv.idx, coef * (xi.val - center));
  t.arg(tau.idx, u.val);
  t.arg(u.idx, tau.val);
  return {&t, t.end_nary(v, 4), v};
}

// -lambda * h + tau * u, the order-2 negative-slope step.
inline double theta_free2(double lambda, double h, double tau, double u) {
  return -lambda * h + tau * u;
}
inline Var theta_free2(const Var& lambda, double h, const Var& tau,
                       const Var& u) {
  const double v = -lambda.val * h + tau.val * u.val;
  Tape& t = *lambda.tape;
  t.arg(lambda.idx, -h);
  t.arg(tau.idx, u.val);
  t.arg(u.idx, tau.val);
  return {&t, t.end_nary(v, 3), v};
}

// Gaussian log density with the log of sigma supplied separately so the
// logarithm is shared across observations.
inline double normal_lpdf_ls(double y, double mu, double sigma,
                             double log_sigma) {
  const double z = (y - mu) / sigma;
  return -kHalfLog2Pi - log_sigma - 0.5 * z * z;
}
inline Var normal_lpdf_ls(double y, const Var& mu, const Var& sigma,
                          const Var& log_sigma) {
  const double z = (y - mu.val) / sigma.val;
  const double v = -kHalfLog2Pi - log_sigma.val - 0.5 * z * z;
  Tape& t = *mu.tape;
  t.arg(mu.idx, z / sigma.val);
  t.arg(sigma.idx, z * z / sigma.val);
  t.arg(log_sigma.idx, -1.0);
  return {&t, t.end_nary(v, 3), v};
}

// Gaussian log density where every argument may be a parameter.
inline double normal_lpdf_4(double x, double mu, double sigma,
                            double log_sigma) {
  const double z = (x - mu) / sigma;
  return -kHalfLog2Pi - log_sigma - 0.5 * z * z;
}
inline Var normal_lpdf_4(const Var& x, const Var& mu, const Var& sigma,
                         const Var& log_sigma) {
  const double z = (x.val - mu.val) / sigma.val;
  const double v = -kHalfLog2Pi - log_sigma.val - 0.5 * z * z;
  Tape& t = *x.tape;
  t.arg(x.idx, -z / sigma.val);
  t.arg(mu.idx, z / sigma.val);
  t.arg(sigma.idx, z * z / sigma.val);
  t.arg(log_sigma.idx, -1.0);
  return {&t, t.end_nary(v, 4), v};
}

// Gamma(shape, rate) log density in one node (digamma enters the shape
// partial).
inline double gamma_lpdf_f(double x, double shape, double rate) {
  return gamma_lpdf(x, shape, rate);
}
inline Var gamma_lpdf_f(const Var& x, const Var& shape, const Var& rate) {
  const double v = gamma_lpdf(x.val, shape.val, rate.val);
  Tape& t = *x.tape;
  t.arg(x.idx, (shape.val - 1.0) / x.val - rate.val);
  t.arg(shape.idx,
        std::log(rate.val) - digamma(shape.val) + std::log(x.val));
  t.arg(rate.idx, shape.val / rate.val - x.val);
  return {&t, t.end_nary(v, 3), v};
}

// sum_k beta_k * exp(theta_k - L): the regression functional evaluated
// against a softmax density, fused into a single node.
inline double softmax_dot(std::span<const double> beta,
                          std::span<const double> theta, double L) {
  double s = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    s += beta[k] * std::exp(theta[k] - L);
  }
  return s;
}
inline Var softmax_dot(std::span<const Var> beta, std::span<const Var> theta,
                       const Var& L) {
  Tape& t = *L.tape;
  double s = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    const double sk = std::exp(theta[k].val - L.val);
    s += beta[k].val * sk;
    t.arg(beta[k].idx, sk);
    t.arg(theta[k].idx, beta[k].val * sk);
  }
  t.arg(L.idx, -s);
  return {&t, t.end_nary(s, static_cast<std::int32_t>(2 * beta.size() + 1)),
          s};
}

// a - n * b (multinomial assembly: dot(m, theta) - n * logsumexp).
inline double lin_minus(double a, double n, double b) { return a - n * b; }
inline Var lin_minus(const Var& a, double n, const Var& b) {
  const double v = a.val - n * b.val;
  return {a.tape, a.tape->push2(v, a.idx, 1.0, b.idx, -n), v};
}

// Per-group likelihood kernel: the multinomial term dot(c, theta) - n * lse
// and the softmax-weighted coefficient mean sum_k beta_k softmax(theta)_k,
// sharing a single pass over the exponentials.  Emits two nodes; the
// functional-mean partials are p_k for beta_k and (beta_k - fmean) p_k for
// theta_k, with p the softmax of theta.
template <class T>
struct GroupTerms {
  T loglik;
  T fmean;
};

inline GroupTerms<double> group_terms(std::span<const double> c, double n,
                                      std::span<const double> beta,
                                      std::span<const double> theta) {
  double m = -HUGE_VAL;
  for (double t : theta) m = t > m ? t : m;
  double s = 0.0, dot = 0.0, fnum = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double e = std::exp(theta[k] - m);
    s += e;
    dot += c[k] * theta[k];
    fnum += beta[k] * e;
  }
  const double L = m + std::log(s);
  return {dot - n * L, fnum / s};
}

inline GroupTerms<Var> group_terms(std::span<const double> c, double n,
                                   std::span<const Var> beta,
                                   std::span<const Var> theta) {
  Tape& t = *theta[0].tape;
  double m = -HUGE_VAL;
  for (const Var& v : theta) m = v.val > m ? v.val : m;
  std::vector<double>& e = t.scratch();
  e.resize(theta.size());
  double s = 0.0, dot = 0.0, fnum = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    e[k] = std::exp(theta[k].val - m);
    s += e[k];
    dot += c[k] * theta[k].val;
    fnum += beta[k].val * e[k];
  }
  const double L = m + std::log(s);
  const double loglik = dot - n * L;
  const double fmean = fnum / s;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    t.arg(theta[k].idx, c[k] - n * (e[k] / s));
  }
  GroupTerms<Var> out;
  out.loglik = {&t, t.end_nary(loglik, static_cast<std::int32_t>(theta.size())),
                loglik};
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double p = e[k] / s;
    t.arg(beta[k].idx, p);
    t.arg(theta[k].idx, (beta[k].val - fmean) * p);
  }
  out.fmean = {&t,
               t.end_nary(fmean, static_cast<std::int32_t>(2 * theta.size())),
               fmean};
  return out;
}

// Running sum of weighted log-probability terms, emitted as one unit node
// instead of a chain of pairwise additions.  Terms are added to the value in
// call order; the double instantiation is a plain running sum built from the
// same expressions, so the two evaluation paths stay consistent.
template <class T>
struct LogProbAccum;

template <>
struct LogProbAccum<double> {
  double v = 0.0;
  void add(double x) { v += x; }
  void add(double x, double w) { v += w * x; }
  void add_const(double c) { v += c; }
  double total() { return v; }
};

template <>
struct LogProbAccum<Var> {
  double v = 0.0;
  Tape* tape = nullptr;
  std::vector<Tape::Arg> terms;

  void add(const Var& x) {
    v += x.val;
    tape = x.tape;
    terms.push_back({x.idx, 1.0});
  }
  void add(const Var& x, double w) {
    v += w * x.val;
    tape = x.tape;
    terms.push_back({x.idx, w});
  }
  void add_const(double c) { v += c; }
  Var total() {
    for (const Tape::Arg& a : terms) tape->arg(a.idx, a.w);
    return {tape, tape->end_nary(v, static_cast<std::int32_t>(terms.size())),
            v};
  }
};

}  // namespace frodo
