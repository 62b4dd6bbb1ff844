#pragma once

// Log-density interface consumed by the sampler, plus the tape-backed
// evaluator that turns any scalar-templated model into value + gradient.
//
// A LogDensity describes a target distribution over an unconstrained vector;
// make_eval() hands out an evaluator with its own tape and scratch space, so
// concurrent chains never share mutable state.  A non-finite returned value
// signals an invalid point; the gradient is zeroed in that case.

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "frodo/tape.hpp"

namespace frodo {

class LogDensityEval {
 public:
  virtual ~LogDensityEval() = default;
  virtual int dim() const = 0;
  virtual double value_and_grad(std::span<const double> q,
                                std::span<double> grad) = 0;
  virtual double value(std::span<const double> q) = 0;
};

class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual int dim() const = 0;
  virtual std::unique_ptr<LogDensityEval> make_eval() const = 0;
};

// Evaluator for a model M exposing
//   template <class T> T eval_t(std::span<const T> q) const;
// with identical arithmetic for T = double and T = Var.
template <class M>
class TapeEval final : public LogDensityEval {
 public:
  explicit TapeEval(const M* model) : model_(model) {}

  int dim() const override { return model_->dim(); }

  double value_and_grad(std::span<const double> q,
                        std::span<double> grad) override {
    tape_.clear();
    inputs_.clear();
    inputs_.reserve(q.size());
    for (double v : q) inputs_.push_back(make_var(tape_, v));
    const Var out = model_->template eval_t<Var>(
        std::span<const Var>(inputs_.data(), inputs_.size()));
    if (!std::isfinite(out.val)) {
      for (auto& g : grad) g = 0.0;
      return out.val;
    }
    tape_.reverse(out.idx);
    for (std::size_t i = 0; i < q.size(); ++i) {
      grad[i] = tape_.adj(static_cast<std::int32_t>(i));
    }
    return out.val;
  }

  double value(std::span<const double> q) override {
    return model_->template eval_t<double>(q);
  }

 private:
  const M* model_;
  Tape tape_;
  std::vector<Var> inputs_;
};

// Adapts a templated functor F with call signature
//   template <class T> T operator()(std::span<const T>)
// to the model interface expected by TapeEval.
template <class F>
struct FunctorModel {
  const F* f;
  int d;
  int dim() const { return d; }
  template <class T>
  T eval_t(std::span<const T> x) const {
    return (*f)(x);
  }
};

// Convenience for tests: one-shot value and gradient of a templated functor.
template <class F>
double value_and_grad_of(const F& f, std::span<const double> q,
                         std::span<double> grad) {
  FunctorModel<F> shim{&f, static_cast<int>(q.size())};
  TapeEval<FunctorModel<F>> eval(&shim);
  return eval.value_and_grad(q, grad);
}

}  // namespace frodo
