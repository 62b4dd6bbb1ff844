#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <frodo/sampler.hpp>
#include <frodo/types.hpp>

namespace frodo {

// Convergence diagnostics on rank-normalized split chains, plus the summary
// statistics reported for every parameter.  Draw matrices are S x C: one
// column per chain, one row per retained iteration.
//
// Degenerate inputs (zero within-chain variance after rank normalization)
// yield quiet NaN rather than a silently optimistic value; downstream gates
// treat NaN as a failure.

// Split-chain potential scale reduction factor on rank-normalized draws.
// Requires S >= 4 and C >= 1; each chain is split in half before the
// between/within variance comparison.
double split_rhat(const Eigen::MatrixXd& draws);

// Effective sample size of the pooled draws, using the per-chain
// autocorrelation estimator with Geyer pairwise truncation on
// rank-normalized split chains.  The raw value is returned; it can exceed
// S*C for anticorrelated chains (summaries cap it, this function does not).
double ess(const Eigen::MatrixXd& draws);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;      // capped at chains * sampling
  double ess_raw = 0.0;  // uncapped estimator
  double rhat = 0.0;
};

// Per-parameter posterior summaries over a set of chains.  names must have
// one entry per model dimension.  Quantiles are the 0.025/0.975 empirical
// quantiles with linear interpolation between order statistics, the same
// convention used everywhere in this project.
std::vector<ParameterSummary> summarize_draws(
    const std::vector<ChainOutput>& chains,
    const std::vector<std::string>& names);

// Pointwise posterior band of a vector-valued quantity: per-column mean and
// 0.025/0.975 quantiles.  draws is n_draws x K with one row per draw.
// Requires at least 100 draws.
struct FunctionalBand {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};
FunctionalBand functional_bands(const Eigen::MatrixXd& draws);

// Slope of the secant through the first and last bin means of a
// piecewise-constant coefficient function evaluated at bin midpoints:
// (mean_K - mean_1) / ((K - 1) h).  The caller is responsible for any
// standardization back-transform.
double secant_slope(const Eigen::VectorXd& beta_mean, const DomainSpec& domain);

}  // namespace frodo
