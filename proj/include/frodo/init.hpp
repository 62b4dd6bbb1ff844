#pragma once

// Chain initialization: penalized Poisson fits of each group's bin counts,
// algebraic inversion of the fitted log-density shapes into the non-centered
// parameterization, and jittered per-chain starting points that are verified
// to have a finite log density and gradient.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "frodo/gradient.hpp"
#include "frodo/layout.hpp"
#include "frodo/model.hpp"
#include "frodo/rng.hpp"
#include "frodo/types.hpp"

namespace frodo {

struct InitSettings {
  double lambda_init = 1.0;  // ridge weight for the smoothness penalty
  int max_iter = 100;        // Newton iteration cap for the penalized fit
  double theta_noise = 0.1;  // sd of the Gaussian jitter on innovations
  double tau_shape = 2.0;    // shape of the fresh Gamma draws for tau_i
  double scale_shape = 2.0;  // shape of the fresh Gamma draws for scales
  int max_retries = 20;      // attempts to find a finite starting point

  // Zero jitter scales are allowed and disable the corresponding
  // perturbation, which makes jittering the identity map.
  void validate() const;
};

// Result of one penalized Poisson log-density fit.  theta holds K values
// with theta[0] == 0.  objective is the penalized log-likelihood at the
// (unshifted) optimum; when the fit does not converge, theta falls back to
// the uniform shape and converged is false.
struct PsplineFit {
  Eigen::VectorXd theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = true;
};

// Maximizes sum_k [m_k theta_k - exp(theta_k)] - (lambda/2) ||D_r theta||^2
// by Newton iteration with backtracking, stopping when the gradient norm
// drops below 1e-8.
PsplineFit pspline_poisson_fit(const Eigen::VectorXd& counts, int r,
                               double lambda_init, int max_iter = 100);

// Method-of-moments guesses for the latent block and the smoothing scales,
// computed from the (already standardized) dataset.
struct PreliminaryEstimates {
  Eigen::VectorXd tau;  // per group, positive

  Eigen::VectorXd xi;  // r = 3: group sample means
  double mu_xi = 0.0;
  double sigma_xi = 1.0;
  double sigma_x = 1.0;

  Eigen::VectorXd lambda;  // r = 2: 1 / (group mean - a)
  double mu_lambda = 1.0;
  double alpha_lambda = 1.0;
};

PreliminaryEstimates preliminary_estimates(const GroupedDataset& data,
                                           const ModelConfig& cfg);

// Solves for the innovations that make decode_theta reproduce theta_hat
// exactly under the supplied latent guesses.  Non-positive tau guesses are
// clamped to 1e-3 (a warning is recorded when `warnings` is provided).
ParameterState invert_to_noncentered(const Eigen::MatrixXd& theta_hat,
                                     const ModelConfig& cfg,
                                     const PreliminaryEstimates& prelim,
                                     std::vector<std::string>* warnings =
                                         nullptr);

struct InitResult {
  ParameterState state;
  int pspline_fallbacks = 0;
  std::vector<std::string> warnings;
};

// Penalized fits for every group followed by inversion; the single
// deterministic center from which chain starts are jittered.
InitResult base_init(const BinnedCovariates& binned,
                     const GroupedDataset& data, const ModelConfig& cfg,
                     const InitSettings& settings);

// Adds Gaussian noise to the innovation coordinates and redraws the
// smoothing/scale parameters from Gamma distributions centered on the base
// values, retrying until the target's log density and gradient are finite.
ParameterState jitter_init(const ParameterState& base, const ModelConfig& cfg,
                           const LogDensity& target,
                           const InitSettings& settings, Rng& rng);

// One finite-density starting vector per chain, each from an independent
// jitter stream derived from (seed, chain).
std::vector<Eigen::VectorXd> jittered_starts(const ParameterState& base,
                                             const FrodoModel& model,
                                             const InitSettings& settings,
                                             int n_chains, std::uint64_t seed);

}  // namespace frodo
