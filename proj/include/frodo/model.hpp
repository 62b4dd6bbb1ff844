#pragma once

// The joint model: per-group histogram densities with random-walk priors of
// order r, an optional latent location/rate block, and a functional
// regression of the group responses on the densities through a centered
// piecewise-constant coefficient function.
//
// Sampling runs on the unconstrained non-centered vector described in
// layout.hpp.  The log target drops the multinomial combinatorial constant
// (parameter-free); multinomial_constant() restores it for reporting.

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "frodo/gradient.hpp"
#include "frodo/layout.hpp"
#include "frodo/lpdf.hpp"
#include "frodo/types.hpp"

namespace frodo {

inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

inline double const_like(std::span<const double>, double c) { return c; }
inline Var const_like(std::span<const Var> q, double c) {
  Tape& t = *q[0].tape;
  return {&t, t.push0(c), c};
}

// --- standalone model operations (double precision, reporting/tests) ------

// r-th order forward difference of a sequence; result has size() - r entries.
std::vector<double> finite_difference(std::span<const double> c, int r);

Eigen::MatrixXd decode_theta(const ParameterState& s, const ModelConfig& cfg);

// Softmax of a theta row scaled to integrate to one against bin width h.
Eigen::VectorXd density_coefficients(const Eigen::VectorXd& theta_row,
                                     double h);

// sum_k m_k log(h phi_k), the multinomial log likelihood without its
// combinatorial constant.  Zero-count cells contribute nothing.
double multinomial_loglik(const Eigen::VectorXd& m, const Eigen::VectorXd& phi,
                          double h);

double log_multinomial_coefficient(const Eigen::VectorXd& m);

// Bin weights of the pooled covariate histogram (sum to one).
Eigen::VectorXd empirical_central_density(const BinnedCovariates& binned);

Eigen::VectorXd center_beta(const Eigen::VectorXd& beta0,
                            const Eigen::VectorXd& w);

double regression_mean(double alpha, const Eigen::VectorXd& beta,
                       const Eigen::VectorXd& phi_row, double h,
                       std::optional<double> beta_z = std::nullopt,
                       std::optional<double> z = std::nullopt);

double decode_sigma_y(const ParameterState& s);
Eigen::VectorXd decode_beta0(const ParameterState& s, const ModelConfig& cfg);

double log_prior(const ParameterState& s, const ModelConfig& cfg);
double log_posterior(const ParameterState& s, const BinnedCovariates& binned,
                     const Eigen::VectorXd& y,
                     const std::optional<Eigen::VectorXd>& z,
                     const ModelConfig& cfg);

// --- the sampling target --------------------------------------------------

class FrodoModel : public LogDensity {
 public:
  enum class Mode { kTarget, kPriorOnly };

  FrodoModel(const BinnedCovariates& binned, Eigen::VectorXd y,
             std::optional<Eigen::VectorXd> z, ModelConfig cfg,
             Mode mode = Mode::kTarget);

  int dim() const override { return lay_.dim(); }
  std::unique_ptr<LogDensityEval> make_eval() const override {
    return std::make_unique<TapeEval<FrodoModel>>(this);
  }

  const ParamLayout& layout() const { return lay_; }
  const ModelConfig& config() const { return cfg_; }
  const Eigen::VectorXd& central_weights() const { return w_; }
  double multinomial_constant() const { return multinomial_const_; }

  template <class T>
  T eval_t(std::span<const T> q) const;

 private:
  std::span<const double> counts_row(int i) const {
    return {counts_.data() + static_cast<std::size_t>(i) * lay_.K,
            static_cast<std::size_t>(lay_.K)};
  }

  ModelConfig cfg_;
  ParamLayout lay_;
  Mode mode_;
  std::vector<double> counts_;  // n_groups x K, row-major
  std::vector<double> n_, y_, z_, delta_;
  Eigen::VectorXd w_;           // empirical central density weights
  std::vector<double> w_flat_;  // same weights as a plain array
  double h_ = 0.0, a_ = 0.0;
  double mu_xi_sd_ = 1.0;
  double multinomial_const_ = 0.0;
};

template <class T>
T FrodoModel::eval_t(std::span<const T> q) const {
  using std::exp;
  using std::fabs;
  using std::log;
  using std::sqrt;
  const ParamLayout& L = lay_;
  const int N = L.n_groups;
  const int K = L.K;
  const int r = L.r;
  const double h = h_;
  const bool prior_only = mode_ == Mode::kPriorOnly;

  LogProbAccum<T> acc;

  // Noise scale: sigma_Y = (1/sqrt(2)) |z| / sqrt(g), a half-t with 4
  // degrees of freedom; z and g carry their own priors and g its log
  // Jacobian.
  const T& zsig = q[L.sigma_y_z_off()];
  const T& graw = q[L.log_sigma_y_g_off()];
  T g = exp(graw);
  acc.add(prior_normal(zsig, 0.0, 1.0));
  acc.add(prior_gamma(g, 2.0, 2.0));
  acc.add(graw);
  T sigma_y = kInvSqrt2 * fabs(zsig) / sqrt(g);
  T log_sigma_y = log(sigma_y);

  // Regression block scalars.
  const T& alpha = q[L.alpha_off()];
  T coef_scale = 20.0 * sigma_y;
  acc.add(prior_normal(alpha, 0.0, coef_scale));
  if (L.has_z) acc.add(prior_normal(q[L.beta_z_off()], 0.0, coef_scale));
  const T& tbraw = q[L.log_tau_beta_off()];
  T tau_beta = exp(tbraw);
  acc.add(tau_beta, -2.0);  // exponential(2) prior on tau_beta ...
  acc.add_const(std::log(2.0));
  acc.add(tbraw);  // ... plus the log-scale Jacobian
  acc.add(prior_normal(q[L.beta0_free_off()], 0.0, 1.0));
  if (K > 2) {
    acc.add(sum_sq(q.subspan(L.beta0_rw_off(), K - 2)), -0.5);
    acc.add_const(-static_cast<double>(K - 2) * kHalfLog2Pi);
  }

  // Coefficient function: beta0_1 = 0, beta0_2 non-centered at scale
  // 20 h sigma_Y, second differences at scale tau_beta sigma_Y, then the
  // identifiability centering against the pooled histogram weights.
  std::vector<T> beta(K);
  if (!prior_only) {
    std::vector<T> beta0(K);
    beta0[0] = const_like(q, 0.0);
    beta0[1] = (20.0 * h) * sigma_y * q[L.beta0_free_off()];
    T rw_scale = tau_beta * sigma_y;
    for (int k = 2; k < K; ++k) {
      beta0[k] =
          rw2(beta0[k - 1], beta0[k - 2], rw_scale, q[L.beta0_rw_off() + k - 2]);
    }
    T wbar = dot_w(std::span<const double>(w_flat_),
                   std::span<const T>(beta0.data(), beta0.size()));
    for (int k = 0; k < K; ++k) beta[k] = beta0[k] - wbar;
  }

  // Latent location / rate block.
  T inv_var_x;
  if (r == 3) {
    const T& sxraw = q[L.log_sigma_x_off()];
    T sigma_x = exp(sxraw);
    acc.add(prior_half_normal(sigma_x, 1.0));
    acc.add(sxraw);
    const T& sxiraw = q[L.log_sigma_xi_off()];
    T sigma_xi = exp(sxiraw);
    acc.add(prior_half_normal(sigma_xi, 1.0));
    acc.add(sxiraw);
    const T& mu_xi = q[L.mu_xi_off()];
    acc.add(prior_normal(mu_xi, cfg_.mu_xi_prior_mean, mu_xi_sd_));
    for (int i = 0; i < N; ++i) {
      acc.add(normal_lpdf_4(q[L.xi_off() + i], mu_xi, sigma_xi, sxiraw));
    }
    inv_var_x = 1.0 / (sigma_x * sigma_x);
  }
  std::vector<T> lambda;
  if (r == 2) {
    const T& mlraw = q[L.log_mu_lambda_off()];
    T mu_l = exp(mlraw);
    acc.add(prior_half_normal(mu_l, 1.0));
    acc.add(mlraw);
    const T& alraw = q[L.log_alpha_lambda_off()];
    T alpha_l = exp(alraw);
    acc.add(prior_half_normal(alpha_l, 10.0));
    acc.add(alraw);
    T rate_l = alpha_l / mu_l;
    lambda.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
      const T& lraw = q[L.log_lambda_off() + i];
      lambda[static_cast<std::size_t>(i)] = exp(lraw);
      acc.add(gamma_lpdf_f(lambda[static_cast<std::size_t>(i)], alpha_l,
                           rate_l));
      acc.add(lraw);
    }
  }

  // Groups.
  std::vector<T> theta(K);
  T zero = const_like(q, 0.0);
  const std::span<const T> beta_span(beta.data(), beta.size());
  const std::span<const T> theta_span(theta.data(), theta.size());
  for (int i = 0; i < N; ++i) {
    acc.add(sum_sq(q.subspan(L.group_off(i), K - 1)), -0.5);
    acc.add_const(-static_cast<double>(K - 1) * kHalfLog2Pi);
    const T& ltraw = q[L.log_tau_off(i)];
    T tau = exp(ltraw);
    const double tau_rate = 1.0 / delta_[static_cast<std::size_t>(i)];
    acc.add(tau, -tau_rate);  // exponential(1/delta) prior on tau ...
    acc.add_const(std::log(tau_rate));
    acc.add(ltraw);  // ... plus the log-scale Jacobian
    if (prior_only) continue;

    theta[0] = zero;
    if (r == 3) {
      const T& xi = q[L.xi_off() + i];
      theta[1] =
          theta_free3(h, xi, a_ + h, inv_var_x, tau, q[L.eta_free_off(i)]);
      theta[2] = theta_free3(2.0 * h, xi, a_ + 1.5 * h, inv_var_x, tau,
                             q[L.eta_free_off(i) + 1]);
      for (int k = 3; k < K; ++k) {
        theta[k] = rw3(theta[k - 1], theta[k - 2], theta[k - 3], tau,
                       q[L.eta_rw_off(i) + k - 3]);
      }
    } else if (r == 2) {
      theta[1] = theta_free2(lambda[static_cast<std::size_t>(i)], h, tau,
                             q[L.eta_free_off(i)]);
      for (int k = 2; k < K; ++k) {
        theta[k] =
            rw2(theta[k - 1], theta[k - 2], tau, q[L.eta_rw_off(i) + k - 2]);
      }
    } else {
      for (int k = 1; k < K; ++k) {
        theta[k] = rw1(theta[k - 1], tau, q[L.eta_rw_off(i) + k - 1]);
      }
    }

    const GroupTerms<T> gt = group_terms(
        counts_row(i), n_[static_cast<std::size_t>(i)], beta_span, theta_span);
    acc.add(gt.loglik);

    T mu = alpha + gt.fmean;
    if (L.has_z) {
      mu = mu + q[L.beta_z_off()] * z_[static_cast<std::size_t>(i)];
    }
    acc.add(normal_lpdf_ls(y_[static_cast<std::size_t>(i)], mu, sigma_y,
                           log_sigma_y));
  }
  return acc.total();
}

}  // namespace frodo
