#pragma once

// Scalar comparison models fit with the same sampler stack as the main
// model: a naive regression on derived group-level covariates (linear,
// spline, or transformed variants) and a hierarchical model that assumes the
// scenario's true parametric family with all parameters unknown.
//
// All of them share the main model's regression-block priors — coefficients
// N(0, 20 sigma_Y), half-t noise scale — so differences between fits isolate
// how the covariate uncertainty is treated.

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frodo/diagnostics.hpp"
#include "frodo/gradient.hpp"
#include "frodo/lpdf.hpp"
#include "frodo/model.hpp"
#include "frodo/sampler.hpp"
#include "frodo/simulate.hpp"
#include "frodo/types.hpp"

namespace frodo {

enum class BaselineKind {
  naive_linear,
  naive_gam,
  naive_transformed,
  hierarchical,
};

std::string to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Bayesian linear regression on fixed features.
// Layout: [alpha, coef_1..coef_p, sigma_y_z, log_sigma_y_g].
class NaiveModel : public LogDensity {
 public:
  NaiveModel(Eigen::MatrixXd design, Eigen::VectorXd y);

  int p() const { return static_cast<int>(cols_); }
  int dim() const override { return p() + 3; }
  int alpha_off() const { return 0; }
  int coef_off() const { return 1; }
  int sigma_y_z_off() const { return p() + 1; }
  int log_g_off() const { return p() + 2; }
  std::vector<std::string> names() const;

  std::unique_ptr<LogDensityEval> make_eval() const override {
    return std::make_unique<TapeEval<NaiveModel>>(this);
  }

  template <class T>
  T eval_t(std::span<const T> q) const;

 private:
  std::span<const double> row(int i) const {
    return {rows_flat_.data() + static_cast<std::size_t>(i) * cols_,
            static_cast<std::size_t>(cols_)};
  }

  std::vector<double> rows_flat_;  // row-major design matrix
  Eigen::VectorXd y_;
  long cols_ = 0;
};

// ---------------------------------------------------------------------------
// Spline regression on one derived covariate: a centered B-spline curve with
// a non-centered second-order random-walk prior on its coefficients,
// mirroring the main model's coefficient-function block.
// Layout: [alpha, gamma_free, gamma_rw (nb-2), log_tau_gamma, sigma_y_z,
//          log_sigma_y_g].
class GamModel : public LogDensity {
 public:
  // design must be column-centered so fitted curves average to zero over
  // groups; coef_spacing is the knot spacing used to scale gamma_2's prior.
  GamModel(Eigen::MatrixXd design, Eigen::VectorXd y, double coef_spacing);

  int n_basis() const { return static_cast<int>(cols_); }
  int dim() const override { return n_basis() + 3; }
  int alpha_off() const { return 0; }
  int gamma_free_off() const { return 1; }
  int gamma_rw_off() const { return 2; }  // nb-2 entries
  int log_tau_gamma_off() const { return n_basis(); }
  int sigma_y_z_off() const { return n_basis() + 1; }
  int log_g_off() const { return n_basis() + 2; }
  std::vector<std::string> names() const;

  std::unique_ptr<LogDensityEval> make_eval() const override {
    return std::make_unique<TapeEval<GamModel>>(this);
  }

  template <class T>
  T eval_t(std::span<const T> q) const;

 private:
  std::span<const double> row(int i) const {
    return {rows_flat_.data() + static_cast<std::size_t>(i) * cols_,
            static_cast<std::size_t>(cols_)};
  }

  std::vector<double> rows_flat_;
  Eigen::VectorXd y_;
  long cols_ = 0;
  double spacing_ = 1.0;
};

// ---------------------------------------------------------------------------
// The scenario's true generative family with latent group-level variables.
// The covariate likelihood enters through per-group sufficient statistics;
// the latent regressor is shifted and scaled by fixed constants so the
// shared coefficient priors stay appropriate.
class HierarchicalModel : public LogDensity {
 public:
  struct Data {
    Eigen::VectorXd y;    // standardized responses
    Eigen::VectorXd n;    // group sizes
    Eigen::VectorXd xbar; // standardized (gauss) or raw (exp) group means
    Eigen::VectorXd ss;   // gauss: within-group sums of squares
    Eigen::VectorXd sum_log_x;    // beta families, raw scale
    Eigen::VectorXd sum_log_1mx;  // beta families, raw scale
    std::optional<Eigen::VectorXd> z;  // group-level scalar covariate
    double c1_mean = 0.0, c1_sd = 1.0;  // primary regressor standardizer
    double c2_mean = 0.0, c2_sd = 1.0;  // secondary regressor standardizer
  };

  HierarchicalModel(Scenario sc, Data data);

  // Sufficient statistics and regressor standardizers from the raw dataset.
  static Data build_data(Scenario sc, const GroupedDataset& raw,
                         const StandardizationInfo& info);

  Scenario scenario() const { return sc_; }
  int n_groups() const { return static_cast<int>(d_.y.size()); }
  bool gauss_family() const {
    return sc_ == Scenario::gauss_linear || sc_ == Scenario::gauss_quadratic ||
           sc_ == Scenario::croon;
  }
  bool exp_family() const { return sc_ == Scenario::exp_linear; }
  int n_coefs() const { return sc_ == Scenario::gauss_quadratic ? 2 : 1; }
  bool has_z() const { return d_.z.has_value(); }

  int latent_off() const { return 0; }
  int hyper_off() const { return n_groups(); }
  int n_hyper() const {
    if (gauss_family()) return 3;  // mu_xi, log_sigma_xi, log_sigma_x
    if (exp_family()) return 2;    // log_mu_lambda, log_alpha_lambda
    return 0;
  }
  int reg_off() const { return hyper_off() + n_hyper(); }
  int alpha_off() const { return reg_off(); }
  int coef_off() const { return reg_off() + 1; }
  int sigma_y_z_off() const { return reg_off() + 1 + n_coefs(); }
  int log_g_off() const { return reg_off() + 2 + n_coefs(); }
  int beta_z_off() const { return reg_off() + 3 + n_coefs(); }
  int dim() const override {
    return reg_off() + 3 + n_coefs() + (has_z() ? 1 : 0);
  }
  std::vector<std::string> names() const;

  std::unique_ptr<LogDensityEval> make_eval() const override {
    return std::make_unique<TapeEval<HierarchicalModel>>(this);
  }

  template <class T>
  T eval_t(std::span<const T> q) const;

 private:
  Scenario sc_;
  Data d_;
};

// ---------------------------------------------------------------------------

struct ScalarSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double q025 = std::numeric_limits<double>::quiet_NaN();
  double q975 = std::numeric_limits<double>::quiet_NaN();
};

ScalarSummary summarize_scalar(std::vector<double> draws);

struct BaselineResult {
  BaselineKind kind = BaselineKind::naive_linear;
  Scenario scenario = Scenario::gauss_linear;
  StandardizationInfo info;

  std::vector<std::string> names;
  std::vector<ChainOutput> chains;
  std::vector<ParameterSummary> summaries;

  ScalarSummary sigma_y;  // original y units
  ScalarSummary slope;    // original units; NaN when no single slope exists
  ScalarSummary beta_z;   // original units; NaN unless the scenario has z

  long divergences = 0;
  double max_rhat = 0.0;
  double min_ess = 0.0;
};

// Fits the requested comparison model to the raw dataset: standardizes,
// derives covariates or sufficient statistics, samples with jittered finite
// starts, and returns diagnostics plus back-transformed scalar summaries.
BaselineResult fit_baseline(BaselineKind kind, Scenario scenario,
                            const GroupedDataset& raw,
                            const SamplerSettings& settings);

// --- template bodies -------------------------------------------------------

template <class T>
T NaiveModel::eval_t(std::span<const T> q) const {
  using std::exp;
  using std::fabs;
  using std::log;
  using std::sqrt;
  T lp = const_like(q, 0.0);

  const T& zsig = q[static_cast<std::size_t>(sigma_y_z_off())];
  const T& graw = q[static_cast<std::size_t>(log_g_off())];
  T g = exp(graw);
  lp = lp + prior_normal(zsig, 0.0, 1.0);
  lp = lp + (prior_gamma(g, 2.0, 2.0) + graw);
  T sigma_y = kInvSqrt2 * fabs(zsig) / sqrt(g);
  T log_sigma_y = log(sigma_y);

  T coef_scale = 20.0 * sigma_y;
  const T& alpha = q[static_cast<std::size_t>(alpha_off())];
  lp = lp + prior_normal(alpha, 0.0, coef_scale);
  const std::span<const T> coef =
      q.subspan(static_cast<std::size_t>(coef_off()),
                static_cast<std::size_t>(p()));
  for (int j = 0; j < p(); ++j) {
    lp = lp + prior_normal(coef[static_cast<std::size_t>(j)], 0.0, coef_scale);
  }

  const int N = static_cast<int>(y_.size());
  for (int i = 0; i < N; ++i) {
    T mu = alpha + dot_w(row(i), coef);
    lp = lp + normal_lpdf_ls(y_[i], mu, sigma_y, log_sigma_y);
  }
  return lp;
}

template <class T>
T GamModel::eval_t(std::span<const T> q) const {
  using std::exp;
  using std::fabs;
  using std::log;
  using std::sqrt;
  T lp = const_like(q, 0.0);

  const T& zsig = q[static_cast<std::size_t>(sigma_y_z_off())];
  const T& graw = q[static_cast<std::size_t>(log_g_off())];
  T g = exp(graw);
  lp = lp + prior_normal(zsig, 0.0, 1.0);
  lp = lp + (prior_gamma(g, 2.0, 2.0) + graw);
  T sigma_y = kInvSqrt2 * fabs(zsig) / sqrt(g);
  T log_sigma_y = log(sigma_y);

  T coef_scale = 20.0 * sigma_y;
  const T& alpha = q[static_cast<std::size_t>(alpha_off())];
  lp = lp + prior_normal(alpha, 0.0, coef_scale);

  const int nb = n_basis();
  lp = lp + prior_normal(q[static_cast<std::size_t>(gamma_free_off())], 0.0,
                         1.0);
  if (nb > 2) {
    lp = lp - 0.5 * sum_sq(q.subspan(static_cast<std::size_t>(gamma_rw_off()),
                                     static_cast<std::size_t>(nb - 2))) -
         static_cast<double>(nb - 2) * kHalfLog2Pi;
  }
  const T& tgraw = q[static_cast<std::size_t>(log_tau_gamma_off())];
  T tau_gamma = exp(tgraw);
  lp = lp + (prior_exponential(tau_gamma, 2.0) + tgraw);

  std::vector<T> gamma(static_cast<std::size_t>(nb));
  gamma[0] = const_like(q, 0.0);
  gamma[1] = (20.0 * spacing_) * sigma_y *
             q[static_cast<std::size_t>(gamma_free_off())];
  T rw_scale = tau_gamma * sigma_y;
  for (int k = 2; k < nb; ++k) {
    gamma[static_cast<std::size_t>(k)] =
        rw2(gamma[static_cast<std::size_t>(k - 1)],
            gamma[static_cast<std::size_t>(k - 2)], rw_scale,
            q[static_cast<std::size_t>(gamma_rw_off() + k - 2)]);
  }
  const std::span<const T> gspan(gamma.data(), gamma.size());

  const int N = static_cast<int>(y_.size());
  for (int i = 0; i < N; ++i) {
    T mu = alpha + dot_w(row(i), gspan);
    lp = lp + normal_lpdf_ls(y_[i], mu, sigma_y, log_sigma_y);
  }
  return lp;
}

template <class T>
T HierarchicalModel::eval_t(std::span<const T> q) const {
  using std::exp;
  using std::fabs;
  using std::lgamma;
  using std::log;
  using std::sqrt;
  T lp = const_like(q, 0.0);
  const int N = n_groups();

  const T& zsig = q[static_cast<std::size_t>(sigma_y_z_off())];
  const T& graw = q[static_cast<std::size_t>(log_g_off())];
  T g = exp(graw);
  lp = lp + prior_normal(zsig, 0.0, 1.0);
  lp = lp + (prior_gamma(g, 2.0, 2.0) + graw);
  T sigma_y = kInvSqrt2 * fabs(zsig) / sqrt(g);
  T log_sigma_y = log(sigma_y);

  T coef_scale = 20.0 * sigma_y;
  const T& alpha = q[static_cast<std::size_t>(alpha_off())];
  lp = lp + prior_normal(alpha, 0.0, coef_scale);
  for (int j = 0; j < n_coefs(); ++j) {
    lp = lp + prior_normal(q[static_cast<std::size_t>(coef_off() + j)], 0.0,
                           coef_scale);
  }
  if (has_z()) {
    lp = lp + prior_normal(q[static_cast<std::size_t>(beta_z_off())], 0.0,
                           coef_scale);
  }

  const T& b1 = q[static_cast<std::size_t>(coef_off())];

  if (gauss_family()) {
    const T& mu_xi = q[static_cast<std::size_t>(hyper_off())];
    const T& sxiraw = q[static_cast<std::size_t>(hyper_off() + 1)];
    const T& sxraw = q[static_cast<std::size_t>(hyper_off() + 2)];
    T sigma_xi = exp(sxiraw);
    T sigma_x = exp(sxraw);
    lp = lp + prior_normal(mu_xi, 0.0, 5.0);
    lp = lp + (prior_half_normal(sigma_xi, 1.0) + sxiraw);
    lp = lp + (prior_half_normal(sigma_x, 1.0) + sxraw);
    T inv_var_x = 1.0 / (sigma_x * sigma_x);
    for (int i = 0; i < N; ++i) {
      const T& xi = q[static_cast<std::size_t>(latent_off() + i)];
      lp = lp + normal_lpdf_4(xi, mu_xi, sigma_xi, sxiraw);
      const double n_i = d_.n[i];
      // Group mean and within-group scatter as sufficient statistics.
      T sd_mean = sigma_x / std::sqrt(n_i);
      T log_sd_mean = sxraw - 0.5 * std::log(n_i);
      lp = lp + normal_lpdf_ls(d_.xbar[i], xi, sd_mean, log_sd_mean);
      if (n_i > 1.0) {
        lp = lp - (n_i - 1.0) * sxraw - 0.5 * d_.ss[i] * inv_var_x;
      }
      T u = (xi - d_.c1_mean) * (1.0 / d_.c1_sd);
      T mu = alpha + b1 * u;
      if (n_coefs() == 2) {
        T u2 = (xi * xi - d_.c2_mean) * (1.0 / d_.c2_sd);
        mu = mu + q[static_cast<std::size_t>(coef_off() + 1)] * u2;
      }
      if (has_z()) {
        mu = mu + q[static_cast<std::size_t>(beta_z_off())] * (*d_.z)[i];
      }
      lp = lp + normal_lpdf_ls(d_.y[i], mu, sigma_y, log_sigma_y);
    }
  } else if (exp_family()) {
    const T& mlraw = q[static_cast<std::size_t>(hyper_off())];
    const T& alraw = q[static_cast<std::size_t>(hyper_off() + 1)];
    T mu_l = exp(mlraw);
    T alpha_l = exp(alraw);
    lp = lp + (prior_half_normal(mu_l, 1.0) + mlraw);
    lp = lp + (prior_half_normal(alpha_l, 10.0) + alraw);
    T rate_l = alpha_l / mu_l;
    for (int i = 0; i < N; ++i) {
      const T& lraw = q[static_cast<std::size_t>(latent_off() + i)];
      T lambda = exp(lraw);
      lp = lp + (gamma_lpdf_f(lambda, alpha_l, rate_l) + lraw);
      lp = lp + (d_.n[i] * lraw - (d_.n[i] * d_.xbar[i]) * lambda);
      T u = (1.0 / lambda - d_.c1_mean) * (1.0 / d_.c1_sd);
      T mu = alpha + b1 * u;
      lp = lp + normal_lpdf_ls(d_.y[i], mu, sigma_y, log_sigma_y);
    }
  } else if (sc_ == Scenario::beta_linear) {
    for (int i = 0; i < N; ++i) {
      const T& raw = q[static_cast<std::size_t>(latent_off() + i)];
      T em = exp(-raw);
      T s = 1.0 / (1.0 + em);
      // Uniform prior on the latent mean: only the logistic Jacobian.
      lp = lp + (2.0 * log(s) - raw);
      T one_m = 1.0 - s;
      lp = lp + ((s - 1.0) * d_.sum_log_x[i] - s * d_.sum_log_1mx[i] -
                 d_.n[i] * (lgamma(s) + lgamma(one_m)));
      T u = (s - d_.c1_mean) * (1.0 / d_.c1_sd);
      T mu = alpha + b1 * u;
      lp = lp + normal_lpdf_ls(d_.y[i], mu, sigma_y, log_sigma_y);
    }
  } else {  // beta_quadratic
    for (int i = 0; i < N; ++i) {
      const T& raw = q[static_cast<std::size_t>(latent_off() + i)];
      T xi = exp(raw);
      lp = lp + (prior_half_normal(xi, 2.5) + raw);
      lp = lp + ((xi - 1.0) * (d_.sum_log_x[i] + d_.sum_log_1mx[i]) -
                 d_.n[i] * (2.0 * lgamma(xi) - lgamma(2.0 * xi)));
      T v = 1.0 + 1.0 / (2.0 * xi + 1.0);
      T u = (v - d_.c1_mean) * (1.0 / d_.c1_sd);
      T mu = alpha + b1 * u;
      lp = lp + normal_lpdf_ls(d_.y[i], mu, sigma_y, log_sigma_y);
    }
  }
  return lp;
}

}  // namespace frodo
