#include "frodo/model.hpp"

#include <cmath>
#include <string>

namespace frodo {

std::vector<double> finite_difference(std::span<const double> c, int r) {
  const int n = static_cast<int>(c.size());
  if (r < 1) throw config_error("difference order must be at least 1");
  if (r >= n) {
    throw config_error("difference order " + std::to_string(r) +
                       " requires a sequence longer than " + std::to_string(r));
  }
  // Pascal row for the signed binomial weights of the r-th difference.
  std::vector<double> binom(static_cast<std::size_t>(r) + 1, 0.0);
  binom[0] = 1.0;
  for (int row = 1; row <= r; ++row) {
    for (int j = row; j >= 1; --j) binom[j] += binom[j - 1];
  }
  std::vector<double> out(static_cast<std::size_t>(n - r));
  for (int k = 0; k < n - r; ++k) {
    double s = 0.0;
    for (int j = 0; j <= r; ++j) {
      const double sign = ((r - j) % 2 == 0) ? 1.0 : -1.0;
      s += sign * binom[static_cast<std::size_t>(j)] * c[k + j];
    }
    out[static_cast<std::size_t>(k)] = s;
  }
  return out;
}

Eigen::MatrixXd decode_theta(const ParameterState& s, const ModelConfig& cfg) {
  const int N = static_cast<int>(s.log_tau.size());
  const int K = cfg.K();
  const int r = cfg.r;
  const double h = cfg.domain.h();
  const double a = cfg.domain.a;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(N, K);
  const double inv_var_x =
      r == 3 ? 1.0 / sq(std::exp(s.log_sigma_x)) : 0.0;
  for (int i = 0; i < N; ++i) {
    const double tau = std::exp(s.log_tau[i]);
    if (r == 3) {
      theta(i, 1) = h * (s.xi[i] - (a + h)) * inv_var_x + tau * s.eta_free(i, 0);
      theta(i, 2) =
          2.0 * h * (s.xi[i] - (a + 1.5 * h)) * inv_var_x +
          tau * s.eta_free(i, 1);
      for (int k = 3; k < K; ++k) {
        theta(i, k) = 3.0 * theta(i, k - 1) - 3.0 * theta(i, k - 2) +
                      theta(i, k - 3) + tau * s.eta_rw(i, k - 3);
      }
    } else if (r == 2) {
      const double lambda = std::exp(s.log_lambda[i]);
      theta(i, 1) = -lambda * h + tau * s.eta_free(i, 0);
      for (int k = 2; k < K; ++k) {
        theta(i, k) =
            2.0 * theta(i, k - 1) - theta(i, k - 2) + tau * s.eta_rw(i, k - 2);
      }
    } else {
      for (int k = 1; k < K; ++k) {
        theta(i, k) = theta(i, k - 1) + tau * s.eta_rw(i, k - 1);
      }
    }
  }
  return theta;
}

Eigen::VectorXd density_coefficients(const Eigen::VectorXd& theta_row,
                                     double h) {
  if (!(h > 0.0)) throw config_error("bin width must be positive");
  const double m = theta_row.maxCoeff();
  const Eigen::ArrayXd e = (theta_row.array() - m).exp();
  return (e / (h * e.sum())).matrix();
}

double multinomial_loglik(const Eigen::VectorXd& m, const Eigen::VectorXd& phi,
                          double h) {
  double s = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    if (m[k] > 0.0) s += m[k] * std::log(h * phi[k]);
  }
  return s;
}

double log_multinomial_coefficient(const Eigen::VectorXd& m) {
  double s = std::lgamma(m.sum() + 1.0);
  for (int k = 0; k < m.size(); ++k) s -= std::lgamma(m[k] + 1.0);
  return s;
}

Eigen::VectorXd empirical_central_density(const BinnedCovariates& binned) {
  const double total = binned.counts.sum();
  if (!(total > 0.0)) {
    throw data_error("cannot form the pooled histogram from all-zero counts");
  }
  return binned.counts.colwise().sum().transpose() / total;
}

Eigen::VectorXd center_beta(const Eigen::VectorXd& beta0,
                            const Eigen::VectorXd& w) {
  const double wbar = w.dot(beta0);
  return beta0.array() - wbar;
}

double regression_mean(double alpha, const Eigen::VectorXd& beta,
                       const Eigen::VectorXd& phi_row, double h,
                       std::optional<double> beta_z, std::optional<double> z) {
  if (beta_z.has_value() != z.has_value()) {
    throw config_error(
        "scalar covariate coefficient and value must be given together");
  }
  double mu = alpha + h * beta.dot(phi_row);
  if (beta_z.has_value()) mu += *beta_z * *z;
  return mu;
}

double decode_sigma_y(const ParameterState& s) {
  return kInvSqrt2 * std::fabs(s.sigma_y_z) /
         std::sqrt(std::exp(s.log_sigma_y_g));
}

Eigen::VectorXd decode_beta0(const ParameterState& s, const ModelConfig& cfg) {
  const int K = cfg.K();
  const double h = cfg.domain.h();
  const double sigma_y = decode_sigma_y(s);
  const double tau_beta = std::exp(s.log_tau_beta);
  Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(K);
  beta0[1] = 20.0 * h * sigma_y * s.beta0_free;
  for (int k = 2; k < K; ++k) {
    beta0[k] = 2.0 * beta0[k - 1] - beta0[k - 2] +
               tau_beta * sigma_y * s.beta0_rw[k - 2];
  }
  return beta0;
}

FrodoModel::FrodoModel(const BinnedCovariates& binned, Eigen::VectorXd y,
                       std::optional<Eigen::VectorXd> z, ModelConfig cfg,
                       Mode mode)
    : cfg_(std::move(cfg)), mode_(mode) {
  const int N = binned.n_groups();
  const int K = cfg_.K();
  cfg_.validate(N);
  if (N > 0 && binned.counts.cols() != K) {
    throw data_error("binned covariates do not match the configured bin count");
  }
  if (y.size() != N) {
    throw data_error("response vector length does not match the group count");
  }
  if (z.has_value() != cfg_.has_scalar_covariate) {
    throw config_error(
        "scalar covariate data and configuration flag must agree");
  }
  if (z.has_value() && z->size() != N) {
    throw data_error("scalar covariate length does not match the group count");
  }
  lay_ = ParamLayout(N, K, cfg_.r, cfg_.has_scalar_covariate);
  h_ = cfg_.domain.h();
  a_ = cfg_.domain.a;
  mu_xi_sd_ = 15.0 / static_cast<double>(K * K);

  counts_.resize(static_cast<std::size_t>(N) * K);
  n_.resize(static_cast<std::size_t>(N));
  delta_.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    double row_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      const double m = binned.counts(i, k);
      if (m < 0.0) throw data_error("bin counts must be nonnegative");
      counts_[static_cast<std::size_t>(i) * K + k] = m;
      row_sum += m;
    }
    n_[static_cast<std::size_t>(i)] = binned.n[i];
    if (std::fabs(row_sum - binned.n[i]) > 1e-6) {
      throw data_error("bin counts of group " + std::to_string(i + 1) +
                       " do not sum to its sample size");
    }
    delta_[static_cast<std::size_t>(i)] = cfg_.delta_for(i);
  }
  y_.assign(y.data(), y.data() + y.size());
  if (z.has_value()) z_.assign(z->data(), z->data() + z->size());

  if (mode_ == Mode::kTarget && N > 0) {
    w_ = empirical_central_density(binned);
  } else {
    w_ = Eigen::VectorXd::Zero(K);
  }
  w_flat_.assign(w_.data(), w_.data() + w_.size());

  multinomial_const_ = 0.0;
  for (int i = 0; i < N; ++i) {
    multinomial_const_ += log_multinomial_coefficient(binned.counts.row(i));
  }
}

double log_prior(const ParameterState& s, const ModelConfig& cfg) {
  const int N = static_cast<int>(s.log_tau.size());
  const int K = cfg.K();
  BinnedCovariates dummy;
  dummy.counts = Eigen::MatrixXd::Zero(N, K);
  dummy.n = Eigen::VectorXd::Zero(N);
  std::optional<Eigen::VectorXd> z;
  if (cfg.has_scalar_covariate) z = Eigen::VectorXd::Zero(N);
  FrodoModel m(dummy, Eigen::VectorXd::Zero(N), z, cfg,
               FrodoModel::Mode::kPriorOnly);
  const Eigen::VectorXd q = flatten(s, m.layout());
  return m.eval_t<double>(std::span<const double>(q.data(), q.size()));
}

double log_posterior(const ParameterState& s, const BinnedCovariates& binned,
                     const Eigen::VectorXd& y,
                     const std::optional<Eigen::VectorXd>& z,
                     const ModelConfig& cfg) {
  if (binned.n_groups() == 0) return log_prior(s, cfg);
  FrodoModel m(binned, y, z, cfg);
  const Eigen::VectorXd q = flatten(s, m.layout());
  return m.eval_t<double>(std::span<const double>(q.data(), q.size()));
}

}  // namespace frodo
