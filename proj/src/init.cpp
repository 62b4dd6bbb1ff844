#include "frodo/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "frodo/common.hpp"
#include "frodo/stats.hpp"

namespace frodo {

namespace {

constexpr double kGradTol = 1e-8;
constexpr double kScaleFloor = 1e-3;
constexpr std::uint64_t kInitStreamBase = 0x496e6974ull;

// Order-r forward difference operator as a (K-r) x K matrix.
Eigen::MatrixXd difference_matrix(int K, int r) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(K - r, K);
  std::vector<double> coef(static_cast<std::size_t>(r) + 1);
  for (int j = 0; j <= r; ++j) {
    double c = 1.0;
    for (int t = 0; t < j; ++t) c = c * (r - t) / (t + 1);
    coef[static_cast<std::size_t>(j)] = ((r - j) % 2 == 0 ? c : -c);
  }
  for (int i = 0; i < K - r; ++i) {
    for (int j = 0; j <= r; ++j) D(i, i + j) = coef[static_cast<std::size_t>(j)];
  }
  return D;
}

double clamp_scale(double v) {
  return (std::isfinite(v) && v > kScaleFloor) ? v : kScaleFloor;
}

}  // namespace

void InitSettings::validate() const {
  if (!(lambda_init > 0.0) || !std::isfinite(lambda_init)) {
    throw config_error("init: lambda_init must be positive");
  }
  if (max_iter < 1) throw config_error("init: max_iter must be at least 1");
  if (!(theta_noise >= 0.0) || !std::isfinite(theta_noise)) {
    throw config_error("init: theta_noise must be non-negative");
  }
  if (!(tau_shape >= 0.0) || !std::isfinite(tau_shape)) {
    throw config_error("init: tau_shape must be non-negative");
  }
  if (!(scale_shape >= 0.0) || !std::isfinite(scale_shape)) {
    throw config_error("init: scale_shape must be non-negative");
  }
  if (max_retries < 1) {
    throw config_error("init: max_retries must be at least 1");
  }
}

PsplineFit pspline_poisson_fit(const Eigen::VectorXd& counts, int r,
                               double lambda_init, int max_iter) {
  const int K = static_cast<int>(counts.size());
  if (r < 1) throw config_error("pspline fit: order must be at least 1");
  if (K < r + 1) {
    throw config_error("pspline fit: need at least order+1 bins, got " +
                       std::to_string(K));
  }
  if (!(lambda_init > 0.0)) {
    throw config_error("pspline fit: penalty weight must be positive");
  }
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    if (!(counts[k] >= 0.0) || !std::isfinite(counts[k])) {
      throw config_error("pspline fit: counts must be non-negative");
    }
    total += counts[k];
  }
  if (!(total > 0.0)) {
    throw config_error("pspline fit: counts must not be all zero");
  }

  const Eigen::MatrixXd D = difference_matrix(K, r);
  const Eigen::MatrixXd P = lambda_init * (D.transpose() * D);

  const auto objective = [&](const Eigen::VectorXd& th) {
    return counts.dot(th) - th.array().exp().sum() -
           0.5 * (th.transpose() * P * th).value();
  };

  PsplineFit fit;
  Eigen::VectorXd theta =
      Eigen::VectorXd::Constant(K, std::log(std::max(total / K, 1e-3)));
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::VectorXd e = theta.array().exp();
    const Eigen::VectorXd grad = counts - e - P * theta;
    if (grad.norm() < kGradTol) {
      converged = true;
      break;
    }
    Eigen::MatrixXd H = P;
    H.diagonal() += e;
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    const double f0 = objective(theta);
    const double slope = grad.dot(step);
    double t = 1.0;
    while (t > 1e-12 &&
           !(objective(theta + t * step) >= f0 + 1e-4 * t * slope)) {
      t *= 0.5;
    }
    if (t <= 1e-12) break;  // line search stalled; give up on this fit
    theta += t * step;
  }
  if (!converged) {
    const Eigen::VectorXd grad =
        counts - theta.array().exp().matrix() - P * theta;
    converged = grad.norm() < kGradTol;
  }

  fit.iterations = it;
  fit.converged = converged;
  if (!converged) {
    theta.setZero();  // uniform fallback shape
  }
  fit.objective = objective(theta);
  theta.array() -= theta[0];
  fit.theta = std::move(theta);
  return fit;
}

PreliminaryEstimates preliminary_estimates(const GroupedDataset& data,
                                           const ModelConfig& cfg) {
  const int N = data.n_groups();
  PreliminaryEstimates out;
  out.tau.resize(N);
  for (int i = 0; i < N; ++i) out.tau[i] = cfg.delta_for(i);

  std::vector<double> means(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    means[static_cast<std::size_t>(i)] =
        mean_of(data.groups[static_cast<std::size_t>(i)].x);
  }

  if (cfg.r == 3) {
    out.xi = Eigen::Map<const Eigen::VectorXd>(means.data(), N);
    out.mu_xi = mean_of(means);
    out.sigma_xi = clamp_scale(sd_of(means));
    double ss = 0.0;
    long total = 0;
    for (int i = 0; i < N; ++i) {
      const auto& x = data.groups[static_cast<std::size_t>(i)].x;
      for (double v : x) {
        const double d = v - means[static_cast<std::size_t>(i)];
        ss += d * d;
      }
      total += static_cast<long>(x.size());
    }
    const long dof = std::max<long>(total - N, 1);
    out.sigma_x = clamp_scale(std::sqrt(ss / static_cast<double>(dof)));
  } else if (cfg.r == 2) {
    out.lambda.resize(N);
    for (int i = 0; i < N; ++i) {
      const double gap =
          std::max(means[static_cast<std::size_t>(i)] - cfg.domain.a, 1e-3);
      out.lambda[i] = 1.0 / gap;
    }
    std::vector<double> lam(out.lambda.data(), out.lambda.data() + N);
    out.mu_lambda = clamp_scale(mean_of(lam));
    const double var = variance_of(lam);
    const double shape =
        var > 0.0 ? (out.mu_lambda * out.mu_lambda) / var : 1e4;
    out.alpha_lambda = std::clamp(shape, 1e-2, 1e4);
  }
  return out;
}

ParameterState invert_to_noncentered(const Eigen::MatrixXd& theta_hat,
                                     const ModelConfig& cfg,
                                     const PreliminaryEstimates& prelim,
                                     std::vector<std::string>* warnings) {
  const int N = static_cast<int>(theta_hat.rows());
  const int K = cfg.K();
  const int r = cfg.r;
  if (static_cast<int>(theta_hat.cols()) != K) {
    throw config_error("init inversion: theta has " +
                       std::to_string(theta_hat.cols()) + " columns, expected " +
                       std::to_string(K));
  }
  if (static_cast<int>(prelim.tau.size()) != N) {
    throw config_error("init inversion: tau guesses do not match group count");
  }
  if (!theta_hat.allFinite()) {
    throw config_error("init inversion: theta must be finite");
  }

  const ParamLayout lay(N, K, r, cfg.has_scalar_covariate);
  ParameterState s = ParameterState::zeros(lay);

  const double h = cfg.domain.h();
  const double a = cfg.domain.a;

  if (r == 3) {
    if (static_cast<int>(prelim.xi.size()) != N) {
      throw config_error("init inversion: xi guesses do not match group count");
    }
    s.xi = prelim.xi;
    s.mu_xi = prelim.mu_xi;
    s.log_sigma_xi = std::log(clamp_scale(prelim.sigma_xi));
    s.log_sigma_x = std::log(clamp_scale(prelim.sigma_x));
  } else if (r == 2) {
    if (static_cast<int>(prelim.lambda.size()) != N) {
      throw config_error(
          "init inversion: lambda guesses do not match group count");
    }
    s.log_lambda.resize(N);
    for (int i = 0; i < N; ++i) {
      s.log_lambda[i] = std::log(clamp_scale(prelim.lambda[i]));
    }
    s.log_mu_lambda = std::log(clamp_scale(prelim.mu_lambda));
    s.log_alpha_lambda = std::log(clamp_scale(prelim.alpha_lambda));
  }

  const double inv_var_x =
      r == 3 ? std::exp(-2.0 * s.log_sigma_x) : 0.0;

  for (int i = 0; i < N; ++i) {
    double tau = prelim.tau[i];
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      if (warnings != nullptr) {
        warnings->push_back("init: non-positive smoothing guess for group " +
                            std::to_string(i + 1) + " clamped to 1e-3");
      }
      tau = kScaleFloor;
    }
    s.log_tau[i] = std::log(tau);

    // Work on the row shifted so its first entry is exactly zero, matching
    // the decoding convention.
    Eigen::VectorXd th = theta_hat.row(i).transpose();
    th.array() -= th[0];

    if (r == 3) {
      const double xi = s.xi[i];
      const double m2 = h * (xi - (a + h)) * inv_var_x;
      const double m3 = 2.0 * h * (xi - (a + 1.5 * h)) * inv_var_x;
      s.eta_free(i, 0) = (th[1] - m2) / tau;
      s.eta_free(i, 1) = (th[2] - m3) / tau;
      for (int k = 3; k < K; ++k) {
        s.eta_rw(i, k - 3) =
            (th[k] - 3.0 * th[k - 1] + 3.0 * th[k - 2] - th[k - 3]) / tau;
      }
    } else if (r == 2) {
      const double lambda = std::exp(s.log_lambda[i]);
      s.eta_free(i, 0) = (th[1] + lambda * h) / tau;
      for (int k = 2; k < K; ++k) {
        s.eta_rw(i, k - 2) = (th[k] - 2.0 * th[k - 1] + th[k - 2]) / tau;
      }
    } else {
      for (int k = 1; k < K; ++k) {
        s.eta_rw(i, k - 1) = (th[k] - th[k - 1]) / tau;
      }
    }
  }

  s.alpha = 0.0;
  s.beta0_free = 0.0;
  s.log_tau_beta = std::log(0.5);
  s.sigma_y_z = 1.0;
  s.log_sigma_y_g = 0.0;
  s.beta_z = 0.0;
  return s;
}

InitResult base_init(const BinnedCovariates& binned,
                     const GroupedDataset& data, const ModelConfig& cfg,
                     const InitSettings& settings) {
  settings.validate();
  const int N = data.n_groups();
  if (binned.n_groups() != N) {
    throw config_error("init: binned counts do not match the dataset");
  }
  if (binned.K() != cfg.K()) {
    throw config_error("init: binned counts do not match the domain");
  }

  InitResult out;
  Eigen::MatrixXd theta_hat(N, cfg.K());
  for (int i = 0; i < N; ++i) {
    const PsplineFit fit =
        pspline_poisson_fit(binned.counts.row(i).transpose(), cfg.r,
                            settings.lambda_init, settings.max_iter);
    if (!fit.converged) {
      ++out.pspline_fallbacks;
      out.warnings.push_back("init: density fit for group " +
                             std::to_string(i + 1) +
                             " did not converge; using the uniform shape");
    }
    theta_hat.row(i) = fit.theta.transpose();
  }

  const PreliminaryEstimates prelim = preliminary_estimates(data, cfg);
  out.state = invert_to_noncentered(theta_hat, cfg, prelim, &out.warnings);

  double ymean = 0.0;
  for (const auto& g : data.groups) ymean += g.y;
  out.state.alpha = ymean / N;
  return out;
}

ParameterState jitter_init(const ParameterState& base, const ModelConfig& cfg,
                           const LogDensity& target,
                           const InitSettings& settings, Rng& rng) {
  settings.validate();
  const int N = static_cast<int>(base.log_tau.size());
  const ParamLayout lay(N, cfg.K(), cfg.r, cfg.has_scalar_covariate);
  if (lay.dim() != target.dim()) {
    throw config_error("init jitter: state and target dimensions differ");
  }
  const auto eval = target.make_eval();

  const double sd = settings.theta_noise;
  const auto nudge = [&](double v) {
    return sd > 0.0 ? v + sd * rng.normal() : v;
  };
  const auto fresh_log = [&](double shape, double mean_value) {
    const double m = clamp_scale(mean_value);
    const double draw = std::max(rng.gamma(shape, shape / m), 1e-12);
    return std::log(draw);
  };

  double last_logp = -std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < settings.max_retries; ++attempt) {
    ParameterState s = base;
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < s.eta_free.cols(); ++k) {
        s.eta_free(i, k) = nudge(s.eta_free(i, k));
      }
      for (int k = 0; k < s.eta_rw.cols(); ++k) {
        s.eta_rw(i, k) = nudge(s.eta_rw(i, k));
      }
    }
    if (settings.tau_shape > 0.0) {
      for (int i = 0; i < N; ++i) {
        s.log_tau[i] = fresh_log(settings.tau_shape, cfg.delta_for(i));
      }
    }
    if (cfg.r == 3) {
      for (int i = 0; i < N; ++i) s.xi[i] = nudge(s.xi[i]);
      s.mu_xi = nudge(s.mu_xi);
      if (settings.scale_shape > 0.0) {
        s.log_sigma_xi =
            fresh_log(settings.scale_shape, std::exp(base.log_sigma_xi));
        s.log_sigma_x =
            fresh_log(settings.scale_shape, std::exp(base.log_sigma_x));
      }
    } else if (cfg.r == 2) {
      for (int i = 0; i < N; ++i) s.log_lambda[i] = nudge(s.log_lambda[i]);
      if (settings.scale_shape > 0.0) {
        s.log_mu_lambda =
            fresh_log(settings.scale_shape, std::exp(base.log_mu_lambda));
        s.log_alpha_lambda =
            fresh_log(settings.scale_shape, std::exp(base.log_alpha_lambda));
      }
    }
    s.alpha = nudge(s.alpha);
    s.beta0_free = nudge(s.beta0_free);
    for (int k = 0; k < s.beta0_rw.size(); ++k) {
      s.beta0_rw[k] = nudge(s.beta0_rw[k]);
    }
    if (settings.scale_shape > 0.0) {
      s.log_tau_beta =
          fresh_log(settings.scale_shape, std::exp(base.log_tau_beta));
      s.log_sigma_y_g =
          fresh_log(settings.scale_shape, std::exp(base.log_sigma_y_g));
    }
    s.sigma_y_z = nudge(s.sigma_y_z);
    if (cfg.has_scalar_covariate) s.beta_z = nudge(s.beta_z);

    const Eigen::VectorXd q = flatten(s, lay);
    Eigen::VectorXd grad(q.size());
    const double lp = eval->value_and_grad(
        std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
        std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));
    last_logp = lp;
    if (std::isfinite(lp) && grad.allFinite()) return s;
  }
  throw sampler_error("initialization failed: no finite starting point in " +
                      std::to_string(settings.max_retries) +
                      " attempts (last log density " +
                      std::to_string(last_logp) + ")");
}

std::vector<Eigen::VectorXd> jittered_starts(const ParameterState& base,
                                             const FrodoModel& model,
                                             const InitSettings& settings,
                                             int n_chains,
                                             std::uint64_t seed) {
  if (n_chains < 1) throw config_error("init: need at least one chain");
  const ParamLayout& lay = model.layout();
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n_chains));
  for (int c = 0; c < n_chains; ++c) {
    Rng rng(seed, kInitStreamBase + static_cast<std::uint64_t>(c));
    const ParameterState s =
        jitter_init(base, model.config(), model, settings, rng);
    out.push_back(flatten(s, lay));
  }
  return out;
}

}  // namespace frodo
