#include <frodo/diagnostics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <frodo/common.hpp>
#include <frodo/stats.hpp>

namespace frodo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Splits each chain into halves, dropping the middle draw of odd-length
// chains, giving an n x 2C matrix of half-chains.
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& draws) {
  const Eigen::Index s = draws.rows();
  const Eigen::Index c = draws.cols();
  const Eigen::Index n = s / 2;
  Eigen::MatrixXd out(n, 2 * c);
  for (Eigen::Index j = 0; j < c; ++j) {
    out.col(2 * j) = draws.col(j).head(n);
    out.col(2 * j + 1) = draws.col(j).tail(n);
  }
  return out;
}

// Average ranks over all entries (ties share the mean rank), then the normal
// quantile transform z = Phi^-1((rank - 3/8) / (N + 1/4)).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& x) {
  const Eigen::Index total = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  const double* data = x.data();
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return data[a] < data[b]; });

  Eigen::MatrixXd z(x.rows(), x.cols());
  double* zdata = z.data();
  Eigen::Index i = 0;
  while (i < total) {
    Eigen::Index j = i;
    while (j + 1 < total && data[order[j + 1]] == data[order[i]]) ++j;
    // Entries order[i..j] are tied; average rank, 1-based.
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double z_val =
        inv_Phi((rank - 0.375) / (static_cast<double>(total) + 0.25));
    for (Eigen::Index k = i; k <= j; ++k) zdata[order[k]] = z_val;
    i = j + 1;
  }
  return z;
}

struct ChainMoments {
  double mean_var = 0.0;  // within-chain variance W
  double var_plus = 0.0;  // overdispersed pooled variance estimate
};

ChainMoments chain_moments(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  Eigen::VectorXd means(m);
  double w = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    means[j] = z.col(j).mean();
    w += (z.col(j).array() - means[j]).square().sum() /
         static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);

  ChainMoments out;
  out.mean_var = w;
  out.var_plus = w * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) {
    const double grand = means.mean();
    out.var_plus += (means.array() - grand).square().sum() /
                    static_cast<double>(m - 1);
  }
  return out;
}

void check_draw_shape(const Eigen::MatrixXd& draws) {
  if (draws.cols() < 1) throw config_error("diagnostics need at least one chain");
  if (draws.rows() < 4) {
    throw config_error("diagnostics need at least four draws per chain");
  }
}

double rhat_of_split(const Eigen::MatrixXd& z) {
  const ChainMoments mm = chain_moments(z);
  if (!(mm.mean_var > 0.0) || !std::isfinite(mm.var_plus)) return kNaN;
  // The raw ratio dips below one by O(1/n) when the between-chain term is
  // small; floor it so reported values never undercut the ideal.
  return std::max(1.0, std::sqrt(mm.var_plus / mm.mean_var));
}

// Effective sample size via the chain-averaged autocorrelation sum with
// Geyer's initial positive/monotone sequence truncation.
double ess_of_split(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  const ChainMoments mm = chain_moments(z);
  if (!(mm.mean_var > 0.0) || !std::isfinite(mm.var_plus)) return kNaN;

  Eigen::MatrixXd centered = z;
  for (Eigen::Index j = 0; j < m; ++j) {
    centered.col(j).array() -= z.col(j).mean();
  }
  // Chain-averaged lag-t autocovariance with 1/n normalization, computed
  // lazily because the truncation lag is usually far below n.
  auto acov = [&](Eigen::Index t) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      sum += centered.col(j).head(n - t).dot(centered.col(j).tail(n - t));
    }
    return sum / static_cast<double>(m) / static_cast<double>(n);
  };

  std::vector<double> rho(static_cast<std::size_t>(n) + 2, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mm.mean_var - acov(1)) / mm.var_plus;
  rho[1] = rho_odd;
  Eigen::Index s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mm.mean_var - acov(s + 1)) / mm.var_plus;
    rho_odd = 1.0 - (mm.mean_var - acov(s + 2)) / mm.var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[static_cast<std::size_t>(s) + 1] = rho_even;
      rho[static_cast<std::size_t>(s) + 2] = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  // Carry the last positive even term so anticorrelated chains are not
  // truncated a half-pair too early.
  if (rho_even > 0.0) rho[static_cast<std::size_t>(max_s) + 1] = rho_even;

  // Enforce monotone decay of the paired sums.
  for (Eigen::Index jj = 1; jj + 3 <= max_s; jj += 2) {
    const std::size_t u = static_cast<std::size_t>(jj);
    if (rho[u + 1] + rho[u + 2] > rho[u - 1] + rho[u]) {
      rho[u + 1] = 0.5 * (rho[u - 1] + rho[u]);
      rho[u + 2] = rho[u + 1];
    }
  }

  double tau = -1.0 + rho[static_cast<std::size_t>(max_s) + 1];
  for (Eigen::Index t = 0; t < max_s; ++t) {
    tau += 2.0 * rho[static_cast<std::size_t>(t)];
  }
  const double total = static_cast<double>(n) * static_cast<double>(m);
  return total / tau;
}

}  // namespace

double split_rhat(const Eigen::MatrixXd& draws) {
  check_draw_shape(draws);
  return rhat_of_split(rank_normalize(split_chains(draws)));
}

double ess(const Eigen::MatrixXd& draws) {
  check_draw_shape(draws);
  return ess_of_split(rank_normalize(split_chains(draws)));
}

std::vector<ParameterSummary> summarize_draws(
    const std::vector<ChainOutput>& chains,
    const std::vector<std::string>& names) {
  if (chains.empty()) throw config_error("no chains to summarize");
  const Eigen::Index s = chains[0].draws.rows();
  const Eigen::Index d = chains[0].draws.cols();
  for (const auto& c : chains) {
    if (c.draws.rows() != s || c.draws.cols() != d) {
      throw config_error("chains disagree on draw dimensions");
    }
  }
  if (static_cast<Eigen::Index>(names.size()) != d) {
    throw config_error("parameter name count does not match dimension");
  }
  const Eigen::Index n_chains = static_cast<Eigen::Index>(chains.size());
  const double cap = static_cast<double>(s) * static_cast<double>(n_chains);

  std::vector<ParameterSummary> out(static_cast<std::size_t>(d));
  Eigen::MatrixXd param(s, n_chains);
  std::vector<double> pooled(static_cast<std::size_t>(s * n_chains));
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index c = 0; c < n_chains; ++c) {
      param.col(c) = chains[static_cast<std::size_t>(c)].draws.col(k);
      for (Eigen::Index i = 0; i < s; ++i) {
        pooled[static_cast<std::size_t>(c * s + i)] = param(i, c);
      }
    }
    ParameterSummary& ps = out[static_cast<std::size_t>(k)];
    ps.name = names[static_cast<std::size_t>(k)];
    ps.mean = mean_of(pooled);
    ps.sd = sd_of(pooled);
    std::vector<double> sorted = sorted_copy(pooled);
    ps.q025 = quantile_sorted(sorted, 0.025);
    ps.q975 = quantile_sorted(sorted, 0.975);
    const Eigen::MatrixXd z = rank_normalize(split_chains(param));
    ps.rhat = rhat_of_split(z);
    ps.ess_raw = ess_of_split(z);
    ps.ess = std::isnan(ps.ess_raw) ? kNaN : std::min(ps.ess_raw, cap);
  }
  return out;
}

FunctionalBand functional_bands(const Eigen::MatrixXd& draws) {
  if (draws.rows() < 100) {
    throw config_error("functional bands need at least 100 draws");
  }
  const Eigen::Index k = draws.cols();
  FunctionalBand band;
  band.mean.resize(k);
  band.lower.resize(k);
  band.upper.resize(k);
  std::vector<double> column(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
      column[static_cast<std::size_t>(i)] = draws(i, j);
    }
    band.mean[j] = mean_of(column);
    std::vector<double> sorted = sorted_copy(column);
    band.lower[j] = quantile_sorted(sorted, 0.025);
    band.upper[j] = quantile_sorted(sorted, 0.975);
  }
  return band;
}

double secant_slope(const Eigen::VectorXd& beta_mean,
                    const DomainSpec& domain) {
  const Eigen::Index k = beta_mean.size();
  if (k < 2) throw config_error("secant slope needs at least two bins");
  if (k != domain.K) {
    throw config_error("coefficient length does not match the bin count");
  }
  return (beta_mean[k - 1] - beta_mean[0]) /
         (static_cast<double>(k - 1) * domain.h());
}

}  // namespace frodo
