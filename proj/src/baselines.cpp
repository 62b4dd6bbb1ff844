#include "frodo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>

#include "frodo/bspline.hpp"
#include "frodo/pipeline.hpp"
#include "frodo/rng.hpp"
#include "frodo/stats.hpp"

namespace frodo {

namespace {

constexpr std::uint64_t kBaselineStreamBase = 0x42617365ull;
constexpr double kScaleFloor = 1e-3;
constexpr int kGamInteriorKnots = 20;
constexpr int kGamDegree = 3;

std::vector<double> flatten_rowmajor(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()) *
                          static_cast<std::size_t>(m.cols()));
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      out[static_cast<std::size_t>(i) * static_cast<std::size_t>(m.cols()) +
          static_cast<std::size_t>(j)] = m(i, j);
    }
  }
  return out;
}

struct Standardizer {
  double mean = 0.0;
  double sd = 1.0;
};

// Mean and n-1 standard deviation of a vector, falling back to sd = 1 when
// the values are constant (or fewer than two) so the regressor column
// degenerates to zeros instead of dividing by zero.
Standardizer standardizer_of(const Eigen::VectorXd& v) {
  Standardizer s;
  s.mean = v.mean();
  if (v.size() < 2) return s;
  double ss = 0.0;
  for (long i = 0; i < v.size(); ++i) {
    const double d = v[i] - s.mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  // Values that agree to within rounding noise count as constant; a spread
  // twelve orders below the magnitude would otherwise blow up the rescaled
  // column.
  const double floor = 1e-12 * std::max(1.0, std::fabs(s.mean));
  if (sd > floor && std::isfinite(sd)) s.sd = sd;
  return s;
}

Eigen::VectorXd group_means(const GroupedDataset& data) {
  const int N = static_cast<int>(data.groups.size());
  Eigen::VectorXd out(N);
  for (int i = 0; i < N; ++i) {
    const auto& x = data.groups[static_cast<std::size_t>(i)].x;
    if (x.empty()) {
      throw data_error("group " + std::to_string(i + 1) +
                       " has no covariate observations");
    }
    double s = 0.0;
    for (double v : x) s += v;
    out[i] = s / static_cast<double>(x.size());
  }
  return out;
}

double clamp_pos(double v, double lo, double hi) {
  if (!(v > lo)) return lo;
  if (v > hi) return hi;
  return v;
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::naive_linear:
      return "naive_linear";
    case BaselineKind::naive_gam:
      return "naive_gam";
    case BaselineKind::naive_transformed:
      return "naive_transformed";
    case BaselineKind::hierarchical:
      return "hierarchical";
  }
  throw config_error("unknown baseline kind");
}

BaselineKind baseline_from_string(const std::string& name) {
  if (name == "naive_linear") return BaselineKind::naive_linear;
  if (name == "naive_gam") return BaselineKind::naive_gam;
  if (name == "naive_transformed") return BaselineKind::naive_transformed;
  if (name == "hierarchical") return BaselineKind::hierarchical;
  throw config_error("unknown baseline kind '" + name + "'");
}

// ---------------------------------------------------------------------------

NaiveModel::NaiveModel(Eigen::MatrixXd design, Eigen::VectorXd y)
    : y_(std::move(y)), cols_(design.cols()) {
  if (design.rows() != y_.size()) {
    throw config_error("design matrix rows must match the number of responses");
  }
  if (design.rows() < 1 || cols_ < 1) {
    throw config_error("naive regression needs at least one row and column");
  }
  if (!design.allFinite() || !y_.allFinite()) {
    throw data_error("naive regression inputs must be finite");
  }
  rows_flat_ = flatten_rowmajor(design);
}

std::vector<std::string> NaiveModel::names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(dim()));
  out.push_back("alpha");
  for (int j = 0; j < p(); ++j) {
    out.push_back("coef[" + std::to_string(j + 1) + "]");
  }
  out.push_back("sigma_y_z");
  out.push_back("log_sigma_y_g");
  return out;
}

GamModel::GamModel(Eigen::MatrixXd design, Eigen::VectorXd y,
                   double coef_spacing)
    : y_(std::move(y)), cols_(design.cols()), spacing_(coef_spacing) {
  if (design.rows() != y_.size()) {
    throw config_error("design matrix rows must match the number of responses");
  }
  if (cols_ < 3) {
    throw config_error("spline regression needs at least three basis columns");
  }
  if (!(spacing_ > 0.0) || !std::isfinite(spacing_)) {
    throw config_error("knot spacing must be positive");
  }
  if (!design.allFinite() || !y_.allFinite()) {
    throw data_error("spline regression inputs must be finite");
  }
  rows_flat_ = flatten_rowmajor(design);
}

std::vector<std::string> GamModel::names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(dim()));
  out.push_back("alpha");
  out.push_back("gamma_free");
  for (int k = 0; k < n_basis() - 2; ++k) {
    out.push_back("gamma_rw[" + std::to_string(k + 1) + "]");
  }
  out.push_back("log_tau_gamma");
  out.push_back("sigma_y_z");
  out.push_back("log_sigma_y_g");
  return out;
}

// ---------------------------------------------------------------------------

HierarchicalModel::HierarchicalModel(Scenario sc, Data data)
    : sc_(sc), d_(std::move(data)) {
  const long N = d_.y.size();
  if (N < 1) throw config_error("hierarchical model needs at least one group");
  if (d_.n.size() != N || d_.xbar.size() != N || d_.ss.size() != N ||
      d_.sum_log_x.size() != N || d_.sum_log_1mx.size() != N) {
    throw config_error("hierarchical data vectors must share one length");
  }
  if (d_.z && d_.z->size() != N) {
    throw config_error("hierarchical data vectors must share one length");
  }
  if (!(d_.c1_sd > 0.0) || !(d_.c2_sd > 0.0)) {
    throw config_error("regressor standardizer scales must be positive");
  }
}

std::vector<std::string> HierarchicalModel::names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(dim()));
  const char* latent = "xi";
  if (exp_family()) {
    latent = "log_lambda";
  } else if (sc_ == Scenario::beta_linear) {
    latent = "logit_xi";
  } else if (sc_ == Scenario::beta_quadratic) {
    latent = "log_xi";
  }
  for (int i = 0; i < n_groups(); ++i) {
    out.push_back(std::string(latent) + "[" + std::to_string(i + 1) + "]");
  }
  if (gauss_family()) {
    out.push_back("mu_xi");
    out.push_back("log_sigma_xi");
    out.push_back("log_sigma_x");
  } else if (exp_family()) {
    out.push_back("log_mu_lambda");
    out.push_back("log_alpha_lambda");
  }
  out.push_back("alpha");
  for (int j = 0; j < n_coefs(); ++j) {
    out.push_back("coef[" + std::to_string(j + 1) + "]");
  }
  out.push_back("sigma_y_z");
  out.push_back("log_sigma_y_g");
  if (has_z()) out.push_back("beta_z");
  return out;
}

HierarchicalModel::Data HierarchicalModel::build_data(
    Scenario sc, const GroupedDataset& raw, const StandardizationInfo& info) {
  const int N = static_cast<int>(raw.groups.size());
  if (N < 1) throw data_error("dataset has no groups");

  Data d;
  d.y.resize(N);
  d.n.resize(N);
  d.xbar.resize(N);
  d.ss = Eigen::VectorXd::Zero(N);
  d.sum_log_x = Eigen::VectorXd::Zero(N);
  d.sum_log_1mx = Eigen::VectorXd::Zero(N);

  const bool gauss = sc == Scenario::gauss_linear ||
                     sc == Scenario::gauss_quadratic || sc == Scenario::croon;
  const bool expf = sc == Scenario::exp_linear;
  const bool beta_quad = sc == Scenario::beta_quadratic;

  Eigen::VectorXd vhat;  // beta_quadratic regressor estimates
  if (beta_quad) vhat.resize(N);

  for (int i = 0; i < N; ++i) {
    const auto& g = raw.groups[static_cast<std::size_t>(i)];
    const int n_i = static_cast<int>(g.x.size());
    if (n_i < 1) {
      throw data_error("group " + std::to_string(i + 1) +
                       " has no covariate observations");
    }
    d.y[i] = info.to_std_y(g.y);
    d.n[i] = static_cast<double>(n_i);

    double xbar_raw = 0.0;
    for (double v : g.x) xbar_raw += v;
    xbar_raw /= static_cast<double>(n_i);

    if (gauss) {
      d.xbar[i] = (xbar_raw - info.x_mean) / info.x_sd;
      double ss_raw = 0.0;
      for (double v : g.x) {
        const double dv = v - xbar_raw;
        ss_raw += dv * dv;
      }
      d.ss[i] = ss_raw / (info.x_sd * info.x_sd);
    } else if (expf) {
      for (double v : g.x) {
        if (!(v > 0.0)) {
          throw data_error(
              "exponential family requires strictly positive covariate "
              "values; group " +
              std::to_string(i + 1) + " violates this");
        }
      }
      d.xbar[i] = xbar_raw;
    } else {
      double slx = 0.0, sl1mx = 0.0, sqsum = 0.0;
      for (double v : g.x) {
        if (!(v >= 0.0) || !(v <= 1.0)) {
          throw data_error(
              "beta family requires covariate values between 0 and 1; "
              "group " +
              std::to_string(i + 1) + " violates this");
        }
        // Skewed unit-interval draws can round to exactly 0 or 1; censor the
        // log statistics at a tiny margin so they stay finite.
        const double ve = std::clamp(v, 1e-12, 1.0 - 1e-12);
        slx += std::log(ve);
        sl1mx += std::log1p(-ve);
        const double c = v - 0.5;
        sqsum += c * c;
      }
      d.xbar[i] = xbar_raw;
      d.sum_log_x[i] = slx;
      d.sum_log_1mx[i] = sl1mx;
      if (beta_quad) vhat[i] = 1.0 + 4.0 * sqsum / static_cast<double>(n_i);
    }
  }

  if (sc == Scenario::croon) {
    Eigen::VectorXd z(N);
    for (int i = 0; i < N; ++i) {
      const auto& g = raw.groups[static_cast<std::size_t>(i)];
      if (!g.z) {
        throw data_error("group " + std::to_string(i + 1) +
                         " is missing the scalar covariate required by this "
                         "scenario");
      }
      z[i] = *g.z;
    }
    d.z = std::move(z);
  }

  Standardizer c1;
  if (beta_quad) {
    c1 = standardizer_of(vhat);
  } else {
    c1 = standardizer_of(d.xbar);
  }
  d.c1_mean = c1.mean;
  d.c1_sd = c1.sd;
  if (sc == Scenario::gauss_quadratic) {
    Eigen::VectorXd sq = d.xbar.array().square().matrix();
    const Standardizer c2 = standardizer_of(sq);
    d.c2_mean = c2.mean;
    d.c2_sd = c2.sd;
  }
  return d;
}

// ---------------------------------------------------------------------------

ScalarSummary summarize_scalar(std::vector<double> draws) {
  ScalarSummary out;
  if (draws.empty()) return out;
  const std::span<const double> sp(draws.data(), draws.size());
  out.mean = mean_of(sp);
  out.sd = draws.size() > 1 ? sd_of(sp) : 0.0;
  std::sort(draws.begin(), draws.end());
  out.q025 = quantile_sorted(sp, 0.025);
  out.q975 = quantile_sorted(sp, 0.975);
  return out;
}

namespace {

// One jittered start per chain: base + N(0, 0.1) noise on every coordinate,
// retried until the log density and gradient are finite.
std::vector<Eigen::VectorXd> jittered_baseline_starts(
    const LogDensity& model, const Eigen::VectorXd& base,
    const SamplerSettings& settings) {
  auto eval = model.make_eval();
  const int D = model.dim();
  Eigen::VectorXd grad(D);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(static_cast<std::size_t>(settings.chains));
  for (int c = 0; c < settings.chains; ++c) {
    Rng rng(settings.seed, kBaselineStreamBase + static_cast<std::uint64_t>(c));
    bool ok = false;
    Eigen::VectorXd q(D);
    double lp = 0.0;
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
      q = base;
      for (int dcoord = 0; dcoord < D; ++dcoord) {
        q[dcoord] += 0.1 * rng.normal();
      }
      lp = eval->value_and_grad(
          std::span<const double>(q.data(), static_cast<std::size_t>(D)),
          std::span<double>(grad.data(), static_cast<std::size_t>(D)));
      ok = std::isfinite(lp) && grad.allFinite();
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "no finite starting point found for chain " << (c + 1)
          << " (last log density " << lp << ")";
      throw sampler_error(msg.str());
    }
    starts.push_back(std::move(q));
  }
  return starts;
}

}  // namespace

BaselineResult fit_baseline(BaselineKind kind, Scenario scenario,
                            const GroupedDataset& raw,
                            const SamplerSettings& settings) {
  settings.validate();
  if (kind == BaselineKind::naive_gam && scenario != Scenario::gauss_quadratic) {
    throw config_error(
        "baseline naive_gam is only defined for scenario gauss_quadratic");
  }
  if (kind == BaselineKind::naive_transformed &&
      scenario != Scenario::beta_quadratic) {
    throw config_error(
        "baseline naive_transformed is only defined for scenario "
        "beta_quadratic");
  }

  const StandardizedData std_data = standardize(raw);
  const StandardizationInfo& info = std_data.info;
  const int N = static_cast<int>(raw.groups.size());
  Eigen::VectorXd ystd(N);
  for (int i = 0; i < N; ++i) {
    ystd[i] = std_data.data.groups[static_cast<std::size_t>(i)].y;
  }
  const Eigen::VectorXd xbar_raw = group_means(raw);

  const bool has_z = scenario == Scenario::croon;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  BaselineResult out;
  out.kind = kind;
  out.scenario = scenario;
  out.info = info;

  std::unique_ptr<LogDensity> model;
  Eigen::VectorXd base;
  int sig_idx = -1, logg_idx = -1, slope_idx = -1, bz_idx = -1;
  double slope_scale = nan;

  switch (kind) {
    case BaselineKind::naive_linear: {
      const int p = has_z ? 2 : 1;
      Eigen::MatrixXd design(N, p);
      for (int i = 0; i < N; ++i) {
        design(i, 0) = (xbar_raw[i] - info.x_mean) / info.x_sd;
        if (has_z) {
          const auto& g = raw.groups[static_cast<std::size_t>(i)];
          if (!g.z) {
            throw data_error("group " + std::to_string(i + 1) +
                             " is missing the scalar covariate required by "
                             "this scenario");
          }
          design(i, 1) = *g.z;
        }
      }
      auto m = std::make_unique<NaiveModel>(std::move(design), ystd);
      sig_idx = m->sigma_y_z_off();
      logg_idx = m->log_g_off();
      slope_idx = m->coef_off();
      slope_scale = info.y_sd / info.x_sd;
      if (has_z) bz_idx = m->coef_off() + 1;
      out.names = m->names();
      base = Eigen::VectorXd::Zero(m->dim());
      base[sig_idx] = 1.0;
      model = std::move(m);
      break;
    }
    case BaselineKind::naive_transformed: {
      Eigen::VectorXd c(N);
      for (int i = 0; i < N; ++i) {
        const auto& x = raw.groups[static_cast<std::size_t>(i)].x;
        double s = 0.0;
        for (double v : x) {
          const double dv = v - 0.5;
          s += dv * dv;
        }
        c[i] = s / static_cast<double>(x.size());
      }
      const Standardizer cs = standardizer_of(c);
      Eigen::MatrixXd design(N, 1);
      for (int i = 0; i < N; ++i) design(i, 0) = (c[i] - cs.mean) / cs.sd;
      auto m = std::make_unique<NaiveModel>(std::move(design), ystd);
      sig_idx = m->sigma_y_z_off();
      logg_idx = m->log_g_off();
      slope_idx = m->coef_off();
      slope_scale = info.y_sd / cs.sd;
      out.names = m->names();
      base = Eigen::VectorXd::Zero(m->dim());
      base[sig_idx] = 1.0;
      model = std::move(m);
      break;
    }
    case BaselineKind::naive_gam: {
      Eigen::VectorXd u(N);
      for (int i = 0; i < N; ++i) {
        u[i] = (xbar_raw[i] - info.x_mean) / info.x_sd;
      }
      const double lo = u.minCoeff();
      const double hi = u.maxCoeff();
      if (!(hi > lo)) {
        throw data_error(
            "spline baseline needs at least two distinct group means");
      }
      const std::vector<double> knots =
          clamped_uniform_knots(lo, hi, kGamInteriorKnots, kGamDegree);
      std::vector<double> uv(u.data(), u.data() + u.size());
      Eigen::MatrixXd design = bspline_design(uv, knots, kGamDegree);
      const Eigen::RowVectorXd colmean = design.colwise().mean();
      design.rowwise() -= colmean;
      const double spacing =
          (hi - lo) / static_cast<double>(kGamInteriorKnots + 1);
      auto m = std::make_unique<GamModel>(std::move(design), ystd, spacing);
      sig_idx = m->sigma_y_z_off();
      logg_idx = m->log_g_off();
      out.names = m->names();
      base = Eigen::VectorXd::Zero(m->dim());
      base[m->log_tau_gamma_off()] = std::log(0.5);
      base[sig_idx] = 1.0;
      model = std::move(m);
      break;
    }
    case BaselineKind::hierarchical: {
      HierarchicalModel::Data data =
          HierarchicalModel::build_data(scenario, raw, info);
      auto m = std::make_unique<HierarchicalModel>(scenario, data);
      sig_idx = m->sigma_y_z_off();
      logg_idx = m->log_g_off();
      if (scenario != Scenario::gauss_quadratic) {
        slope_idx = m->coef_off();
        if (m->gauss_family()) {
          slope_scale = info.y_sd / (data.c1_sd * info.x_sd);
        } else {
          slope_scale = info.y_sd / data.c1_sd;
        }
      }
      if (has_z) bz_idx = m->beta_z_off();
      out.names = m->names();

      base = Eigen::VectorXd::Zero(m->dim());
      if (m->gauss_family()) {
        for (int i = 0; i < N; ++i) base[i] = data.xbar[i];
        const Standardizer sx = standardizer_of(data.xbar);
        base[m->hyper_off()] = sx.mean;
        base[m->hyper_off() + 1] =
            std::log(std::max(data.xbar.size() > 1 ? sx.sd : 1.0, kScaleFloor));
        const double dof = std::max(data.n.sum() - N, 1.0);
        const double pooled = std::sqrt(data.ss.sum() / dof);
        base[m->hyper_off() + 2] = std::log(std::max(pooled, kScaleFloor));
      } else if (m->exp_family()) {
        Eigen::VectorXd lam(N);
        for (int i = 0; i < N; ++i) {
          lam[i] = 1.0 / std::max(data.xbar[i], kScaleFloor);
          base[i] = std::log(lam[i]);
        }
        const Standardizer sl = standardizer_of(lam);
        base[m->hyper_off()] = std::log(std::max(sl.mean, kScaleFloor));
        double shape = 1e4;
        if (N > 1 && sl.sd > 0.0) {
          shape = clamp_pos(sl.mean * sl.mean / (sl.sd * sl.sd), 1e-2, 1e4);
        }
        base[m->hyper_off() + 1] = std::log(shape);
      } else if (scenario == Scenario::beta_linear) {
        for (int i = 0; i < N; ++i) {
          const double s = std::clamp(data.xbar[i], 0.01, 0.99);
          base[i] = std::log(s / (1.0 - s));
        }
      } else {  // beta_quadratic
        for (int i = 0; i < N; ++i) {
          const auto& x = raw.groups[static_cast<std::size_t>(i)].x;
          double s = 0.0;
          for (double v : x) {
            const double dv = v - 0.5;
            s += dv * dv;
          }
          const double v = 1.0 + 4.0 * s / static_cast<double>(x.size());
          const double denom = std::max(v - 1.0, 1e-6);
          const double xi_hat = clamp_pos(0.5 * (1.0 / denom - 1.0), 1e-2, 1e2);
          base[i] = std::log(xi_hat);
        }
      }
      base[sig_idx] = 1.0;
      model = std::move(m);
      break;
    }
  }

  const std::vector<Eigen::VectorXd> starts =
      jittered_baseline_starts(*model, base, settings);
  out.chains = run_chains(*model, starts, settings);
  out.summaries = summarize_draws(out.chains, out.names);

  std::vector<double> sig_draws, slope_draws, bz_draws;
  for (const ChainOutput& ch : out.chains) {
    out.divergences += ch.divergences;
    for (long s = 0; s < ch.draws.rows(); ++s) {
      const double zsig = ch.draws(s, sig_idx);
      const double g = std::exp(ch.draws(s, logg_idx));
      sig_draws.push_back(kInvSqrt2 * std::fabs(zsig) / std::sqrt(g) *
                          info.y_sd);
      if (slope_idx >= 0) {
        slope_draws.push_back(ch.draws(s, slope_idx) * slope_scale);
      }
      if (bz_idx >= 0) {
        bz_draws.push_back(ch.draws(s, bz_idx) * info.y_sd);
      }
    }
  }
  out.sigma_y = summarize_scalar(std::move(sig_draws));
  if (slope_idx >= 0) out.slope = summarize_scalar(std::move(slope_draws));
  if (bz_idx >= 0) out.beta_z = summarize_scalar(std::move(bz_draws));

  out.max_rhat = 0.0;
  out.min_ess = std::numeric_limits<double>::infinity();
  for (const ParameterSummary& ps : out.summaries) {
    if (std::isnan(ps.rhat) || std::isnan(ps.ess)) {
      out.max_rhat = nan;
      out.min_ess = nan;
      break;
    }
    out.max_rhat = std::max(out.max_rhat, ps.rhat);
    out.min_ess = std::min(out.min_ess, ps.ess);
  }
  return out;
}

}  // namespace frodo
