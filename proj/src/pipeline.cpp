#include "frodo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "frodo/common.hpp"
#include "frodo/init.hpp"
#include "frodo/layout.hpp"
#include "frodo/model.hpp"

namespace fs = std::filesystem;

namespace frodo {

StandardizedData standardize(const GroupedDataset& raw) {
  raw.validate();
  const int N = raw.n_groups();

  double x_sum = 0.0;
  long x_count = 0;
  double y_sum = 0.0;
  for (const auto& g : raw.groups) {
    for (double v : g.x) x_sum += v;
    x_count += static_cast<long>(g.x.size());
    y_sum += g.y;
  }
  if (x_count < 2) throw data_error("standardize: need at least two covariate values");
  if (N < 2) throw data_error("standardize: need at least two groups");
  const double x_mean = x_sum / static_cast<double>(x_count);
  const double y_mean = y_sum / N;

  double x_ss = 0.0;
  double y_ss = 0.0;
  for (const auto& g : raw.groups) {
    for (double v : g.x) x_ss += (v - x_mean) * (v - x_mean);
    y_ss += (g.y - y_mean) * (g.y - y_mean);
  }
  const double x_var = x_ss / static_cast<double>(x_count - 1);
  const double y_var = y_ss / static_cast<double>(N - 1);
  if (!(x_var > 0.0)) throw data_error("standardize: covariates have zero variance");
  if (!(y_var > 0.0)) throw data_error("standardize: responses have zero variance");

  StandardizedData out;
  out.info.x_mean = x_mean;
  out.info.x_sd = std::sqrt(x_var);
  out.info.y_mean = y_mean;
  out.info.y_sd = std::sqrt(y_var);
  out.data = raw;
  for (auto& g : out.data.groups) {
    g.y = out.info.to_std_y(g.y);
    for (double& v : g.x) v = out.info.to_std_x(v);
  }
  return out;
}

DomainSpec standardize_domain(const DomainSpec& raw,
                              const StandardizationInfo& info) {
  DomainSpec out = raw;
  out.a = info.to_std_x(raw.a);
  out.b = info.to_std_x(raw.b);
  out.validate();
  return out;
}

BinnedCovariates bin_covariates(const GroupedDataset& data,
                                const DomainSpec& domain) {
  domain.validate();
  const int N = data.n_groups();
  const int K = domain.K;
  const double h = domain.h();

  BinnedCovariates out;
  out.counts = Eigen::MatrixXd::Zero(N, K);
  out.n = Eigen::VectorXd::Zero(N);
  for (int i = 0; i < N; ++i) {
    const auto& g = data.groups[static_cast<std::size_t>(i)];
    for (double v : g.x) {
      if (!(v >= domain.a) || !(v <= domain.b)) {
        std::ostringstream msg;
        msg << "covariate value " << v << " in group " << (i + 1)
            << " lies outside the domain [" << domain.a << ", " << domain.b
            << "]";
        throw data_error(msg.str());
      }
      int k = static_cast<int>(std::floor((v - domain.a) / h));
      if (k >= K) k = K - 1;  // right endpoint joins the last bin
      out.counts(i, k) += 1.0;
    }
    out.n[i] = static_cast<double>(g.x.size());
  }
  return out;
}

// ---------------------------------------------------------------------------

GateReport evaluate_gates(const std::vector<ParameterSummary>& summaries,
                          const std::vector<ChainOutput>& chains) {
  GateReport gr;
  gr.max_rhat = 0.0;
  gr.min_ess = std::numeric_limits<double>::infinity();
  for (const ParameterSummary& s : summaries) {
    if (std::isnan(s.rhat) || std::isnan(s.ess)) {
      gr.max_rhat = std::numeric_limits<double>::quiet_NaN();
      gr.min_ess = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    gr.max_rhat = std::max(gr.max_rhat, s.rhat);
    gr.min_ess = std::min(gr.min_ess, s.ess);
  }
  gr.divergences = 0;
  for (const ChainOutput& ch : chains) gr.divergences += ch.divergences;
  gr.pass = (gr.max_rhat <= kGateMaxRhat) && (gr.min_ess >= kGateMinEss) &&
            gr.divergences == 0;
  return gr;
}

// --- shared text helpers ---------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

template <class E>
double parse_num(const std::string& tok, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw E("cannot parse " + what + " from '" + tok + "'");
  }
  return v;
}

template <class E>
long parse_int(const std::string& tok, const std::string& what) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') {
    throw E("cannot parse " + what + " from '" + tok + "'");
  }
  return v;
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw data_error("cannot write file " + file.string());
  return os;
}

std::ofstream open_out_binary(const fs::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw data_error("cannot write file " + file.string());
  return os;
}

template <class E>
std::ifstream open_in(const fs::path& file, bool binary = false) {
  std::ifstream is(file, binary ? std::ios::binary : std::ios::in);
  if (!is) throw E("cannot open file " + file.string());
  return is;
}

}  // namespace

// --- dataset ---------------------------------------------------------------

void write_dataset(const fs::path& file, const GroupedDataset& data,
                   const std::string& scenario) {
  data.validate();
  std::ofstream os = open_out(file);
  const int N = data.n_groups();
  const bool has_z = data.has_scalar_covariate();
  os << "# frodo dataset 1\n";
  os << "# groups " << N << "\n";
  os << "# has_z " << (has_z ? 1 : 0) << "\n";
  if (!scenario.empty()) os << "# scenario " << scenario << "\n";
  for (int i = 0; i < N; ++i) {
    const auto& g = data.groups[static_cast<std::size_t>(i)];
    os << "y\t" << (i + 1) << "\t" << fmt(g.y);
    if (has_z) os << "\t" << fmt(*g.z);
    os << "\n";
  }
  for (int i = 0; i < N; ++i) {
    const auto& g = data.groups[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < g.x.size(); ++j) {
      os << "x\t" << (i + 1) << "\t" << (j + 1) << "\t" << fmt(g.x[j]) << "\n";
    }
  }
  if (!os) throw data_error("failed while writing " + file.string());
}

DatasetFile read_dataset(const fs::path& file) {
  std::ifstream is = open_in<data_error>(file);
  std::string line;
  if (!std::getline(is, line) || line != "# frodo dataset 1") {
    throw data_error(file.string() + " is not a dataset file (bad header)");
  }

  DatasetFile out;
  int declared_groups = -1;
  int declared_has_z = -1;
  std::vector<GroupRecord> groups;
  std::vector<bool> has_y;

  auto group_at = [&](long i) -> GroupRecord& {
    if (i < 1) throw data_error("group indices must be positive");
    if (static_cast<std::size_t>(i) > groups.size()) {
      groups.resize(static_cast<std::size_t>(i));
      has_y.resize(static_cast<std::size_t>(i), false);
    }
    return groups[static_cast<std::size_t>(i - 1)];
  };

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::vector<std::string> toks = split_ws(line.substr(1));
      if (toks.size() == 2 && toks[0] == "groups") {
        declared_groups =
            static_cast<int>(parse_int<data_error>(toks[1], "group count"));
      } else if (toks.size() == 2 && toks[0] == "has_z") {
        declared_has_z =
            static_cast<int>(parse_int<data_error>(toks[1], "has_z flag"));
      } else if (toks.size() == 2 && toks[0] == "scenario") {
        out.scenario = toks[1];
      }
      continue;
    }
    const std::vector<std::string> toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "y") {
      if (toks.size() != 3 && toks.size() != 4) {
        throw data_error("malformed response row: '" + line + "'");
      }
      const long i = parse_int<data_error>(toks[1], "group index");
      GroupRecord& g = group_at(i);
      if (has_y[static_cast<std::size_t>(i - 1)]) {
        throw data_error("duplicate response row for group " +
                         std::to_string(i));
      }
      g.y = parse_num<data_error>(toks[2], "response");
      if (toks.size() == 4) {
        g.z = parse_num<data_error>(toks[3], "scalar covariate");
      }
      has_y[static_cast<std::size_t>(i - 1)] = true;
    } else if (toks[0] == "x") {
      if (toks.size() != 4) {
        throw data_error("malformed covariate row: '" + line + "'");
      }
      const long i = parse_int<data_error>(toks[1], "group index");
      const long j = parse_int<data_error>(toks[2], "individual index");
      GroupRecord& g = group_at(i);
      if (j != static_cast<long>(g.x.size()) + 1) {
        throw data_error("covariate rows for group " + std::to_string(i) +
                         " are not in order");
      }
      g.x.push_back(parse_num<data_error>(toks[3], "covariate"));
    } else {
      throw data_error("unknown row tag '" + toks[0] + "' in " +
                       file.string());
    }
  }

  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (!has_y[i]) {
      throw data_error("group " + std::to_string(i + 1) +
                       " has no response row");
    }
  }
  if (declared_groups >= 0 &&
      declared_groups != static_cast<int>(groups.size())) {
    throw data_error("declared group count does not match the rows");
  }
  out.data.groups = std::move(groups);
  out.data.validate();
  if (declared_has_z >= 0 &&
      (declared_has_z != 0) != out.data.has_scalar_covariate()) {
    throw data_error("declared has_z flag does not match the rows");
  }
  return out;
}

// --- ground truth ----------------------------------------------------------

void write_truth(const fs::path& file, const GroundTruth& truth) {
  std::ofstream os = open_out(file);
  os << "# frodo truth 1\n";
  os << "scenario\t" << to_string(truth.id) << "\n";
  os << "alpha\t" << fmt(truth.alpha) << "\n";
  os << "beta_tilde\t" << fmt(truth.beta_tilde) << "\n";
  os << "sigma_y\t" << fmt(truth.sigma_y) << "\n";
  os << "beta_z\t" << fmt(truth.beta_z) << "\n";
  os << "beta_z_is_reference\t" << (truth.beta_z_is_reference ? 1 : 0) << "\n";
  os << "sizes\t" << truth.xi.size() << "\t" << truth.lambda.size() << "\t"
     << truth.z.size() << "\t" << truth.mean_y.size() << "\n";
  const std::size_t rows = std::max(
      std::max(truth.xi.size(), truth.lambda.size()),
      std::max(truth.z.size(), truth.mean_y.size()));
  auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? v[i]
                        : std::numeric_limits<double>::quiet_NaN();
  };
  for (std::size_t i = 0; i < rows; ++i) {
    os << "group\t" << (i + 1) << "\t" << fmt(at(truth.xi, i)) << "\t"
       << fmt(at(truth.lambda, i)) << "\t" << fmt(at(truth.z, i)) << "\t"
       << fmt(at(truth.mean_y, i)) << "\n";
  }
  if (!os) throw data_error("failed while writing " + file.string());
}

GroundTruth read_truth(const fs::path& file) {
  std::ifstream is = open_in<data_error>(file);
  std::string line;
  if (!std::getline(is, line) || line != "# frodo truth 1") {
    throw data_error(file.string() + " is not a ground-truth file");
  }
  GroundTruth t;
  std::size_t nxi = 0, nlam = 0, nz = 0, nmy = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    if (key == "scenario" && toks.size() == 2) {
      t.id = scenario_from_string(toks[1]);
    } else if (key == "alpha" && toks.size() == 2) {
      t.alpha = parse_num<data_error>(toks[1], "alpha");
    } else if (key == "beta_tilde" && toks.size() == 2) {
      t.beta_tilde = parse_num<data_error>(toks[1], "beta_tilde");
    } else if (key == "sigma_y" && toks.size() == 2) {
      t.sigma_y = parse_num<data_error>(toks[1], "sigma_y");
    } else if (key == "beta_z" && toks.size() == 2) {
      t.beta_z = parse_num<data_error>(toks[1], "beta_z");
    } else if (key == "beta_z_is_reference" && toks.size() == 2) {
      t.beta_z_is_reference = parse_int<data_error>(toks[1], "flag") != 0;
    } else if (key == "sizes" && toks.size() == 5) {
      nxi = static_cast<std::size_t>(parse_int<data_error>(toks[1], "size"));
      nlam = static_cast<std::size_t>(parse_int<data_error>(toks[2], "size"));
      nz = static_cast<std::size_t>(parse_int<data_error>(toks[3], "size"));
      nmy = static_cast<std::size_t>(parse_int<data_error>(toks[4], "size"));
      t.xi.assign(nxi, 0.0);
      t.lambda.assign(nlam, 0.0);
      t.z.assign(nz, 0.0);
      t.mean_y.assign(nmy, 0.0);
    } else if (key == "group" && toks.size() == 6) {
      const std::size_t i = static_cast<std::size_t>(
          parse_int<data_error>(toks[1], "group index") - 1);
      if (i < nxi) t.xi[i] = parse_num<data_error>(toks[2], "xi");
      if (i < nlam) t.lambda[i] = parse_num<data_error>(toks[3], "lambda");
      if (i < nz) t.z[i] = parse_num<data_error>(toks[4], "z");
      if (i < nmy) t.mean_y[i] = parse_num<data_error>(toks[5], "mean_y");
    } else {
      throw data_error("malformed ground-truth row: '" + line + "'");
    }
  }
  return t;
}

// --- fit configuration -----------------------------------------------------

ModelConfig FitConfig::to_model_config(const StandardizationInfo& info) const {
  ModelConfig mc;
  mc.r = r;
  mc.domain = standardize_domain(domain, info);
  mc.delta = delta;
  mc.has_scalar_covariate = has_scalar_covariate;
  mc.mu_xi_prior_mean =
      mu_xi_prior_mean ? *mu_xi_prior_mean : info.to_std_x(0.0);
  return mc;
}

FitConfig default_fit_config(const ScenarioSpec& spec,
                             const GroupedDataset& data) {
  const ModelConfig mc = default_config_for(spec, data);
  FitConfig fc;
  fc.r = mc.r;
  fc.domain = mc.domain;
  fc.delta = mc.delta;
  fc.has_scalar_covariate = mc.has_scalar_covariate;
  fc.sampler = default_sampler_for(spec.id);
  return fc;
}

void write_fit_config(const fs::path& file, const FitConfig& cfg) {
  std::ofstream os = open_out(file);
  os << "# frodo config 1\n";
  os << "r " << cfg.r << "\n";
  os << "a " << fmt(cfg.domain.a) << "\n";
  os << "b " << fmt(cfg.domain.b) << "\n";
  os << "K " << cfg.domain.K << "\n";
  os << "delta";
  for (double d : cfg.delta) os << " " << fmt(d);
  os << "\n";
  os << "has_scalar_covariate " << (cfg.has_scalar_covariate ? 1 : 0) << "\n";
  if (cfg.mu_xi_prior_mean) {
    os << "mu_xi_prior_mean " << fmt(*cfg.mu_xi_prior_mean) << "\n";
  }
  os << "chains " << cfg.sampler.chains << "\n";
  os << "warmup " << cfg.sampler.warmup << "\n";
  os << "sampling " << cfg.sampler.sampling << "\n";
  os << "max_tree_depth " << cfg.sampler.max_tree_depth << "\n";
  os << "target_accept " << fmt(cfg.sampler.target_accept) << "\n";
  os << "seed " << cfg.sampler.seed << "\n";
  if (!os) throw data_error("failed while writing " + file.string());
}

FitConfig read_fit_config(const fs::path& file) {
  std::ifstream is = open_in<config_error>(file);
  FitConfig cfg;
  bool saw_r = false, saw_a = false, saw_b = false, saw_k = false,
       saw_delta = false;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::vector<std::string> toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    auto one = [&](const char* what) -> const std::string& {
      if (toks.size() != 2) {
        throw config_error(std::string("key '") + key +
                           "' expects exactly one value (" + what + ")");
      }
      return toks[1];
    };
    if (key == "r") {
      cfg.r = static_cast<int>(parse_int<config_error>(one("order"), "r"));
      saw_r = true;
    } else if (key == "a") {
      cfg.domain.a = parse_num<config_error>(one("left endpoint"), "a");
      saw_a = true;
    } else if (key == "b") {
      cfg.domain.b = parse_num<config_error>(one("right endpoint"), "b");
      saw_b = true;
    } else if (key == "K") {
      cfg.domain.K =
          static_cast<int>(parse_int<config_error>(one("bin count"), "K"));
      saw_k = true;
    } else if (key == "delta") {
      cfg.delta.clear();
      for (std::size_t i = 1; i < toks.size(); ++i) {
        cfg.delta.push_back(parse_num<config_error>(toks[i], "delta"));
      }
      if (cfg.delta.empty()) throw config_error("delta needs at least one value");
      saw_delta = true;
    } else if (key == "has_scalar_covariate") {
      cfg.has_scalar_covariate =
          parse_int<config_error>(one("flag"), "has_scalar_covariate") != 0;
    } else if (key == "mu_xi_prior_mean") {
      cfg.mu_xi_prior_mean =
          parse_num<config_error>(one("prior mean"), "mu_xi_prior_mean");
    } else if (key == "chains") {
      cfg.sampler.chains =
          static_cast<int>(parse_int<config_error>(one("count"), "chains"));
    } else if (key == "warmup") {
      cfg.sampler.warmup =
          static_cast<int>(parse_int<config_error>(one("count"), "warmup"));
    } else if (key == "sampling") {
      cfg.sampler.sampling =
          static_cast<int>(parse_int<config_error>(one("count"), "sampling"));
    } else if (key == "max_tree_depth") {
      cfg.sampler.max_tree_depth = static_cast<int>(
          parse_int<config_error>(one("depth"), "max_tree_depth"));
    } else if (key == "target_accept") {
      cfg.sampler.target_accept =
          parse_num<config_error>(one("target"), "target_accept");
    } else if (key == "seed") {
      const std::string& tok = one("seed");
      char* end = nullptr;
      cfg.sampler.seed = std::strtoull(tok.c_str(), &end, 10);
      if (end == tok.c_str() || *end != '\0') {
        throw config_error("cannot parse seed from '" + tok + "'");
      }
    } else {
      throw config_error("unknown configuration key '" + key + "'");
    }
  }
  if (!(saw_r && saw_a && saw_b && saw_k && saw_delta)) {
    throw config_error(
        "configuration must provide r, a, b, K, and delta");
  }
  return cfg;
}

// --- draws -----------------------------------------------------------------

namespace {
constexpr char kDrawsMagic[8] = {'F', 'R', 'D', 'R', 'A', 'W', 'S', '1'};
}

void write_draws(const fs::path& file,
                 const std::vector<ChainOutput>& chains) {
  if (chains.empty()) throw config_error("no chains to write");
  const std::int32_t C = static_cast<std::int32_t>(chains.size());
  const std::int32_t S = static_cast<std::int32_t>(chains.front().draws.rows());
  const std::int32_t D = static_cast<std::int32_t>(chains.front().draws.cols());
  for (const ChainOutput& ch : chains) {
    if (ch.draws.rows() != S || ch.draws.cols() != D) {
      throw config_error("chains disagree on draw matrix shape");
    }
  }
  std::ofstream os = open_out_binary(file);
  os.write(kDrawsMagic, sizeof(kDrawsMagic));
  os.write(reinterpret_cast<const char*>(&C), sizeof(C));
  os.write(reinterpret_cast<const char*>(&S), sizeof(S));
  os.write(reinterpret_cast<const char*>(&D), sizeof(D));
  for (const ChainOutput& ch : chains) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                        Eigen::RowMajor>
        rm = ch.draws;
    os.write(reinterpret_cast<const char*>(rm.data()),
             static_cast<std::streamsize>(sizeof(double) *
                                          static_cast<std::size_t>(S) *
                                          static_cast<std::size_t>(D)));
  }
  if (!os) throw data_error("failed while writing " + file.string());
}

std::vector<Eigen::MatrixXd> read_draws(const fs::path& file) {
  std::ifstream is = open_in<data_error>(file, /*binary=*/true);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kDrawsMagic, sizeof(magic)) != 0) {
    throw data_error(file.string() + " is not a draws file");
  }
  std::int32_t C = 0, S = 0, D = 0;
  is.read(reinterpret_cast<char*>(&C), sizeof(C));
  is.read(reinterpret_cast<char*>(&S), sizeof(S));
  is.read(reinterpret_cast<char*>(&D), sizeof(D));
  if (!is || C < 1 || S < 1 || D < 1 || C > 1000000 || S > 100000000 ||
      D > 100000000) {
    throw data_error(file.string() + " has an invalid draws header");
  }
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(C));
  for (std::int32_t c = 0; c < C; ++c) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        S, D);
    is.read(reinterpret_cast<char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         static_cast<std::size_t>(S) *
                                         static_cast<std::size_t>(D)));
    if (!is) throw data_error(file.string() + " is truncated");
    out.emplace_back(rm);
  }
  return out;
}

// --- the end-to-end fit ----------------------------------------------------

FitResult fit_frodo(const GroupedDataset& raw, const FitOptions& opts) {
  const SamplerSettings& st = opts.config.sampler;
  st.validate();
  raw.validate();
  if (static_cast<long>(st.chains) * st.sampling < 100) {
    throw config_error(
        "need at least 100 retained draws in total for posterior bands");
  }

  const StandardizedData sd = standardize(raw);
  const ModelConfig cfg = opts.config.to_model_config(sd.info);
  const int N = raw.n_groups();
  cfg.validate(N);
  if (cfg.has_scalar_covariate != raw.has_scalar_covariate()) {
    throw config_error(
        "has_scalar_covariate does not match the dataset contents");
  }
  for (int g : opts.density_groups) {
    if (g < 1 || g > N) {
      throw config_error("density group index " + std::to_string(g) +
                         " is out of range");
    }
  }

  const BinnedCovariates binned = bin_covariates(sd.data, cfg.domain);
  Eigen::VectorXd y(N);
  std::optional<Eigen::VectorXd> z;
  if (cfg.has_scalar_covariate) z.emplace(N);
  for (int i = 0; i < N; ++i) {
    y[i] = sd.data.groups[static_cast<std::size_t>(i)].y;
    if (z) (*z)[i] = *sd.data.groups[static_cast<std::size_t>(i)].z;
  }
  const FrodoModel model(binned, y, z, cfg);

  const InitSettings init_settings;
  InitResult init = base_init(binned, sd.data, cfg, init_settings);
  const std::vector<Eigen::VectorXd> starts =
      jittered_starts(init.state, model, init_settings, st.chains, st.seed);

  FitResult out;
  out.config = cfg;
  out.raw_domain = opts.config.domain;
  out.info = sd.info;
  out.settings = st;
  out.chains = run_chains(model, starts, st);
  out.names = model.layout().names();
  out.summaries = summarize_draws(out.chains, out.names);
  out.gates = evaluate_gates(out.summaries, out.chains);
  out.pspline_fallbacks = init.pspline_fallbacks;
  out.init_warnings = std::move(init.warnings);
  out.density_groups = opts.density_groups;

  // Per-draw decode of the reported estimands, back to the original scale.
  const ParamLayout& lay = model.layout();
  const Eigen::VectorXd& w = model.central_weights();
  const int K = cfg.K();
  const double h_std = cfg.domain.h();
  long total = 0;
  for (const ChainOutput& ch : out.chains) total += ch.draws.rows();
  Eigen::MatrixXd beta_draws(total, K);
  std::vector<Eigen::MatrixXd> dens_draws(
      opts.density_groups.size(), Eigen::MatrixXd(total, K));
  std::vector<double> sig, alp, bz;
  sig.reserve(static_cast<std::size_t>(total));
  alp.reserve(static_cast<std::size_t>(total));
  if (cfg.has_scalar_covariate) bz.reserve(static_cast<std::size_t>(total));

  long row = 0;
  for (const ChainOutput& ch : out.chains) {
    for (long s = 0; s < ch.draws.rows(); ++s) {
      const Eigen::VectorXd q = ch.draws.row(s).transpose();
      const ParameterState state = unflatten(q, lay);
      sig.push_back(decode_sigma_y(state) * sd.info.y_sd);
      alp.push_back(sd.info.from_std_y(state.alpha));
      if (cfg.has_scalar_covariate) bz.push_back(state.beta_z * sd.info.y_sd);
      const Eigen::VectorXd beta0 = decode_beta0(state, cfg);
      const Eigen::VectorXd beta = center_beta(beta0, w);
      beta_draws.row(row) = (beta * sd.info.y_sd).transpose();
      if (!opts.density_groups.empty()) {
        const Eigen::MatrixXd theta = decode_theta(state, cfg);
        for (std::size_t gi = 0; gi < opts.density_groups.size(); ++gi) {
          const int g = opts.density_groups[gi] - 1;
          const Eigen::VectorXd phi =
              density_coefficients(theta.row(g).transpose(), h_std);
          dens_draws[gi].row(row) = (phi / sd.info.x_sd).transpose();
        }
      }
      ++row;
    }
  }

  out.sigma_y = summarize_scalar(std::move(sig));
  out.alpha = summarize_scalar(std::move(alp));
  if (cfg.has_scalar_covariate) out.beta_z = summarize_scalar(std::move(bz));
  out.beta_band = functional_bands(beta_draws);
  out.beta_midpoints.resize(K);
  for (int k = 0; k < K; ++k) {
    out.beta_midpoints[k] = opts.config.domain.midpoint(k + 1);
  }
  out.secant_slope = secant_slope(out.beta_band.mean, opts.config.domain);
  for (Eigen::MatrixXd& dd : dens_draws) {
    out.density_bands.push_back(functional_bands(dd));
  }
  return out;
}

// --- artifact emission -----------------------------------------------------

namespace {

void write_summary_tsv(const fs::path& file,
                       const std::vector<ParameterSummary>& summaries) {
  std::ofstream os = open_out(file);
  os << "# frodo summary 1\n";
  os << "name\tmean\tsd\tq025\tq975\tess\tess_raw\trhat\n";
  for (const ParameterSummary& s : summaries) {
    os << s.name << "\t" << fmt(s.mean) << "\t" << fmt(s.sd) << "\t"
       << fmt(s.q025) << "\t" << fmt(s.q975) << "\t" << fmt(s.ess) << "\t"
       << fmt(s.ess_raw) << "\t" << fmt(s.rhat) << "\n";
  }
  if (!os) throw data_error("failed while writing " + file.string());
}

void write_band_tsv(const fs::path& file, const Eigen::VectorXd& midpoints,
                    const FunctionalBand& band) {
  std::ofstream os = open_out(file);
  os << "# frodo band 1\n";
  os << "midpoint\tmean\tlower\tupper\n";
  for (long k = 0; k < midpoints.size(); ++k) {
    os << fmt(midpoints[k]) << "\t" << fmt(band.mean[k]) << "\t"
       << fmt(band.lower[k]) << "\t" << fmt(band.upper[k]) << "\n";
  }
  if (!os) throw data_error("failed while writing " + file.string());
}

void write_estimand_row(std::ofstream& os, const std::string& name,
                        const ScalarSummary& s) {
  os << name << "\t" << fmt(s.mean) << "\t" << fmt(s.sd) << "\t"
     << fmt(s.q025) << "\t" << fmt(s.q975) << "\n";
}

void write_estimands_header(std::ofstream& os,
                            const StandardizationInfo& info) {
  os << "# frodo estimands 1\n";
  os << "# x_mean " << fmt(info.x_mean) << "\n";
  os << "# x_sd " << fmt(info.x_sd) << "\n";
  os << "# y_mean " << fmt(info.y_mean) << "\n";
  os << "# y_sd " << fmt(info.y_sd) << "\n";
  os << "name\tmean\tsd\tq025\tq975\n";
}

nlohmann::json gates_json(const GateReport& g) {
  return nlohmann::json{{"max_rhat", g.max_rhat},
                        {"min_ess", g.min_ess},
                        {"divergences", g.divergences},
                        {"pass", g.pass}};
}

nlohmann::json sampler_json(const SamplerSettings& s) {
  return nlohmann::json{{"chains", s.chains},
                        {"warmup", s.warmup},
                        {"sampling", s.sampling},
                        {"max_tree_depth", s.max_tree_depth},
                        {"target_accept", s.target_accept},
                        {"seed", s.seed}};
}

nlohmann::json standardization_json(const StandardizationInfo& info) {
  return nlohmann::json{{"x_mean", info.x_mean},
                        {"x_sd", info.x_sd},
                        {"y_mean", info.y_mean},
                        {"y_sd", info.y_sd}};
}

nlohmann::json chains_json(const std::vector<ChainOutput>& chains) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ChainOutput& ch : chains) {
    arr.push_back({{"seconds", ch.elapsed_seconds},
                   {"step_size", ch.step_size},
                   {"divergences", ch.divergences},
                   {"warmup_divergences", ch.warmup_divergences}});
  }
  return arr;
}

void dump_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream os = open_out(file);
  os << j.dump(2) << "\n";
  if (!os) throw data_error("failed while writing " + file.string());
}

}  // namespace

void write_fit_artifacts(const fs::path& dir, const FitResult& fit,
                         const std::string& scenario) {
  fs::create_directories(dir);
  write_draws(dir / "draws.bin", fit.chains);
  write_summary_tsv(dir / "summary.tsv", fit.summaries);

  {
    std::ofstream os = open_out(dir / "estimands.tsv");
    write_estimands_header(os, fit.info);
    write_estimand_row(os, "sigma_y", fit.sigma_y);
    write_estimand_row(os, "alpha", fit.alpha);
    if (fit.config.has_scalar_covariate) {
      write_estimand_row(os, "beta_z", fit.beta_z);
    }
    ScalarSummary slope;
    slope.mean = fit.secant_slope;
    write_estimand_row(os, "secant_slope", slope);
    if (!os) throw data_error("failed while writing estimands");
  }

  write_band_tsv(dir / "beta_band.tsv", fit.beta_midpoints, fit.beta_band);
  for (std::size_t gi = 0; gi < fit.density_groups.size(); ++gi) {
    write_band_tsv(dir / ("density_band_" +
                          std::to_string(fit.density_groups[gi]) + ".tsv"),
                   fit.beta_midpoints, fit.density_bands[gi]);
  }

  nlohmann::json j;
  j["version"] = kVersion;
  j["model"] = "frodo";
  if (!scenario.empty()) j["scenario"] = scenario;
  j["sampler"] = sampler_json(fit.settings);
  j["config"] = {{"r", fit.config.r},
                 {"a", fit.raw_domain.a},
                 {"b", fit.raw_domain.b},
                 {"K", fit.raw_domain.K},
                 {"delta", fit.config.delta},
                 {"has_scalar_covariate", fit.config.has_scalar_covariate},
                 {"mu_xi_prior_mean", fit.config.mu_xi_prior_mean},
                 {"standardized_a", fit.config.domain.a},
                 {"standardized_b", fit.config.domain.b}};
  j["standardization"] = standardization_json(fit.info);
  j["chains"] = chains_json(fit.chains);
  j["gates"] = gates_json(fit.gates);
  j["init"] = {{"pspline_fallbacks", fit.pspline_fallbacks},
               {"warnings", fit.init_warnings}};
  dump_json(dir / "manifest.json", j);
}

void write_baseline_artifacts(const fs::path& dir,
                              const BaselineResult& result,
                              const SamplerSettings& settings) {
  fs::create_directories(dir);
  write_draws(dir / "draws.bin", result.chains);
  write_summary_tsv(dir / "summary.tsv", result.summaries);
  {
    std::ofstream os = open_out(dir / "estimands.tsv");
    write_estimands_header(os, result.info);
    write_estimand_row(os, "sigma_y", result.sigma_y);
    write_estimand_row(os, "slope", result.slope);
    write_estimand_row(os, "beta_z", result.beta_z);
    if (!os) throw data_error("failed while writing estimands");
  }
  const GateReport gates = evaluate_gates(result.summaries, result.chains);
  nlohmann::json j;
  j["version"] = kVersion;
  j["model"] = to_string(result.kind);
  j["scenario"] = to_string(result.scenario);
  j["sampler"] = sampler_json(settings);
  j["standardization"] = standardization_json(result.info);
  j["chains"] = chains_json(result.chains);
  j["gates"] = gates_json(gates);
  dump_json(dir / "manifest.json", j);
}

// --- report ----------------------------------------------------------------

namespace {

struct RunInfo {
  fs::path dir;
  std::string model;
  std::string scenario;
  GateReport gates;
  std::map<std::string, ScalarSummary> estimands;
};

double json_num(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

RunInfo read_run(const fs::path& dir) {
  RunInfo run;
  run.dir = dir;
  std::ifstream mf = open_in<data_error>(dir / "manifest.json");
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("cannot parse " + (dir / "manifest.json").string() +
                     ": " + e.what());
  }
  run.model = j.value("model", std::string("unknown"));
  run.scenario = j.value("scenario", std::string(""));
  if (j.contains("gates")) {
    run.gates.max_rhat = json_num(j["gates"]["max_rhat"]);
    run.gates.min_ess = json_num(j["gates"]["min_ess"]);
    run.gates.divergences = j["gates"]["divergences"].get<long>();
    run.gates.pass = j["gates"]["pass"].get<bool>();
  }

  std::ifstream es = open_in<data_error>(dir / "estimands.tsv");
  std::string line;
  while (std::getline(es, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> toks = split_ws(line);
    if (toks.size() != 5 || toks[0] == "name") continue;
    ScalarSummary s;
    s.mean = parse_num<data_error>(toks[1], "mean");
    s.sd = parse_num<data_error>(toks[2], "sd");
    s.q025 = parse_num<data_error>(toks[3], "q025");
    s.q975 = parse_num<data_error>(toks[4], "q975");
    run.estimands[toks[0]] = s;
  }
  return run;
}

int model_rank(const std::string& model) {
  if (model == "frodo") return 0;
  if (model == "hierarchical") return 1;
  if (model == "naive_linear") return 2;
  if (model == "naive_gam") return 3;
  if (model == "naive_transformed") return 4;
  return 5;
}

std::string fmt3(double v) {
  if (std::isnan(v)) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void write_report(const fs::path& out_dir,
                  const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw config_error("report needs at least one run");
  fs::create_directories(out_dir);

  std::vector<RunInfo> runs;
  for (const fs::path& d : run_dirs) runs.push_back(read_run(d));
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunInfo& a, const RunInfo& b) {
                     return model_rank(a.model) < model_rank(b.model);
                   });

  auto estimand = [](const RunInfo& r, const std::string& name) {
    const auto it = r.estimands.find(name);
    return it == r.estimands.end() ? ScalarSummary{} : it->second;
  };
  auto slope_of = [&](const RunInfo& r) {
    return r.model == "frodo" ? estimand(r, "secant_slope")
                              : estimand(r, "slope");
  };

  {
    std::ofstream os = open_out(out_dir / "report.tsv");
    os << "# frodo report 1\n";
    os << "model\tscenario\tsigma_y_mean\tsigma_y_sd\tsigma_y_q025\t"
          "sigma_y_q975\tslope_mean\tslope_q025\tslope_q975\tmax_rhat\t"
          "min_ess\tdivergences\n";
    for (const RunInfo& r : runs) {
      const ScalarSummary sy = estimand(r, "sigma_y");
      const ScalarSummary sl = slope_of(r);
      os << r.model << "\t" << (r.scenario.empty() ? "-" : r.scenario) << "\t"
         << fmt(sy.mean) << "\t" << fmt(sy.sd) << "\t" << fmt(sy.q025) << "\t"
         << fmt(sy.q975) << "\t" << fmt(sl.mean) << "\t" << fmt(sl.q025)
         << "\t" << fmt(sl.q975) << "\t" << fmt(r.gates.max_rhat) << "\t"
         << fmt(r.gates.min_ess) << "\t" << r.gates.divergences << "\n";
    }
    if (!os) throw data_error("failed while writing report.tsv");
  }

  {
    std::ofstream os = open_out(out_dir / "report.txt");
    os << "Posterior sigma_Y (original scale)\n";
    os << "  model               scenario          mean (2.5%, 97.5%)\n";
    for (const RunInfo& r : runs) {
      const ScalarSummary sy = estimand(r, "sigma_y");
      char line[160];
      std::snprintf(line, sizeof line, "  %-19s %-17s %s (%s, %s)\n",
                    r.model.c_str(),
                    r.scenario.empty() ? "-" : r.scenario.c_str(),
                    fmt3(sy.mean).c_str(), fmt3(sy.q025).c_str(),
                    fmt3(sy.q975).c_str());
      os << line;
    }
    os << "\nSlope estimates (original scale)\n";
    for (const RunInfo& r : runs) {
      const ScalarSummary sl = slope_of(r);
      if (std::isnan(sl.mean)) continue;
      os << "  " << r.model << ": " << fmt3(sl.mean);
      if (!std::isnan(sl.q025)) {
        os << " (" << fmt3(sl.q025) << ", " << fmt3(sl.q975) << ")";
      }
      os << "\n";
    }
    os << "\nDiagnostic gates\n";
    for (const RunInfo& r : runs) {
      os << "  " << r.model << ": " << (r.gates.pass ? "pass" : "FAIL")
         << " (max rhat " << fmt3(r.gates.max_rhat) << ", min ess "
         << fmt3(r.gates.min_ess) << ", divergences " << r.gates.divergences
         << ")\n";
    }
    if (!os) throw data_error("failed while writing report.txt");
  }

  // Copy plot-ready band tables next to the report.
  std::map<std::string, int> used;
  for (const RunInfo& r : runs) {
    std::string label = r.model;
    const int n = used[label]++;
    if (n > 0) label += "_" + std::to_string(n + 1);
    const fs::path beta = r.dir / "beta_band.tsv";
    if (fs::exists(beta)) {
      fs::copy_file(beta, out_dir / (label + "_beta_band.tsv"),
                    fs::copy_options::overwrite_existing);
    }
    for (const auto& entry : fs::directory_iterator(r.dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("density_band_", 0) == 0) {
        fs::copy_file(entry.path(), out_dir / (label + "_" + name),
                      fs::copy_options::overwrite_existing);
      }
    }
  }
}

}  // namespace frodo
