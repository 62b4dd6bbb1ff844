#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frodo/init.hpp"
#include "frodo/layout.hpp"
#include "frodo/model.hpp"
#include "frodo/pipeline.hpp"
#include "frodo/simulate.hpp"

using namespace frodo;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() /
                       ("frodo_pipeline_" + tag + "_" +
                        std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

GroupedDataset toy_dataset() {
  GroupedDataset d;
  d.groups.push_back({1.25, {0.11, 0.52, 0.97, 0.33}, std::nullopt});
  d.groups.push_back({-0.75, {0.42, 0.18, 0.66, 0.74}, std::nullopt});
  d.groups.push_back({0.10, {0.29, 0.88, 0.05, 0.51}, std::nullopt});
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(FRODO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

}  // namespace

TEST_CASE("standardizing twice is the identity") {
  ScenarioSpec spec = ScenarioSpec::defaults_for(Scenario::gauss_linear);
  spec.n_groups = 9;
  spec.group_size = 7;
  spec.seed = 41;
  const GroupedDataset raw = simulate(spec).data;

  const StandardizedData once = standardize(raw);
  const StandardizedData twice = standardize(once.data);
  CHECK(std::fabs(twice.info.x_mean) < 1e-12);
  CHECK(std::fabs(twice.info.x_sd - 1.0) < 1e-12);
  CHECK(std::fabs(twice.info.y_mean) < 1e-12);
  CHECK(std::fabs(twice.info.y_sd - 1.0) < 1e-12);
  for (std::size_t i = 0; i < raw.groups.size(); ++i) {
    CHECK(std::fabs(twice.data.groups[i].y - once.data.groups[i].y) < 1e-12);
    for (std::size_t j = 0; j < raw.groups[i].x.size(); ++j) {
      CHECK(std::fabs(twice.data.groups[i].x[j] - once.data.groups[i].x[j]) <
            1e-12);
    }
  }
}

TEST_CASE("affine response changes leave the standardized data unchanged") {
  GroupedDataset raw = toy_dataset();
  GroupedDataset shifted = raw;
  for (auto& g : shifted.groups) g.y = 2.0 * g.y + 3.0;

  const StandardizedData a = standardize(raw);
  const StandardizedData b = standardize(shifted);
  CHECK(std::fabs(b.info.y_sd - 2.0 * a.info.y_sd) < 1e-12);
  CHECK(std::fabs(b.info.y_mean - (2.0 * a.info.y_mean + 3.0)) < 1e-12);
  for (std::size_t i = 0; i < raw.groups.size(); ++i) {
    CHECK(std::fabs(b.data.groups[i].y - a.data.groups[i].y) < 1e-10);
  }
  // Back-transform returns the shifted scale.
  const double v = a.data.groups[0].y;
  CHECK(std::fabs(b.info.from_std_y(v) - (2.0 * a.info.from_std_y(v) + 3.0)) <
        1e-10);
}

TEST_CASE("standardize rejects degenerate inputs") {
  GroupedDataset flat_y = toy_dataset();
  for (auto& g : flat_y.groups) g.y = 1.0;
  CHECK_THROWS_AS(standardize(flat_y), data_error);

  GroupedDataset flat_x = toy_dataset();
  for (auto& g : flat_x.groups) g.x.assign(g.x.size(), 0.5);
  CHECK_THROWS_AS(standardize(flat_x), data_error);

  GroupedDataset one;
  one.groups.push_back({0.0, {0.1, 0.2}, std::nullopt});
  CHECK_THROWS_AS(standardize(one), data_error);
}

TEST_CASE("domain standardization is the same affine map as the data") {
  StandardizationInfo info;
  info.x_mean = 2.0;
  info.x_sd = 4.0;
  DomainSpec raw{-2.0, 10.0, 6};
  const DomainSpec std_dom = standardize_domain(raw, info);
  CHECK(std::fabs(std_dom.a - (-1.0)) < 1e-15);
  CHECK(std::fabs(std_dom.b - 2.0) < 1e-15);
  CHECK(std_dom.K == 6);
  CHECK(std::fabs(std_dom.h() - raw.h() / info.x_sd) < 1e-15);

  info.x_sd = -1.0;  // produces a reversed interval
  CHECK_THROWS_AS(standardize_domain(raw, info), config_error);
}

TEST_CASE("binning puts endpoints and midpoints into the right bins") {
  const DomainSpec dom{0.0, 1.0, 4};
  GroupedDataset d;
  d.groups.push_back({0.0, {0.0, 0.2499999, 0.25, 0.999}, std::nullopt});
  d.groups.push_back({1.0, {1.0, dom.midpoint(1), dom.midpoint(2),
                            dom.midpoint(3), dom.midpoint(4)},
                      std::nullopt});
  const BinnedCovariates bc = bin_covariates(d, dom);
  CHECK(bc.counts(0, 0) == 2.0);  // left endpoint and 0.2499999
  CHECK(bc.counts(0, 1) == 1.0);  // 0.25 starts the second bin
  CHECK(bc.counts(0, 3) == 1.0);
  CHECK(bc.counts(1, 3) == 2.0);  // right endpoint joins the last bin
  CHECK(bc.counts(1, 0) == 1.0);
  CHECK(bc.counts(1, 1) == 1.0);
  CHECK(bc.counts(1, 2) == 1.0);
  CHECK(bc.n[0] == 4.0);
  CHECK(bc.n[1] == 5.0);

  d.groups[1].x.push_back(1.25);
  try {
    bin_covariates(d, dom);
    FAIL("expected a data error");
  } catch (const data_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("group 2") != std::string::npos);
    CHECK(msg.find("1.25") != std::string::npos);
  }
}

TEST_CASE("dataset files round-trip bit-exactly") {
  const fs::path dir = fresh_dir("dataset");
  GroupedDataset d;
  d.groups.push_back(
      {std::sqrt(2.0), {-1.0 / 3.0, 5.5e-17, 123456.789012345}, 0.25});
  d.groups.push_back({-7.125e3, {2.0 / 7.0, -0.0}, -std::sqrt(3.0)});

  write_dataset(dir / "dataset.tsv", d, "croon");
  const DatasetFile back = read_dataset(dir / "dataset.tsv");
  CHECK(back.scenario == "croon");
  REQUIRE(back.data.groups.size() == 2);
  for (std::size_t i = 0; i < d.groups.size(); ++i) {
    CHECK(back.data.groups[i].y == d.groups[i].y);
    CHECK(*back.data.groups[i].z == *d.groups[i].z);
    REQUIRE(back.data.groups[i].x.size() == d.groups[i].x.size());
    for (std::size_t j = 0; j < d.groups[i].x.size(); ++j) {
      CHECK(back.data.groups[i].x[j] == d.groups[i].x[j]);
    }
  }

  // Writing what was read reproduces the file byte for byte.
  write_dataset(dir / "again.tsv", back.data, back.scenario);
  CHECK(slurp(dir / "again.tsv") == slurp(dir / "dataset.tsv"));
}

TEST_CASE("dataset reader rejects malformed files") {
  const fs::path dir = fresh_dir("badfiles");
  auto write_text = [&](const std::string& name, const std::string& body) {
    std::ofstream os(dir / name);
    os << body;
  };

  write_text("nohdr.tsv", "y\t1\t0.5\n");
  CHECK_THROWS_AS(read_dataset(dir / "nohdr.tsv"), data_error);

  write_text("dup.tsv",
             "# frodo dataset 1\ny\t1\t0.5\ny\t1\t0.7\nx\t1\t1\t0.1\n");
  CHECK_THROWS_AS(read_dataset(dir / "dup.tsv"), data_error);

  write_text("order.tsv",
             "# frodo dataset 1\ny\t1\t0.5\nx\t1\t2\t0.1\n");
  CHECK_THROWS_AS(read_dataset(dir / "order.tsv"), data_error);

  write_text("noy.tsv",
             "# frodo dataset 1\ny\t2\t0.5\nx\t2\t1\t0.1\nx\t1\t1\t0.3\n");
  CHECK_THROWS_AS(read_dataset(dir / "noy.tsv"), data_error);

  write_text("tag.tsv", "# frodo dataset 1\nq\t1\t0.5\n");
  CHECK_THROWS_AS(read_dataset(dir / "tag.tsv"), data_error);

  write_text("count.tsv",
             "# frodo dataset 1\n# groups 3\ny\t1\t0.5\nx\t1\t1\t0.1\n"
             "y\t2\t0.2\nx\t2\t1\t0.4\n");
  CHECK_THROWS_AS(read_dataset(dir / "count.tsv"), data_error);

  CHECK_THROWS_AS(read_dataset(dir / "missing.tsv"), data_error);
}

TEST_CASE("ground truth files round-trip including empty columns") {
  const fs::path dir = fresh_dir("truth");
  GroundTruth t;
  t.id = Scenario::exp_linear;
  t.alpha = 1.5;
  t.beta_tilde = -2.0 / 3.0;
  t.sigma_y = 0.1;
  t.beta_z = 0.0;
  t.beta_z_is_reference = false;
  t.lambda = {0.5, std::sqrt(7.0), 80.0};
  t.mean_y = {1.0, 2.0, std::numeric_limits<double>::quiet_NaN()};
  // xi and z stay empty: the reader must preserve that, not invent NaN rows.

  write_truth(dir / "truth.tsv", t);
  const GroundTruth back = read_truth(dir / "truth.tsv");
  CHECK(back.id == t.id);
  CHECK(back.alpha == t.alpha);
  CHECK(back.beta_tilde == t.beta_tilde);
  CHECK(back.sigma_y == t.sigma_y);
  CHECK(back.beta_z_is_reference == t.beta_z_is_reference);
  CHECK(back.xi.empty());
  CHECK(back.z.empty());
  REQUIRE(back.lambda.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back.lambda[i] == t.lambda[i]);
  REQUIRE(back.mean_y.size() == 3);
  CHECK(back.mean_y[0] == 1.0);
  CHECK(back.mean_y[1] == 2.0);
  CHECK(std::isnan(back.mean_y[2]));
}

TEST_CASE("configuration files round-trip and reject unknown keys") {
  const fs::path dir = fresh_dir("config");
  FitConfig cfg;
  cfg.r = 2;
  cfg.domain = DomainSpec{-1.25, 3.75, 8};
  cfg.delta = {0.1, 0.25, 1.0 / 3.0};
  cfg.has_scalar_covariate = true;
  cfg.mu_xi_prior_mean = -0.73;
  cfg.sampler.chains = 3;
  cfg.sampler.warmup = 321;
  cfg.sampler.sampling = 654;
  cfg.sampler.max_tree_depth = 9;
  cfg.sampler.target_accept = 0.93;
  cfg.sampler.seed = 123456789012345ull;

  write_fit_config(dir / "config.txt", cfg);
  const FitConfig back = read_fit_config(dir / "config.txt");
  CHECK(back.r == cfg.r);
  CHECK(back.domain.a == cfg.domain.a);
  CHECK(back.domain.b == cfg.domain.b);
  CHECK(back.domain.K == cfg.domain.K);
  REQUIRE(back.delta.size() == cfg.delta.size());
  for (std::size_t i = 0; i < cfg.delta.size(); ++i) {
    CHECK(back.delta[i] == cfg.delta[i]);
  }
  CHECK(back.has_scalar_covariate == cfg.has_scalar_covariate);
  REQUIRE(back.mu_xi_prior_mean.has_value());
  CHECK(*back.mu_xi_prior_mean == *cfg.mu_xi_prior_mean);
  CHECK(back.sampler.chains == cfg.sampler.chains);
  CHECK(back.sampler.warmup == cfg.sampler.warmup);
  CHECK(back.sampler.sampling == cfg.sampler.sampling);
  CHECK(back.sampler.max_tree_depth == cfg.sampler.max_tree_depth);
  CHECK(back.sampler.target_accept == cfg.sampler.target_accept);
  CHECK(back.sampler.seed == cfg.sampler.seed);

  cfg.mu_xi_prior_mean.reset();
  write_fit_config(dir / "nomu.txt", cfg);
  CHECK_FALSE(read_fit_config(dir / "nomu.txt").mu_xi_prior_mean.has_value());

  auto write_text = [&](const std::string& name, const std::string& body) {
    std::ofstream os(dir / name);
    os << body;
  };
  write_text("unknown.txt", "r 3\na 0\nb 1\nK 5\ndelta 0.1\nwhatever 7\n");
  CHECK_THROWS_AS(read_fit_config(dir / "unknown.txt"), config_error);
  write_text("badnum.txt", "r 3\na zero\nb 1\nK 5\ndelta 0.1\n");
  CHECK_THROWS_AS(read_fit_config(dir / "badnum.txt"), config_error);
  write_text("missing.txt", "r 3\na 0\nb 1\n");
  CHECK_THROWS_AS(read_fit_config(dir / "missing.txt"), config_error);
  CHECK_THROWS_AS(read_fit_config(dir / "nofile.txt"), config_error);
}

TEST_CASE("draw files round-trip exactly") {
  const fs::path dir = fresh_dir("draws");
  std::vector<ChainOutput> chains(2);
  Rng rng(7, 0);
  for (ChainOutput& ch : chains) {
    ch.draws.resize(5, 3);
    for (long s = 0; s < 5; ++s) {
      for (long d = 0; d < 3; ++d) ch.draws(s, d) = rng.normal();
    }
  }
  write_draws(dir / "draws.bin", chains);
  const std::vector<Eigen::MatrixXd> back = read_draws(dir / "draws.bin");
  REQUIRE(back.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK((back[c] - chains[c].draws).cwiseAbs().maxCoeff() == 0.0);
  }

  chains[1].draws.resize(4, 3);
  CHECK_THROWS_AS(write_draws(dir / "bad.bin", chains), config_error);

  // A truncated file must be detected.
  const std::string whole = slurp(dir / "draws.bin");
  std::ofstream os(dir / "short.bin", std::ios::binary);
  os.write(whole.data(),
           static_cast<std::streamsize>(whole.size() - 16));
  os.close();
  CHECK_THROWS_AS(read_draws(dir / "short.bin"), data_error);
}

TEST_CASE("gate evaluation takes worst cases and fails on NaN") {
  auto summary = [](double rhat, double ess) {
    ParameterSummary s;
    s.name = "p";
    s.rhat = rhat;
    s.ess = ess;
    return s;
  };
  std::vector<ChainOutput> chains(2);

  std::vector<ParameterSummary> good = {summary(1.004, 612.0),
                                        summary(1.009, 451.0)};
  GateReport g = evaluate_gates(good, chains);
  CHECK(g.max_rhat == 1.009);
  CHECK(g.min_ess == 451.0);
  CHECK(g.divergences == 0);
  CHECK(g.pass);

  g = evaluate_gates({summary(1.02, 800.0), summary(1.0, 900.0)}, chains);
  CHECK_FALSE(g.pass);
  g = evaluate_gates({summary(1.0, 399.0)}, chains);
  CHECK_FALSE(g.pass);

  chains[1].divergences = 3;
  g = evaluate_gates(good, chains);
  CHECK(g.divergences == 3);
  CHECK_FALSE(g.pass);
  chains[1].divergences = 0;

  g = evaluate_gates(
      {summary(std::numeric_limits<double>::quiet_NaN(), 500.0)}, chains);
  CHECK(std::isnan(g.max_rhat));
  CHECK_FALSE(g.pass);
}

TEST_CASE("a three-group fit completes with finite estimands") {
  GroupedDataset d = toy_dataset();
  FitOptions opts;
  opts.config.r = 1;
  opts.config.domain = DomainSpec{0.0, 1.0, 5};
  opts.config.delta = {0.5};
  opts.config.sampler.chains = 1;
  opts.config.sampler.warmup = 150;
  opts.config.sampler.sampling = 120;
  opts.config.sampler.target_accept = 0.8;
  opts.config.sampler.seed = 4;
  const FitResult fit = fit_frodo(d, opts);
  CHECK(std::isfinite(fit.sigma_y.mean));
  CHECK(std::isfinite(fit.alpha.mean));
  CHECK(std::isfinite(fit.secant_slope));
  CHECK(std::isnan(fit.beta_z.mean));
  CHECK(fit.beta_band.mean.size() == 5);
  CHECK(fit.beta_midpoints.size() == 5);

  // Too few retained draws for a meaningful band is refused up front.
  opts.config.sampler.sampling = 80;
  CHECK_THROWS_AS(fit_frodo(d, opts), config_error);
  opts.config.sampler.sampling = 120;
  opts.density_groups = {0};
  CHECK_THROWS_AS(fit_frodo(d, opts), config_error);
  opts.density_groups = {4};
  CHECK_THROWS_AS(fit_frodo(d, opts), config_error);
  opts.density_groups.clear();
  opts.config.has_scalar_covariate = true;
  CHECK_THROWS_AS(fit_frodo(d, opts), config_error);
}

namespace {

ScenarioSpec small_gauss_spec() {
  ScenarioSpec spec = ScenarioSpec::defaults_for(Scenario::gauss_linear);
  spec.n_groups = 10;
  spec.group_size = 8;
  spec.seed = 5;
  return spec;
}

FitOptions quick_fit_options(const ScenarioSpec& spec,
                             const GroupedDataset& data) {
  FitOptions opts;
  opts.config = default_fit_config(spec, data);
  opts.config.sampler.chains = 2;
  opts.config.sampler.warmup = 250;
  opts.config.sampler.sampling = 200;
  opts.config.sampler.target_accept = 0.9;
  opts.config.sampler.seed = 12;
  return opts;
}

}  // namespace

TEST_CASE("the fit decodes estimands consistently with the public decoders") {
  const ScenarioSpec spec = small_gauss_spec();
  const GroupedDataset raw = simulate(spec).data;
  FitOptions opts = quick_fit_options(spec, raw);
  opts.density_groups = {2, 7};
  const FitResult fit = fit_frodo(raw, opts);

  const int K = fit.config.K();
  CHECK(fit.beta_band.mean.size() == K);
  CHECK(fit.beta_midpoints.size() == K);
  CHECK(std::fabs(fit.beta_midpoints[0] - opts.config.domain.midpoint(1)) <
        1e-15);
  REQUIRE(fit.density_bands.size() == 2);
  CHECK(fit.density_bands[0].mean.size() == K);
  CHECK(fit.sigma_y.mean > 0.0);
  CHECK(fit.sigma_y.mean < 3.0);

  // The gate report equals a fresh evaluation of the same summaries.
  const GateReport again = evaluate_gates(fit.summaries, fit.chains);
  CHECK(fit.gates.max_rhat == again.max_rhat);
  CHECK(fit.gates.min_ess == again.min_ess);
  CHECK(fit.gates.divergences == again.divergences);
  CHECK(fit.gates.pass == again.pass);

  // Recompute the scalar estimands from the raw draws.
  const StandardizedData sd = standardize(raw);
  const BinnedCovariates binned = bin_covariates(sd.data, fit.config.domain);
  Eigen::VectorXd y(raw.n_groups());
  for (int i = 0; i < raw.n_groups(); ++i) {
    y[i] = sd.data.groups[static_cast<std::size_t>(i)].y;
  }
  const FrodoModel model(binned, y, std::nullopt, fit.config);
  std::vector<double> sig, alp;
  for (const ChainOutput& ch : fit.chains) {
    for (long s = 0; s < ch.draws.rows(); ++s) {
      const ParameterState st =
          unflatten(ch.draws.row(s).transpose(), model.layout());
      sig.push_back(decode_sigma_y(st) * sd.info.y_sd);
      alp.push_back(sd.info.from_std_y(st.alpha));
    }
  }
  const ScalarSummary sig_sum = summarize_scalar(std::move(sig));
  const ScalarSummary alp_sum = summarize_scalar(std::move(alp));
  CHECK(std::fabs(fit.sigma_y.mean - sig_sum.mean) < 1e-13);
  CHECK(std::fabs(fit.sigma_y.q975 - sig_sum.q975) < 1e-13);
  CHECK(std::fabs(fit.alpha.mean - alp_sum.mean) < 1e-13);

  // The secant slope is the two-endpoint difference quotient of the band.
  const double h = opts.config.domain.h();
  const double expect =
      (fit.beta_band.mean[K - 1] - fit.beta_band.mean[0]) / ((K - 1) * h);
  CHECK(std::fabs(fit.secant_slope - expect) < 1e-12);
}

TEST_CASE("estimands transform exactly under affine changes of the data") {
  const ScenarioSpec spec = small_gauss_spec();
  const GroupedDataset raw = simulate(spec).data;
  FitOptions opts = quick_fit_options(spec, raw);
  opts.density_groups = {1};
  const FitResult base = fit_frodo(raw, opts);

  // Response scale.  Standardized data are bit-identical (scaling by a
  // power of two is lossless), so the chains are too; everything on the
  // original scale picks up the factor two exactly.
  GroupedDataset doubled = raw;
  for (auto& g : doubled.groups) g.y = 2.0 * g.y;
  const FitResult fy = fit_frodo(doubled, opts);
  CHECK((fy.chains[0].draws - base.chains[0].draws).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(fy.sigma_y.mean == 2.0 * base.sigma_y.mean);
  CHECK(fy.sigma_y.q025 == 2.0 * base.sigma_y.q025);
  CHECK(fy.alpha.mean == 2.0 * base.alpha.mean);
  CHECK(fy.secant_slope == 2.0 * base.secant_slope);
  CHECK((fy.beta_band.mean - 2.0 * base.beta_band.mean)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((fy.density_bands[0].mean - base.density_bands[0].mean)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // Covariate scale.  The coefficient function values are invariant; slopes
  // and densities pick up 1/4 (exact again: powers of two).
  GroupedDataset scaled = raw;
  for (auto& g : scaled.groups) {
    for (double& v : g.x) v *= 4.0;
  }
  FitOptions opts4 = opts;
  opts4.config.domain.a *= 4.0;
  opts4.config.domain.b *= 4.0;
  const FitResult fx = fit_frodo(scaled, opts4);
  CHECK((fx.beta_band.mean - base.beta_band.mean).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(fx.secant_slope == base.secant_slope / 4.0);
  CHECK(fx.sigma_y.mean == base.sigma_y.mean);
  CHECK((fx.density_bands[0].mean - base.density_bands[0].mean / 4.0)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(fx.beta_midpoints[0] == 4.0 * base.beta_midpoints[0]);
}

TEST_CASE("shifting the responses moves the intercept and nothing else") {
  // Eight groups with responses on a dyadic grid: adding 3 is then exact in
  // floating point, the standardized data stay bit-identical, and the noise
  // scale, slope, and coefficient band must not move at all.
  GroupedDataset raw;
  Rng rng(23, 0);
  const double ys[] = {0.25, -0.5, 1.0, 0.75, -0.25, 1.5, 0.0, 2.25};
  for (double yv : ys) {
    GroupRecord g;
    g.y = yv;
    for (int j = 0; j < 6; ++j) g.x.push_back(rng.uniform(0.02, 0.98));
    raw.groups.push_back(g);
  }
  FitOptions opts;
  opts.config.r = 1;
  opts.config.domain = DomainSpec{0.0, 1.0, 5};
  opts.config.delta = {0.5};
  opts.config.sampler.chains = 1;
  opts.config.sampler.warmup = 150;
  opts.config.sampler.sampling = 120;
  opts.config.sampler.target_accept = 0.8;
  opts.config.sampler.seed = 17;

  const FitResult base = fit_frodo(raw, opts);
  GroupedDataset shifted = raw;
  for (auto& g : shifted.groups) g.y += 3.0;
  const FitResult fit = fit_frodo(shifted, opts);

  CHECK((fit.chains[0].draws - base.chains[0].draws).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(fit.sigma_y.mean == base.sigma_y.mean);
  CHECK(fit.sigma_y.q975 == base.sigma_y.q975);
  CHECK(fit.secant_slope == base.secant_slope);
  CHECK((fit.beta_band.mean - base.beta_band.mean).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(std::fabs(fit.alpha.mean - (base.alpha.mean + 3.0)) < 1e-12);
}

TEST_CASE("fit artifacts are complete and reload consistently") {
  const ScenarioSpec spec = small_gauss_spec();
  const GroupedDataset raw = simulate(spec).data;
  FitOptions opts = quick_fit_options(spec, raw);
  opts.density_groups = {3};
  const FitResult fit = fit_frodo(raw, opts);

  const fs::path dir = fresh_dir("artifacts");
  write_fit_artifacts(dir, fit, "gauss_linear");
  for (const char* name :
       {"draws.bin", "summary.tsv", "estimands.tsv", "beta_band.tsv",
        "density_band_3.tsv", "manifest.json"}) {
    CHECK(fs::exists(dir / name));
  }

  const std::vector<Eigen::MatrixXd> draws = read_draws(dir / "draws.bin");
  REQUIRE(draws.size() == fit.chains.size());
  for (std::size_t c = 0; c < draws.size(); ++c) {
    CHECK((draws[c] - fit.chains[c].draws).cwiseAbs().maxCoeff() == 0.0);
  }

  nlohmann::json j;
  std::ifstream mf(dir / "manifest.json");
  mf >> j;
  CHECK(j["model"] == "frodo");
  CHECK(j["scenario"] == "gauss_linear");
  CHECK(j["sampler"]["chains"] == 2);
  CHECK(j["gates"]["divergences"].get<long>() == fit.gates.divergences);
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                       : v.get<double>();
  };
  if (std::isnan(fit.gates.max_rhat)) {
    CHECK(std::isnan(num(j["gates"]["max_rhat"])));
  } else {
    CHECK(num(j["gates"]["max_rhat"]) == fit.gates.max_rhat);
    CHECK(num(j["gates"]["min_ess"]) == fit.gates.min_ess);
  }
  CHECK(j["gates"]["pass"].get<bool>() == fit.gates.pass);
  CHECK(num(j["standardization"]["y_sd"]) == fit.info.y_sd);
  CHECK(j["chains"].size() == fit.chains.size());

  // The estimand table reproduces the in-memory values exactly.
  std::ifstream es(dir / "estimands.tsv");
  std::string line;
  bool saw_sigma = false, saw_slope = false;
  while (std::getline(es, line)) {
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    if (name == "sigma_y") {
      double mean, sdv, lo, hi;
      ls >> mean >> sdv >> lo >> hi;
      CHECK(mean == fit.sigma_y.mean);
      CHECK(hi == fit.sigma_y.q975);
      saw_sigma = true;
    } else if (name == "secant_slope") {
      double mean;
      ls >> mean;
      CHECK(mean == fit.secant_slope);
      saw_slope = true;
    }
  }
  CHECK(saw_sigma);
  CHECK(saw_slope);

  // summary.tsv has one row per parameter plus the two header lines.
  std::istringstream sum(slurp(dir / "summary.tsv"));
  std::size_t lines = 0;
  while (std::getline(sum, line)) ++lines;
  CHECK(lines == fit.names.size() + 2);
}

TEST_CASE("a scalar-covariate fit reports the extra coefficient") {
  ScenarioSpec spec = ScenarioSpec::defaults_for(Scenario::croon);
  spec.n_groups = 12;
  spec.seed = 9;
  const SimulationResult sim = simulate(spec);
  FitOptions opts;
  opts.config = default_fit_config(spec, sim.data);
  opts.config.sampler.chains = 1;
  opts.config.sampler.warmup = 200;
  opts.config.sampler.sampling = 150;
  opts.config.sampler.target_accept = 0.9;
  opts.config.sampler.seed = 2;
  const FitResult fit = fit_frodo(sim.data, opts);
  CHECK(std::isfinite(fit.beta_z.mean));
  CHECK(std::isfinite(fit.beta_z.q025));

  const fs::path dir = fresh_dir("croonfit");
  write_fit_artifacts(dir, fit, "croon");
  CHECK(slurp(dir / "estimands.tsv").find("beta_z") != std::string::npos);
}

TEST_CASE("command line: simulate is deterministic per seed") {
  const fs::path dir = fresh_dir("cli_sim");
  const std::string common =
      "simulate --scenario exp_linear --groups 7 --group-size 5";
  REQUIRE(run_cli(common + " --seed 3 --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli(common + " --seed 3 --out " + (dir / "b").string()) == 0);
  REQUIRE(run_cli(common + " --seed 4 --out " + (dir / "c").string()) == 0);
  for (const char* f : {"dataset.tsv", "truth.tsv", "config.txt"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(slurp(dir / "a" / "dataset.tsv") != slurp(dir / "c" / "dataset.tsv"));

  const DatasetFile ds = read_dataset(dir / "a" / "dataset.tsv");
  CHECK(ds.scenario == "exp_linear");
  CHECK(ds.data.n_groups() == 7);
  const GroundTruth t = read_truth(dir / "a" / "truth.tsv");
  CHECK(t.id == Scenario::exp_linear);
  CHECK(t.lambda.size() == 7);
}

TEST_CASE("command line: fit, baseline, and report work together") {
  const fs::path dir = fresh_dir("cli_flow");
  const ScenarioSpec spec = small_gauss_spec();
  REQUIRE(run_cli("simulate --scenario gauss_linear --seed 5 --groups 10 "
                  "--group-size 8 --out " +
                  (dir / "sim").string()) == 0);

  // Shrink the emitted default configuration for a quick run.
  FitConfig cfg = read_fit_config(dir / "sim" / "config.txt");
  cfg.sampler.chains = 2;
  cfg.sampler.warmup = 250;
  cfg.sampler.sampling = 200;
  cfg.sampler.target_accept = 0.9;
  cfg.sampler.seed = 12;
  write_fit_config(dir / "quick.txt", cfg);

  const int fit_rc = run_cli("fit --data " + (dir / "sim").string() +
                             " --config " + (dir / "quick.txt").string() +
                             " --out " + (dir / "fit").string() +
                             " --density-groups 1,2 --no-gate");
  REQUIRE(fit_rc == 0);
  CHECK(fs::exists(dir / "fit" / "beta_band.tsv"));
  CHECK(fs::exists(dir / "fit" / "density_band_2.tsv"));

  // The CLI run equals the in-process run with the same configuration.
  const GroupedDataset raw = simulate(spec).data;
  FitOptions opts;
  opts.config = cfg;
  opts.density_groups = {1, 2};
  const FitResult fit = fit_frodo(raw, opts);
  const std::vector<Eigen::MatrixXd> cli_draws =
      read_draws(dir / "fit" / "draws.bin");
  REQUIRE(cli_draws.size() == fit.chains.size());
  CHECK((cli_draws[0] - fit.chains[0].draws).cwiseAbs().maxCoeff() == 0.0);

  REQUIRE(run_cli("baseline --data " + (dir / "sim").string() +
                  " --kind naive_linear --warmup 250 --sampling 300 "
                  "--seed 6 --out " +
                  (dir / "naive").string() + " --no-gate") == 0);
  REQUIRE(run_cli("baseline --data " + (dir / "sim").string() +
                  " --kind hierarchical --warmup 250 --sampling 300 "
                  "--seed 6 --out " +
                  (dir / "hier").string() + " --no-gate") == 0);

  REQUIRE(run_cli("report --runs " + (dir / "fit").string() + " " +
                  (dir / "naive").string() + " " + (dir / "hier").string() +
                  " --out " + (dir / "rep").string()) == 0);
  const std::string tsv = slurp(dir / "rep" / "report.tsv");
  const std::size_t p_frodo = tsv.find("frodo\t");
  const std::size_t p_hier = tsv.find("hierarchical\t");
  const std::size_t p_naive = tsv.find("naive_linear\t");
  REQUIRE(p_frodo != std::string::npos);
  REQUIRE(p_hier != std::string::npos);
  REQUIRE(p_naive != std::string::npos);
  CHECK(p_frodo < p_hier);
  CHECK(p_hier < p_naive);
  CHECK(slurp(dir / "rep" / "report.txt").find("sigma_Y") !=
        std::string::npos);
  CHECK(fs::exists(dir / "rep" / "frodo_beta_band.tsv"));
  CHECK(fs::exists(dir / "rep" / "frodo_density_band_1.tsv"));
}

TEST_CASE("command line: exit codes distinguish failure classes") {
  const fs::path dir = fresh_dir("cli_codes");
  REQUIRE(run_cli("simulate --scenario gauss_linear --seed 5 --groups 10 "
                  "--group-size 8 --out " +
                  (dir / "sim").string()) == 0);

  // Unmet diagnostic gates: one short chain cannot reach the required
  // effective sample size, so the fit exits with the gate code.
  FitConfig cfg = read_fit_config(dir / "sim" / "config.txt");
  cfg.sampler.chains = 1;
  cfg.sampler.warmup = 150;
  cfg.sampler.sampling = 120;
  cfg.sampler.target_accept = 0.8;
  write_fit_config(dir / "tiny.txt", cfg);
  CHECK(run_cli("fit --data " + (dir / "sim").string() + " --config " +
                (dir / "tiny.txt").string() + " --out " +
                (dir / "gate").string()) == 2);

  // Configuration problems exit 3.
  CHECK(run_cli("simulate --scenario no_such_scenario --out " +
                dir.string()) == 3);
  CHECK(run_cli("fit --out " + dir.string()) == 3);  // missing --data
  {
    std::ofstream os(dir / "bad.txt");
    os << slurp(dir / "tiny.txt") << "bogus_key 1\n";
  }
  CHECK(run_cli("fit --data " + (dir / "sim").string() + " --config " +
                (dir / "bad.txt").string() + " --out " +
                (dir / "x").string()) == 3);
  CHECK(run_cli("baseline --data " + (dir / "sim").string() +
                " --kind naive_gam --out " + (dir / "x").string()) == 3);

  // Data problems exit 4.
  CHECK(run_cli("fit --data " + (dir / "nope.tsv").string() + " --config " +
                (dir / "tiny.txt").string() + " --out " +
                (dir / "x").string()) == 4);
  {
    std::ofstream os(dir / "mangled.tsv");
    os << "# frodo dataset 1\ny\tone\t0.5\n";
  }
  CHECK(run_cli("baseline --data " + (dir / "mangled.tsv").string() +
                " --kind naive_linear --out " + (dir / "x").string()) == 4);

  // A dataset without a scenario header needs an explicit configuration.
  write_dataset(dir / "anon.tsv", toy_dataset());
  CHECK(run_cli("fit --data " + (dir / "anon.tsv").string() + " --out " +
                (dir / "x").string()) == 3);
}

TEST_CASE("command line: the default output directory comes from the "
          "environment") {
  const fs::path dir = fresh_dir("cli_env");
  const std::string cmd =
      "FRODO_OUT_DIR=" + (dir / "envout").string() + " " +
      std::string(FRODO_CLI_PATH) +
      " simulate --scenario beta_linear --seed 2 --groups 5 --group-size 4 "
      ">/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CHECK(WIFEXITED(rc));
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists(dir / "envout" / "dataset.tsv"));
}
