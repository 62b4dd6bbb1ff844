// Command line front end: simulate / fit / baseline / report.
//
// Exit codes: 0 success, 2 diagnostic gate failure, 3 configuration error,
// 4 data error, 1 unexpected failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frodo/common.hpp"
#include "frodo/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

fs::path default_out_dir() {
  const char* env = std::getenv("FRODO_OUT_DIR");
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path(".");
}

fs::path resolve_dataset_path(const fs::path& p) {
  if (fs::is_directory(p)) return p / "dataset.tsv";
  return p;
}

struct SimulateArgs {
  std::string scenario;
  std::uint64_t seed = 1;
  fs::path out = default_out_dir();
  int groups = 0;      // 0 keeps the scenario default
  int group_size = 0;  // 0 keeps the scenario default
  bool noise_free = false;
};

int run_simulate(const SimulateArgs& a) {
  frodo::ScenarioSpec spec =
      frodo::ScenarioSpec::defaults_for(frodo::scenario_from_string(a.scenario));
  spec.seed = a.seed;
  if (a.groups > 0) spec.n_groups = a.groups;
  if (a.group_size > 0) spec.group_size = a.group_size;
  spec.noise_free = a.noise_free;

  const frodo::SimulationResult sim = frodo::simulate(spec);
  fs::create_directories(a.out);
  frodo::write_dataset(a.out / "dataset.tsv", sim.data, a.scenario);
  frodo::write_truth(a.out / "truth.tsv", sim.truth);
  frodo::write_fit_config(a.out / "config.txt",
                          frodo::default_fit_config(spec, sim.data));
  std::cout << "simulated " << a.scenario << " (seed " << a.seed << ", "
            << sim.data.n_groups() << " groups) into " << a.out.string()
            << "\n";
  return 0;
}

struct FitArgs {
  fs::path data;
  fs::path config;  // empty: derive from the dataset's scenario header
  fs::path out = default_out_dir();
  std::vector<int> density_groups;
  bool no_gate = false;
};

void print_gates(const frodo::GateReport& g) {
  std::cout << "gates: max rhat " << g.max_rhat << ", min ess " << g.min_ess
            << ", divergences " << g.divergences << " -> "
            << (g.pass ? "pass" : "FAIL") << "\n";
}

int run_fit(const FitArgs& a) {
  const frodo::DatasetFile ds =
      frodo::read_dataset(resolve_dataset_path(a.data));

  frodo::FitOptions opts;
  if (!a.config.empty()) {
    opts.config = frodo::read_fit_config(a.config);
  } else if (!ds.scenario.empty()) {
    const frodo::ScenarioSpec spec = frodo::ScenarioSpec::defaults_for(
        frodo::scenario_from_string(ds.scenario));
    opts.config = frodo::default_fit_config(spec, ds.data);
  } else {
    throw frodo::config_error(
        "no --config given and the dataset does not name a scenario");
  }
  opts.density_groups = a.density_groups;

  const frodo::FitResult fit = frodo::fit_frodo(ds.data, opts);
  frodo::write_fit_artifacts(a.out, fit, ds.scenario);

  std::cout << "sigma_y " << fit.sigma_y.mean << " (" << fit.sigma_y.q025
            << ", " << fit.sigma_y.q975 << ")\n";
  std::cout << "secant slope " << fit.secant_slope << "\n";
  print_gates(fit.gates);
  std::cout << "artifacts in " << a.out.string() << "\n";
  if (!fit.gates.pass && !a.no_gate) return 2;
  return 0;
}

struct BaselineArgs {
  fs::path data;
  std::string kind;
  std::string scenario;  // empty: use the dataset's scenario header
  fs::path out = default_out_dir();
  frodo::SamplerSettings sampler;
  bool no_gate = false;
};

int run_baseline(const BaselineArgs& a) {
  const frodo::DatasetFile ds =
      frodo::read_dataset(resolve_dataset_path(a.data));
  const std::string scenario_name =
      !a.scenario.empty() ? a.scenario : ds.scenario;
  if (scenario_name.empty()) {
    throw frodo::config_error(
        "no --scenario given and the dataset does not name one");
  }
  const frodo::Scenario sc = frodo::scenario_from_string(scenario_name);
  const frodo::BaselineKind kind = frodo::baseline_from_string(a.kind);

  const frodo::BaselineResult res =
      frodo::fit_baseline(kind, sc, ds.data, a.sampler);
  frodo::write_baseline_artifacts(a.out, res, a.sampler);
  const frodo::GateReport gates =
      frodo::evaluate_gates(res.summaries, res.chains);

  std::cout << "sigma_y " << res.sigma_y.mean << " (" << res.sigma_y.q025
            << ", " << res.sigma_y.q975 << ")\n";
  std::cout << "slope " << res.slope.mean << "\n";
  print_gates(gates);
  std::cout << "artifacts in " << a.out.string() << "\n";
  if (!gates.pass && !a.no_gate) return 2;
  return 0;
}

struct ReportArgs {
  std::vector<fs::path> runs;
  fs::path out = default_out_dir();
};

int run_report(const ReportArgs& a) {
  frodo::write_report(a.out, a.runs);
  std::cout << "report in " << a.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FRODO: functional regression on density covariates"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "Generate a synthetic dataset and its ground truth");
  c_sim->add_option("--scenario", sim.scenario,
                    "Scenario name (gauss_linear, gauss_quadratic, "
                    "exp_linear, beta_linear, beta_quadratic, croon)")
      ->required();
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--out", sim.out, "Output directory");
  c_sim->add_option("--groups", sim.groups, "Override the group count");
  c_sim->add_option("--group-size", sim.group_size,
                    "Override the per-group sample size");
  c_sim->add_flag("--noise-free", sim.noise_free,
                  "Switch off response noise and covariate spread");

  FitArgs fit;
  CLI::App* c_fit =
      app.add_subcommand("fit", "Fit the functional-covariate model");
  c_fit->add_option("--data", fit.data, "Dataset file or directory")
      ->required();
  c_fit->add_option("--config", fit.config,
                    "Configuration file (default: scenario defaults)");
  c_fit->add_option("--out", fit.out, "Output directory");
  c_fit->add_option("--density-groups", fit.density_groups,
                    "Groups whose density bands to emit (1-based)")
      ->delimiter(',');
  c_fit->add_flag("--no-gate", fit.no_gate,
                  "Exit 0 even when the diagnostic gates fail");

  BaselineArgs base;
  CLI::App* c_base =
      app.add_subcommand("baseline", "Fit a scalar comparison model");
  c_base->add_option("--data", base.data, "Dataset file or directory")
      ->required();
  c_base
      ->add_option("--kind", base.kind,
                   "Comparison model (naive_linear, naive_gam, "
                   "naive_transformed, hierarchical)")
      ->required();
  c_base->add_option("--scenario", base.scenario,
                     "Scenario name (default: dataset header)");
  c_base->add_option("--out", base.out, "Output directory");
  base.sampler.target_accept = 0.9;  // scalar posteriors need no more
  c_base->add_option("--chains", base.sampler.chains, "Chain count");
  c_base->add_option("--warmup", base.sampler.warmup, "Warmup iterations");
  c_base->add_option("--sampling", base.sampler.sampling,
                     "Sampling iterations");
  c_base->add_option("--max-tree-depth", base.sampler.max_tree_depth,
                     "Doubling depth limit");
  c_base->add_option("--target-accept", base.sampler.target_accept,
                     "Step size adaptation target");
  c_base->add_option("--seed", base.sampler.seed, "RNG seed");
  c_base->add_flag("--no-gate", base.no_gate,
                   "Exit 0 even when the diagnostic gates fail");

  ReportArgs rep;
  CLI::App* c_rep = app.add_subcommand(
      "report", "Aggregate finished runs into comparison tables");
  c_rep->add_option("--runs", rep.runs, "Run directories to aggregate")
      ->required()
      ->expected(-1);
  c_rep->add_option("--out", rep.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_base->parsed()) return run_baseline(base);
    return run_report(rep);
  } catch (const frodo::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 3;
  } catch (const frodo::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
