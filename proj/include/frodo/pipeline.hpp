#pragma once

// Orchestration: standardization, binning, file formats, the end-to-end fit,
// and the report generator that the command line tool wraps.

#include <Eigen/Dense>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "frodo/baselines.hpp"
#include "frodo/diagnostics.hpp"
#include "frodo/sampler.hpp"
#include "frodo/simulate.hpp"
#include "frodo/types.hpp"

namespace frodo {

struct StandardizedData {
  GroupedDataset data;
  StandardizationInfo info;
};

// Shifts and scales the responses (per group) and the covariates (marginally
// over all individuals) to mean zero and unit sample variance.  Scalar
// group-level covariates are left untouched.
StandardizedData standardize(const GroupedDataset& raw);

// Maps a domain given on the raw covariate scale onto the standardized one.
DomainSpec standardize_domain(const DomainSpec& raw,
                              const StandardizationInfo& info);

// Counts covariate values per equal-width bin; bins are half-open except the
// last, which also includes the right endpoint.
BinnedCovariates bin_covariates(const GroupedDataset& data,
                                const DomainSpec& domain);

// --- diagnostic gates ------------------------------------------------------

inline constexpr double kGateMaxRhat = 1.01;
inline constexpr double kGateMinEss = 400.0;

struct GateReport {
  double max_rhat = std::numeric_limits<double>::quiet_NaN();
  double min_ess = std::numeric_limits<double>::quiet_NaN();
  long divergences = 0;
  bool pass = false;
};

// Worst-case convergence statistics over all parameters, taken verbatim from
// the per-parameter summaries; NaN diagnostics fail the gate.
GateReport evaluate_gates(const std::vector<ParameterSummary>& summaries,
                          const std::vector<ChainOutput>& chains);

// --- file formats ----------------------------------------------------------

// Dataset: versioned columnar text with one response row per group and one
// covariate row per (group, individual).  Doubles are printed with full
// round-trip precision, so write-then-read is value-identical.
void write_dataset(const std::filesystem::path& file,
                   const GroupedDataset& data,
                   const std::string& scenario = "");

struct DatasetFile {
  GroupedDataset data;
  std::string scenario;  // empty when the file does not carry one
};
DatasetFile read_dataset(const std::filesystem::path& file);

void write_truth(const std::filesystem::path& file, const GroundTruth& truth);
GroundTruth read_truth(const std::filesystem::path& file);

// Fit configuration as stored on disk: the model block on the raw covariate
// scale plus the sampler block, as flat key-value lines named after the
// corresponding struct fields.
struct FitConfig {
  int r = 3;
  DomainSpec domain;  // raw covariate scale
  std::vector<double> delta;
  bool has_scalar_covariate = false;
  // Optional override for the latent-mean hyperprior center (standardized
  // scale); when absent it is derived from the standardization.
  std::optional<double> mu_xi_prior_mean;
  SamplerSettings sampler;

  ModelConfig to_model_config(const StandardizationInfo& info) const;
};

FitConfig default_fit_config(const ScenarioSpec& spec,
                             const GroupedDataset& data);
void write_fit_config(const std::filesystem::path& file, const FitConfig& cfg);
FitConfig read_fit_config(const std::filesystem::path& file);

// Posterior draws: small binary header (magic, chain count, draws per chain,
// dimension) followed by each chain's draw matrix in row-major order.
void write_draws(const std::filesystem::path& file,
                 const std::vector<ChainOutput>& chains);
std::vector<Eigen::MatrixXd> read_draws(const std::filesystem::path& file);

// --- the end-to-end fit ----------------------------------------------------

struct FitOptions {
  FitConfig config;
  std::vector<int> density_groups;  // 1-based groups to emit density bands for
};

struct FitResult {
  ModelConfig config;  // standardized scale, as sampled
  DomainSpec raw_domain;
  StandardizationInfo info;
  SamplerSettings settings;

  std::vector<std::string> names;
  std::vector<ChainOutput> chains;
  std::vector<ParameterSummary> summaries;
  GateReport gates;

  // Reported estimands, all back-transformed to the original data scale.
  ScalarSummary sigma_y;
  ScalarSummary alpha;
  ScalarSummary beta_z;  // NaN unless the model has the scalar covariate
  Eigen::VectorXd beta_midpoints;  // raw covariate scale, size K
  FunctionalBand beta_band;        // coefficient function, raw scale
  double secant_slope = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> density_groups;
  std::vector<FunctionalBand> density_bands;  // raw scale, at beta_midpoints

  int pspline_fallbacks = 0;
  std::vector<std::string> init_warnings;
};

// Standardize, bin, initialize, sample, diagnose, and decode.  Requires
// chains * sampling >= 100 so the posterior bands are meaningful.
FitResult fit_frodo(const GroupedDataset& raw, const FitOptions& opts);

// --- artifact emission -----------------------------------------------------

// Writes draws.bin, summary.tsv, estimands.tsv, beta_band.tsv, per-group
// density_band_<g>.tsv, and manifest.json under dir.
void write_fit_artifacts(const std::filesystem::path& dir,
                         const FitResult& fit,
                         const std::string& scenario = "");

// Same layout for a comparison-model run (no band files).
void write_baseline_artifacts(const std::filesystem::path& dir,
                              const BaselineResult& result,
                              const SamplerSettings& settings);

// Reads the manifests and estimand tables of previously written run
// directories and emits report.tsv, a plain-text digest, and copies of the
// band files.  Runs are ordered main model first, then hierarchical, then
// the naive variants.
void write_report(const std::filesystem::path& out_dir,
                  const std::vector<std::filesystem::path>& run_dirs);

}  // namespace frodo
