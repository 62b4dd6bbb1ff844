#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <frodo/rng.hpp>
#include <frodo/types.hpp>

namespace frodo {

// The six built-in synthetic studies.
enum class Scenario {
  gauss_linear,
  gauss_quadratic,
  exp_linear,
  beta_linear,
  beta_quadratic,
  croon,
};

Scenario scenario_from_string(const std::string& name);
std::string to_string(Scenario id);

// Generator parameters for one scenario.  defaults_for() returns the
// canonical parameter set of each study; individual fields (sizes, seed)
// may be overridden before calling simulate().
struct ScenarioSpec {
  Scenario id = Scenario::gauss_linear;
  int n_groups = 0;
  int group_size = 0;  // ignored by croon, whose sizes are coin-flipped 10/40
  double alpha = 0.0;
  double beta_tilde = 0.0;
  double sigma_y = 0.0;
  double sigma_xi = 0.0;      // Gaussian-covariate scenarios
  double sigma_x = 0.0;       // Gaussian-covariate scenarios
  double lambda_shape = 0.0;  // exp_linear rate hyperprior
  double lambda_rate = 0.0;
  double beta_z = 0.0;  // croon scalar-covariate coefficient
  std::uint64_t seed = 1;
  // Test mode: response noise and covariate spread are both switched off, so
  // each group's covariates collapse to their mean and y_i equals the
  // scenario's regression equation evaluated at the latent exactly.
  bool noise_free = false;

  static ScenarioSpec defaults_for(Scenario id);
};

// Everything needed to score a fit against the generator.
struct GroundTruth {
  Scenario id = Scenario::gauss_linear;
  double alpha = 0.0;
  double beta_tilde = 0.0;
  double sigma_y = 0.0;
  double beta_z = 0.0;
  // The croon scalar-covariate coefficient is a chosen value, not a quoted
  // one; downstream reports must not present it as reference output.
  bool beta_z_is_reference = false;
  std::vector<double> xi;      // latent location per group (when applicable)
  std::vector<double> lambda;  // exp_linear rate per group
  std::vector<double> z;       // croon scalar covariate per group
  std::vector<double> mean_y;  // regression equation at the group's latents
};

struct SimulationResult {
  GroupedDataset data;
  GroundTruth truth;
};

// Draws one dataset.  The caller owns the RNG; simulate(spec) seeds one from
// spec.seed.  Identical spec and RNG state give bit-identical output.
SimulationResult simulate(const ScenarioSpec& spec, Rng& rng);
SimulationResult simulate(const ScenarioSpec& spec);

// Scenario-specific model configuration: random-walk order, bin count, the
// domain rule applied to the simulated covariates, and the per-group prior
// rate delta.  Returned on the data scale; standardization happens later.
ModelConfig default_config_for(const ScenarioSpec& spec,
                               const GroupedDataset& data);

// Scenario-specific sampler settings (acceptance target differs between the
// Gaussian-covariate studies and the rest).
SamplerSettings default_sampler_for(Scenario id);

}  // namespace frodo
