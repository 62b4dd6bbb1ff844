#include <frodo/simulate.hpp>

#include <algorithm>
#include <cmath>

#include <frodo/common.hpp>

namespace frodo {

Scenario scenario_from_string(const std::string& name) {
  if (name == "gauss_linear") return Scenario::gauss_linear;
  if (name == "gauss_quadratic") return Scenario::gauss_quadratic;
  if (name == "exp_linear") return Scenario::exp_linear;
  if (name == "beta_linear") return Scenario::beta_linear;
  if (name == "beta_quadratic") return Scenario::beta_quadratic;
  if (name == "croon") return Scenario::croon;
  throw config_error("unknown scenario: " + name);
}

std::string to_string(Scenario id) {
  switch (id) {
    case Scenario::gauss_linear: return "gauss_linear";
    case Scenario::gauss_quadratic: return "gauss_quadratic";
    case Scenario::exp_linear: return "exp_linear";
    case Scenario::beta_linear: return "beta_linear";
    case Scenario::beta_quadratic: return "beta_quadratic";
    case Scenario::croon: return "croon";
  }
  throw config_error("unknown scenario id");
}

ScenarioSpec ScenarioSpec::defaults_for(Scenario id) {
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case Scenario::gauss_linear:
      s.n_groups = 275;
      s.group_size = 20;
      s.alpha = 0.3;
      s.beta_tilde = 0.4;
      s.sigma_y = 0.5;
      s.sigma_xi = 2.0;
      s.sigma_x = 3.0;
      break;
    case Scenario::gauss_quadratic:
      s.n_groups = 275;
      s.group_size = 50;
      s.alpha = 0.3;
      s.beta_tilde = 0.4;
      s.sigma_y = 0.5;
      s.sigma_xi = 2.0;
      s.sigma_x = 3.0;
      break;
    case Scenario::exp_linear:
      s.n_groups = 200;
      s.group_size = 50;
      s.alpha = 0.1;
      s.beta_tilde = -0.9;
      s.sigma_y = 0.1;
      s.lambda_shape = 10.0;
      s.lambda_rate = 10.0;
      break;
    case Scenario::beta_linear:
      s.n_groups = 250;
      s.group_size = 15;
      s.alpha = 0.2;
      s.beta_tilde = 1.0;
      s.sigma_y = 0.05;
      break;
    case Scenario::beta_quadratic:
      s.n_groups = 250;
      s.group_size = 60;
      s.alpha = 0.7;
      s.beta_tilde = 1.0;
      s.sigma_y = 0.1;
      break;
    case Scenario::croon:
      s.n_groups = 100;
      s.group_size = 0;  // sizes drawn per group
      s.alpha = 0.3;
      s.beta_tilde = 0.3;
      s.sigma_y = std::sqrt(0.35);
      s.sigma_xi = 1.0;
      s.sigma_x = 3.0;
      s.beta_z = 0.3;
      break;
  }
  return s;
}

namespace {

void check_spec(const ScenarioSpec& spec) {
  if (spec.n_groups < 2) {
    throw config_error("scenario needs at least two groups");
  }
  if (spec.id != Scenario::croon && spec.group_size < 1) {
    throw config_error("scenario needs a positive group size");
  }
  if (!(spec.sigma_y >= 0.0)) {
    throw config_error("sigma_y must be non-negative");
  }
  switch (spec.id) {
    case Scenario::gauss_linear:
    case Scenario::gauss_quadratic:
    case Scenario::croon:
      if (!(spec.sigma_xi > 0.0) || !(spec.sigma_x > 0.0)) {
        throw config_error("Gaussian scenarios need positive sigma_xi, sigma_x");
      }
      break;
    case Scenario::exp_linear:
      if (!(spec.lambda_shape > 0.0) || !(spec.lambda_rate > 0.0)) {
        throw config_error("exp_linear needs positive Gamma hyperparameters");
      }
      break;
    case Scenario::beta_linear:
    case Scenario::beta_quadratic:
      break;
  }
}

// Equally spaced latent mesh including both endpoints.
std::vector<double> latent_mesh(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace

SimulationResult simulate(const ScenarioSpec& spec, Rng& rng) {
  check_spec(spec);
  const int n = spec.n_groups;

  SimulationResult out;
  out.truth.id = spec.id;
  out.truth.alpha = spec.alpha;
  out.truth.beta_tilde = spec.beta_tilde;
  out.truth.sigma_y = spec.sigma_y;
  out.data.groups.resize(static_cast<std::size_t>(n));
  out.truth.mean_y.resize(static_cast<std::size_t>(n));

  const bool gaussian_family = spec.id == Scenario::gauss_linear ||
                               spec.id == Scenario::gauss_quadratic ||
                               spec.id == Scenario::croon;

  std::vector<double> latents;
  if (gaussian_family) {
    latents.resize(static_cast<std::size_t>(n));
    for (auto& v : latents) v = spec.sigma_xi * rng.normal();
  } else if (spec.id == Scenario::beta_linear) {
    latents = latent_mesh(0.1, 0.9, n);
  } else if (spec.id == Scenario::beta_quadratic) {
    latents = latent_mesh(0.1, 2.0, n);
  }

  if (spec.id == Scenario::croon) {
    out.truth.beta_z = spec.beta_z;
    out.truth.beta_z_is_reference = false;
    out.truth.z.resize(static_cast<std::size_t>(n));
  }

  for (int i = 0; i < n; ++i) {
    GroupRecord& g = out.data.groups[static_cast<std::size_t>(i)];
    int size = spec.group_size;
    if (spec.id == Scenario::croon) {
      size = rng.uniform() < 0.5 ? 10 : 40;
    }
    g.x.resize(static_cast<std::size_t>(size));

    double mean = 0.0;
    switch (spec.id) {
      case Scenario::gauss_linear:
      case Scenario::gauss_quadratic:
      case Scenario::croon: {
        const double xi = latents[static_cast<std::size_t>(i)];
        for (auto& v : g.x) {
          v = spec.noise_free ? xi : xi + spec.sigma_x * rng.normal();
        }
        if (spec.id == Scenario::gauss_quadratic) {
          mean = spec.alpha +
                 spec.beta_tilde * (xi * xi + spec.sigma_x * spec.sigma_x);
        } else {
          mean = spec.alpha + spec.beta_tilde * xi;
        }
        if (spec.id == Scenario::croon) {
          const double z = rng.normal();
          g.z = z;
          out.truth.z[static_cast<std::size_t>(i)] = z;
          mean += spec.beta_z * z;
        }
        break;
      }
      case Scenario::exp_linear: {
        const double lambda = rng.gamma(spec.lambda_shape, spec.lambda_rate);
        out.truth.lambda.push_back(lambda);
        for (auto& v : g.x) {
          v = spec.noise_free ? 1.0 / lambda : rng.exponential(lambda);
        }
        mean = spec.alpha + spec.beta_tilde / lambda;
        break;
      }
      case Scenario::beta_linear: {
        const double xi = latents[static_cast<std::size_t>(i)];
        for (auto& v : g.x) {
          v = spec.noise_free ? xi : rng.beta(xi, 1.0 - xi);
        }
        mean = spec.alpha + spec.beta_tilde * xi;
        break;
      }
      case Scenario::beta_quadratic: {
        const double xi = latents[static_cast<std::size_t>(i)];
        for (auto& v : g.x) {
          v = spec.noise_free ? 0.5 : rng.beta(xi, xi);
        }
        mean = spec.alpha + spec.beta_tilde * (1.0 + 1.0 / (2.0 * xi + 1.0));
        break;
      }
    }

    out.truth.mean_y[static_cast<std::size_t>(i)] = mean;
    g.y = spec.noise_free ? mean : mean + spec.sigma_y * rng.normal();
  }

  if (gaussian_family || spec.id == Scenario::beta_linear ||
      spec.id == Scenario::beta_quadratic) {
    out.truth.xi = std::move(latents);
  }
  out.data.validate();
  return out;
}

SimulationResult simulate(const ScenarioSpec& spec) {
  Rng rng(spec.seed);
  return simulate(spec, rng);
}

ModelConfig default_config_for(const ScenarioSpec& spec,
                               const GroupedDataset& data) {
  data.validate();
  double lo = data.groups.front().x.front();
  double hi = lo;
  for (const auto& g : data.groups) {
    for (double v : g.x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }

  ModelConfig cfg;
  switch (spec.id) {
    case Scenario::gauss_linear:
    case Scenario::gauss_quadratic: {
      cfg.r = 3;
      cfg.domain.K = 10;
      cfg.delta = {0.1};
      // Round the upper end up to the next tenth and pad the lower end by
      // the same amount, so the grid extends slightly beyond the sample.
      const double b = std::ceil(10.0 * hi) / 10.0;
      cfg.domain.b = b;
      cfg.domain.a = lo - (b - hi);
      break;
    }
    case Scenario::exp_linear:
      cfg.r = 2;
      cfg.domain.K = 20;
      cfg.delta = {0.1};
      cfg.domain.a = 0.0;
      cfg.domain.b = hi;
      break;
    case Scenario::beta_linear:
      cfg.r = 1;
      cfg.domain.K = 12;
      cfg.delta = {1.0};
      cfg.domain.a = 0.0;
      cfg.domain.b = 1.0;
      break;
    case Scenario::beta_quadratic:
      cfg.r = 1;
      cfg.domain.K = 15;
      cfg.delta = {1.0};
      cfg.domain.a = 0.0;
      cfg.domain.b = 1.0;
      break;
    case Scenario::croon: {
      cfg.r = 3;
      cfg.domain.K = 10;
      cfg.domain.a = lo;
      cfg.domain.b = hi;
      cfg.has_scalar_covariate = true;
      cfg.delta.reserve(data.groups.size());
      for (const auto& g : data.groups) {
        cfg.delta.push_back(g.x.size() <= 10 ? 0.05 : 0.1);
      }
      break;
    }
  }
  cfg.validate(data.n_groups());
  return cfg;
}

SamplerSettings default_sampler_for(Scenario id) {
  SamplerSettings s;
  switch (id) {
    case Scenario::gauss_linear:
    case Scenario::gauss_quadratic:
    case Scenario::croon:
      s.target_accept = 0.985;
      break;
    default:
      s.target_accept = 0.99;
      break;
  }
  return s;
}

}  // namespace frodo
