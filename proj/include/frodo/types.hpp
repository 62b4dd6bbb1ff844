#pragma once

// Core data structures: grouped observations, bin domains, model
// configuration, binned covariates, and sampler settings.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "frodo/common.hpp"

namespace frodo {

// One group: a scalar response, that group's covariate sample, and an
// optional extra scalar regressor shared across the dataset.
struct GroupRecord {
  double y = 0.0;
  std::vector<double> x;
  std::optional<double> z;
};

struct GroupedDataset {
  std::vector<GroupRecord> groups;

  int n_groups() const { return static_cast<int>(groups.size()); }
  bool has_scalar_covariate() const {
    return !groups.empty() && groups.front().z.has_value();
  }

  // At least two groups, every group non-empty, and the scalar covariate
  // present either everywhere or nowhere.
  void validate() const {
    if (groups.size() < 2) {
      throw data_error("dataset must contain at least two groups");
    }
    const bool has_z = groups.front().z.has_value();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i].x.empty()) {
        throw data_error("group " + std::to_string(i + 1) +
                         " has no covariate observations");
      }
      if (groups[i].z.has_value() != has_z) {
        throw data_error(
            "scalar covariate must be present for all groups or none");
      }
    }
  }
};

// Equal-width bin grid on [a, b] with K bins of width h = (b - a) / K.
struct DomainSpec {
  double a = 0.0;
  double b = 1.0;
  int K = 0;

  double h() const { return (b - a) / static_cast<double>(K); }
  double midpoint(int k) const {  // k is 1-based
    return a + h() * (static_cast<double>(k) - 0.5);
  }

  void validate() const {
    if (!(b > a)) throw config_error("domain requires b > a");
    if (K < 2) throw config_error("domain requires at least two bins");
    if (!(std::isfinite(a) && std::isfinite(b))) {
      throw config_error("domain endpoints must be finite");
    }
  }
};

// Model configuration on the standardized scale.
struct ModelConfig {
  int r = 3;  // random-walk order, in {1, 2, 3}
  DomainSpec domain;
  std::vector<double> delta;  // per-group prior mean of tau_i
  bool has_scalar_covariate = false;
  // Center of the mu_xi hyperprior: the standardized image of the original
  // scale's zero, i.e. -mean(x)/sd(x).  Zero when the data arrive already
  // centered.
  double mu_xi_prior_mean = 0.0;

  int K() const { return domain.K; }

  double delta_for(int i) const {
    return delta.size() == 1 ? delta[0] : delta[static_cast<std::size_t>(i)];
  }

  void validate(int n_groups) const {
    domain.validate();
    if (r < 1 || r > 3) {
      throw config_error("random-walk order r must be 1, 2, or 3");
    }
    if (domain.K <= r) {
      throw config_error("need more bins than the random-walk order");
    }
    if (delta.empty()) throw config_error("delta must be provided");
    if (delta.size() != 1 &&
        delta.size() != static_cast<std::size_t>(n_groups)) {
      throw config_error("delta must be scalar or one value per group");
    }
    for (double d : delta) {
      if (!(d > 0.0)) throw config_error("delta values must be positive");
    }
  }
};

// Covariate samples reduced to per-group bin counts.
struct BinnedCovariates {
  Eigen::MatrixXd counts;  // n_groups x K, entries are whole numbers
  Eigen::VectorXd n;       // row sums

  int n_groups() const { return static_cast<int>(counts.rows()); }
  int K() const { return static_cast<int>(counts.cols()); }
};

// Standardization bookkeeping for mapping results back to the data scale.
struct StandardizationInfo {
  double x_mean = 0.0;
  double x_sd = 1.0;
  double y_mean = 0.0;
  double y_sd = 1.0;

  double to_std_x(double x) const { return (x - x_mean) / x_sd; }
  double to_std_y(double y) const { return (y - y_mean) / y_sd; }
  double from_std_y(double y) const { return y_mean + y_sd * y; }
};

struct SamplerSettings {
  int chains = 4;
  int warmup = 750;
  int sampling = 1250;
  int max_tree_depth = 12;
  double target_accept = 0.99;
  std::uint64_t seed = 1;

  void validate() const {
    if (chains < 1) throw config_error("need at least one chain");
    if (warmup < 150) {
      throw config_error(
          "warmup must be at least 150 iterations for the adaptation windows");
    }
    if (sampling < 1) throw config_error("need at least one sampling draw");
    if (max_tree_depth < 0 || max_tree_depth > 20) {
      throw config_error("max tree depth must lie in [0, 20]");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw config_error("target acceptance must lie in (0, 1)");
    }
  }
};

}  // namespace frodo
