#pragma once

// Unconstrained parameter vector layout.
//
// Per group i (K entries each):   [eta_free (r-1), eta_rw (K-r), log_tau]
// Latent location block:          r=3: xi[N], mu_xi, log_sigma_xi, log_sigma_X
//                                 r=2: log_lambda[N], log_mu_lambda,
//                                      log_alpha_lambda
//                                 r=1: (empty)
// Regression block:               alpha, beta0_free, beta0_rw (K-2),
//                                 log_tau_beta, sigma_y_z, log_sigma_y_g,
//                                 [beta_z]
//
// All positive quantities are represented by their logarithms; sigma_y_z is
// the signed Gaussian component of the half-t noise scale.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "frodo/types.hpp"

namespace frodo {

struct ParamLayout {
  int n_groups = 0;
  int K = 0;
  int r = 3;
  bool has_z = false;

  ParamLayout() = default;
  ParamLayout(int n_groups_, int K_, int r_, bool has_z_)
      : n_groups(n_groups_), K(K_), r(r_), has_z(has_z_) {}

  int group_block() const { return K; }
  int latent_size() const {
    if (r == 3) return n_groups + 3;
    if (r == 2) return n_groups + 2;
    return 0;
  }
  int regression_size() const { return K + 3 + (has_z ? 1 : 0); }
  int dim() const {
    return n_groups * group_block() + latent_size() + regression_size();
  }

  // -- offsets into the flat vector -----------------------------------
  int group_off(int i) const { return i * K; }
  int eta_free_off(int i) const { return group_off(i); }      // r-1 entries
  int eta_rw_off(int i) const { return group_off(i) + r - 1; }  // K-r entries
  int log_tau_off(int i) const { return group_off(i) + K - 1; }

  int latent_off() const { return n_groups * K; }
  int xi_off() const { return latent_off(); }          // r = 3
  int mu_xi_off() const { return latent_off() + n_groups; }
  int log_sigma_xi_off() const { return latent_off() + n_groups + 1; }
  int log_sigma_x_off() const { return latent_off() + n_groups + 2; }
  int log_lambda_off() const { return latent_off(); }  // r = 2
  int log_mu_lambda_off() const { return latent_off() + n_groups; }
  int log_alpha_lambda_off() const { return latent_off() + n_groups + 1; }

  int regression_off() const { return latent_off() + latent_size(); }
  int alpha_off() const { return regression_off(); }
  int beta0_free_off() const { return regression_off() + 1; }
  int beta0_rw_off() const { return regression_off() + 2; }  // K-2 entries
  int log_tau_beta_off() const { return regression_off() + K; }
  int sigma_y_z_off() const { return regression_off() + K + 1; }
  int log_sigma_y_g_off() const { return regression_off() + K + 2; }
  int beta_z_off() const { return regression_off() + K + 3; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(dim()));
    for (int i = 0; i < n_groups; ++i) {
      const std::string g = std::to_string(i + 1);
      for (int k = 0; k < r - 1; ++k) {
        out.push_back("eta_free[" + g + "][" + std::to_string(k + 1) + "]");
      }
      for (int k = 0; k < K - r; ++k) {
        out.push_back("eta_rw[" + g + "][" + std::to_string(k + 1) + "]");
      }
      out.push_back("log_tau[" + g + "]");
    }
    if (r == 3) {
      for (int i = 0; i < n_groups; ++i) {
        out.push_back("xi[" + std::to_string(i + 1) + "]");
      }
      out.push_back("mu_xi");
      out.push_back("log_sigma_xi");
      out.push_back("log_sigma_x");
    } else if (r == 2) {
      for (int i = 0; i < n_groups; ++i) {
        out.push_back("log_lambda[" + std::to_string(i + 1) + "]");
      }
      out.push_back("log_mu_lambda");
      out.push_back("log_alpha_lambda");
    }
    out.push_back("alpha");
    out.push_back("beta0_free");
    for (int k = 0; k < K - 2; ++k) {
      out.push_back("beta0_rw[" + std::to_string(k + 1) + "]");
    }
    out.push_back("log_tau_beta");
    out.push_back("sigma_y_z");
    out.push_back("log_sigma_y_g");
    if (has_z) out.push_back("beta_z");
    return out;
  }
};

// Structured view of the same parameters, convenient for construction and
// inspection in tests and initialization code.
struct ParameterState {
  Eigen::MatrixXd eta_free;  // n_groups x (r-1)
  Eigen::MatrixXd eta_rw;    // n_groups x (K-r)
  Eigen::VectorXd log_tau;   // n_groups

  Eigen::VectorXd xi;  // r = 3 (empty otherwise)
  double mu_xi = 0.0;
  double log_sigma_xi = 0.0;
  double log_sigma_x = 0.0;

  Eigen::VectorXd log_lambda;  // r = 2 (empty otherwise)
  double log_mu_lambda = 0.0;
  double log_alpha_lambda = 0.0;

  double alpha = 0.0;
  double beta0_free = 0.0;
  Eigen::VectorXd beta0_rw;  // K-2
  double log_tau_beta = 0.0;
  double sigma_y_z = 0.0;
  double log_sigma_y_g = 0.0;
  double beta_z = 0.0;

  static ParameterState zeros(const ParamLayout& lay) {
    ParameterState s;
    s.eta_free = Eigen::MatrixXd::Zero(lay.n_groups, lay.r - 1);
    s.eta_rw = Eigen::MatrixXd::Zero(lay.n_groups, lay.K - lay.r);
    s.log_tau = Eigen::VectorXd::Zero(lay.n_groups);
    if (lay.r == 3) s.xi = Eigen::VectorXd::Zero(lay.n_groups);
    if (lay.r == 2) s.log_lambda = Eigen::VectorXd::Zero(lay.n_groups);
    s.beta0_rw = Eigen::VectorXd::Zero(lay.K - 2);
    return s;
  }
};

Eigen::VectorXd flatten(const ParameterState& s, const ParamLayout& lay);
ParameterState unflatten(const Eigen::VectorXd& q, const ParamLayout& lay);

}  // namespace frodo
