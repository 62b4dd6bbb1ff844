#include "frodo/layout.hpp"

namespace frodo {

Eigen::VectorXd flatten(const ParameterState& s, const ParamLayout& lay) {
  Eigen::VectorXd q(lay.dim());
  for (int i = 0; i < lay.n_groups; ++i) {
    for (int k = 0; k < lay.r - 1; ++k) {
      q[lay.eta_free_off(i) + k] = s.eta_free(i, k);
    }
    for (int k = 0; k < lay.K - lay.r; ++k) {
      q[lay.eta_rw_off(i) + k] = s.eta_rw(i, k);
    }
    q[lay.log_tau_off(i)] = s.log_tau[i];
  }
  if (lay.r == 3) {
    for (int i = 0; i < lay.n_groups; ++i) q[lay.xi_off() + i] = s.xi[i];
    q[lay.mu_xi_off()] = s.mu_xi;
    q[lay.log_sigma_xi_off()] = s.log_sigma_xi;
    q[lay.log_sigma_x_off()] = s.log_sigma_x;
  } else if (lay.r == 2) {
    for (int i = 0; i < lay.n_groups; ++i) {
      q[lay.log_lambda_off() + i] = s.log_lambda[i];
    }
    q[lay.log_mu_lambda_off()] = s.log_mu_lambda;
    q[lay.log_alpha_lambda_off()] = s.log_alpha_lambda;
  }
  q[lay.alpha_off()] = s.alpha;
  q[lay.beta0_free_off()] = s.beta0_free;
  for (int k = 0; k < lay.K - 2; ++k) {
    q[lay.beta0_rw_off() + k] = s.beta0_rw[k];
  }
  q[lay.log_tau_beta_off()] = s.log_tau_beta;
  q[lay.sigma_y_z_off()] = s.sigma_y_z;
  q[lay.log_sigma_y_g_off()] = s.log_sigma_y_g;
  if (lay.has_z) q[lay.beta_z_off()] = s.beta_z;
  return q;
}

ParameterState unflatten(const Eigen::VectorXd& q, const ParamLayout& lay) {
  ParameterState s = ParameterState::zeros(lay);
  for (int i = 0; i < lay.n_groups; ++i) {
    for (int k = 0; k < lay.r - 1; ++k) {
      s.eta_free(i, k) = q[lay.eta_free_off(i) + k];
    }
    for (int k = 0; k < lay.K - lay.r; ++k) {
      s.eta_rw(i, k) = q[lay.eta_rw_off(i) + k];
    }
    s.log_tau[i] = q[lay.log_tau_off(i)];
  }
  if (lay.r == 3) {
    for (int i = 0; i < lay.n_groups; ++i) s.xi[i] = q[lay.xi_off() + i];
    s.mu_xi = q[lay.mu_xi_off()];
    s.log_sigma_xi = q[lay.log_sigma_xi_off()];
    s.log_sigma_x = q[lay.log_sigma_x_off()];
  } else if (lay.r == 2) {
    for (int i = 0; i < lay.n_groups; ++i) {
      s.log_lambda[i] = q[lay.log_lambda_off() + i];
    }
    s.log_mu_lambda = q[lay.log_mu_lambda_off()];
    s.log_alpha_lambda = q[lay.log_alpha_lambda_off()];
  }
  s.alpha = q[lay.alpha_off()];
  s.beta0_free = q[lay.beta0_free_off()];
  for (int k = 0; k < lay.K - 2; ++k) {
    s.beta0_rw[k] = q[lay.beta0_rw_off() + k];
  }
  s.log_tau_beta = q[lay.log_tau_beta_off()];
  s.sigma_y_z = q[lay.sigma_y_z_off()];
  s.log_sigma_y_g = q[lay.log_sigma_y_g_off()];
  if (lay.has_z) s.beta_z = q[lay.beta_z_off()];
  return s;
}

}  // namespace frodo
