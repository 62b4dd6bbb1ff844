#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <frodo/gradient.hpp>
#include <frodo/rng.hpp>
#include <frodo/types.hpp>

namespace frodo {

// Position/momentum pair together with the cached log density and gradient at
// the position.  Keeping the gradient alongside the position lets consecutive
// leapfrog steps reuse the evaluation from the previous half-kick.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

// Kinetic energy 0.5 * sum_d inv_mass[d] * p[d]^2 for a diagonal mass matrix.
double kinetic_energy(const Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass);

// Hamiltonian -logp + kinetic.  Non-finite values signal a divergence to the
// caller; they are never thrown.
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass);

// One in-place leapfrog step (half-kick, drift, half-kick).  The sign of eps
// selects the integration direction.  z.grad and z.logp must be valid on
// entry and are updated to match the new position on exit.
void leapfrog_step(PhasePoint& z, double eps, const Eigen::VectorXd& inv_mass,
                   LogDensityEval& eval);

// Convenience single-step integrator: evaluates the gradient at q, performs
// one leapfrog step of size eps, and returns the updated position, momentum
// and Hamiltonian.  A non-finite Hamiltonian indicates the step left the
// region where the target is defined.
struct LeapfrogResult {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  double H = 0.0;
};
LeapfrogResult leapfrog(const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                        double eps, const Eigen::VectorXd& inv_mass,
                        LogDensityEval& eval);

// Summary of a single no-U-turn transition.
struct TransitionInfo {
  double accept_stat = 0.0;  // mean Metropolis ratio over the trajectory
  int depth = 0;             // completed trajectory doublings
  int n_leapfrog = 0;        // total leapfrog steps taken
  bool divergent = false;    // energy error exceeded the divergence threshold
  double energy = 0.0;       // Hamiltonian at the selected draw
};

// Energy error above which a trajectory is flagged divergent.
inline constexpr double kDivergenceThreshold = 1000.0;

// One no-U-turn transition with multinomial trajectory sampling.  The
// trajectory is grown by doubling until the generalized U-turn criterion
// triggers, a divergence occurs, or the depth budget is exhausted.  At least
// one doubling is always attempted, so max_depth = 0 degenerates to a single
// leapfrog step with a two-state multinomial choice.  z is updated in place
// to the selected draw (momentum is resampled internally each call).
TransitionInfo nuts_transition(PhasePoint& z, double eps,
                               const Eigen::VectorXd& inv_mass, int max_depth,
                               LogDensityEval& eval, Rng& rng);

// Nesterov dual averaging of the log step size toward a target acceptance
// statistic.  The anchor point mu is the log of the initial step size, so a
// stream of acceptance statistics exactly at the target leaves the step size
// unchanged.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target_accept);

  // Incorporates one acceptance statistic (clamped to [0, 1]).
  void update(double accept_stat);

  // Restarts the averaging anchored at a new step size.
  void restart(double initial_step);

  // Current exploration step size (used while adaptation is running).
  double step_size() const;

  // Smoothed step size (used once adaptation is frozen).
  double final_step_size() const;

 private:
  double mu_;
  double target_;
  double log_step_;
  double log_step_avg_;
  double h_bar_;
  int counter_;
};

// Streaming mean/variance accumulator used for mass-matrix estimation.
class WelfordVar {
 public:
  explicit WelfordVar(int dim);

  void reset();
  void add(const Eigen::VectorXd& q);
  int count() const { return n_; }

  // Per-coordinate sample variance shrunk toward a small constant, following
  // the usual regularization (n / (n + 5)) * var + 1e-3 * (5 / (n + 5)).
  // Always strictly positive.
  Eigen::VectorXd regularized_variance() const;

 private:
  int n_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// Warmup layout: an initial fast window (step size only), a sequence of
// doubling slow windows (step size + mass matrix), and a terminal fast
// window.  The canonical split for 750 warmup iterations is 75 / 25-doubling
// / 50; other warmup lengths scale the three buffers proportionally.
struct AdaptSchedule {
  int init_buffer = 0;
  int term_buffer = 0;
  int base_window = 0;
  // Absolute 1-based iteration counts after which each slow window closes.
  std::vector<int> slow_window_ends;

  static AdaptSchedule for_warmup(int warmup);
};

// Heuristic search for an initial step size: starting from eps, repeatedly
// double (or halve) until the one-step acceptance ratio crosses 0.8.
// Non-finite trial Hamiltonians count as zero acceptance and shrink the
// step.  The search is capped at 100 iterations.
double find_initial_step_size(const PhasePoint& z0,
                              const Eigen::VectorXd& inv_mass,
                              LogDensityEval& eval, Rng& rng,
                              double eps = 0.1);

// Output of a single chain.
struct ChainOutput {
  Eigen::MatrixXd draws;             // sampling x D, unconstrained scale
  std::vector<int> treedepth;        // per retained iteration
  std::vector<std::uint8_t> divergent;
  std::vector<double> accept_stat;
  std::vector<double> energy;
  std::vector<int> n_leapfrog;
  double step_size = 0.0;            // frozen at the end of warmup
  Eigen::VectorXd inv_mass;          // frozen at the end of warmup
  int divergences = 0;               // count over retained iterations
  int warmup_divergences = 0;
  double elapsed_seconds = 0.0;
};

// Runs settings.chains independent chains, one per thread, each with its own
// RNG stream derived from (settings.seed, chain index) so results do not
// depend on scheduling.  One initial state is required per chain.  A chain
// whose warmup consists entirely of divergent transitions raises
// sampler_error.
std::vector<ChainOutput> run_chains(const LogDensity& model,
                                    const std::vector<Eigen::VectorXd>& inits,
                                    const SamplerSettings& settings);

}  // namespace frodo
