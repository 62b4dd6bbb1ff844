#include <frodo/sampler.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <frodo/common.hpp>

namespace frodo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::span<const double> cspan(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::span<double> mspan(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void draw_momentum(Eigen::VectorXd& p, const Eigen::VectorXd& inv_mass,
                   Rng& rng) {
  p.resize(inv_mass.size());
  for (Eigen::Index d = 0; d < p.size(); ++d) {
    p[d] = rng.normal() / std::sqrt(inv_mass[d]);
  }
}

}  // namespace

double kinetic_energy(const Eigen::VectorXd& p,
                      const Eigen::VectorXd& inv_mass) {
  return 0.5 * p.cwiseProduct(p).dot(inv_mass);
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass) {
  return -z.logp + kinetic_energy(z.p, inv_mass);
}

void leapfrog_step(PhasePoint& z, double eps, const Eigen::VectorXd& inv_mass,
                   LogDensityEval& eval) {
  const double half = 0.5 * eps;
  z.p += half * z.grad;
  z.q += eps * inv_mass.cwiseProduct(z.p);
  z.logp = eval.value_and_grad(cspan(z.q), mspan(z.grad));
  z.p += half * z.grad;
}

LeapfrogResult leapfrog(const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                        double eps, const Eigen::VectorXd& inv_mass,
                        LogDensityEval& eval) {
  PhasePoint z;
  z.q = q;
  z.p = p;
  z.grad.resize(q.size());
  z.logp = eval.value_and_grad(cspan(z.q), mspan(z.grad));
  leapfrog_step(z, eps, inv_mass, eval);
  LeapfrogResult out;
  out.q = std::move(z.q);
  out.p = std::move(z.p);
  out.H = hamiltonian({out.q, out.p, z.grad, z.logp}, inv_mass);
  return out;
}

namespace {

// Grows one side of a trajectory by recursive doubling, accumulating the
// trajectory-sampling weights, the Metropolis statistic, and the subtree
// momentum sums needed for the generalized U-turn criterion.
class TreeBuilder {
 public:
  struct Proposal {
    Eigen::VectorXd q;
    Eigen::VectorXd grad;
    double logp = 0.0;
    double H = 0.0;
  };

  TreeBuilder(LogDensityEval& eval, const Eigen::VectorXd& inv_mass, double h0,
              Rng& rng)
      : eval_(eval), inv_mass_(inv_mass), h0_(h0), rng_(rng) {}

  // Extends z by 2^depth leapfrog steps of (signed) size sign_eps.  On exit z
  // sits at the far end of the subtree, p_sharp_beg/p_sharp_end hold the
  // mass-weighted momenta at the subtree's first and last states, rho has the
  // subtree momentum sum added in, and log_sum_weight the subtree's total
  // trajectory weight merged in.  Returns false if the subtree diverged or
  // contains an internal U-turn; such a subtree must not contribute samples.
  bool build(int depth, PhasePoint& z, Proposal& propose,
             Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
             Eigen::VectorXd& rho, double& log_sum_weight, double sign_eps) {
    if (depth == 0) {
      leapfrog_step(z, sign_eps, inv_mass_, eval_);
      ++n_leapfrog;
      double h = hamiltonian(z, inv_mass_);
      if (!std::isfinite(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0_ > kDivergenceThreshold) divergent = true;
      const double log_weight = h0_ - h;
      log_sum_weight = log_add_exp(log_sum_weight, log_weight);
      sum_metro_prob += log_weight > 0.0 ? 1.0 : std::exp(log_weight);
      propose.q = z.q;
      propose.grad = z.grad;
      propose.logp = z.logp;
      propose.H = h;
      p_sharp_beg = inv_mass_.cwiseProduct(z.p);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      return !divergent;
    }

    const Eigen::Index dim = rho.size();
    double lsw_left = kNegInf;
    Eigen::VectorXd rho_left = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p_sharp_left_end(dim);
    if (!build(depth - 1, z, propose, p_sharp_beg, p_sharp_left_end, rho_left,
               lsw_left, sign_eps)) {
      return false;
    }

    Proposal propose_right;
    double lsw_right = kNegInf;
    Eigen::VectorXd rho_right = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p_sharp_right_beg(dim);
    if (!build(depth - 1, z, propose_right, p_sharp_right_beg, p_sharp_end,
               rho_right, lsw_right, sign_eps)) {
      return false;
    }

    // Uniform multinomial choice between the two halves of the subtree.
    const double lsw_subtree = log_add_exp(lsw_left, lsw_right);
    if (rng_.uniform() < std::exp(lsw_right - lsw_subtree)) {
      propose = std::move(propose_right);
    }
    log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);

    const Eigen::VectorXd rho_subtree = rho_left + rho_right;
    rho += rho_subtree;
    return p_sharp_beg.dot(rho_subtree) > 0.0 &&
           p_sharp_end.dot(rho_subtree) > 0.0;
  }

  bool divergent = false;
  double sum_metro_prob = 0.0;
  int n_leapfrog = 0;

 private:
  LogDensityEval& eval_;
  const Eigen::VectorXd& inv_mass_;
  double h0_;
  Rng& rng_;
};

}  // namespace

TransitionInfo nuts_transition(PhasePoint& z, double eps,
                               const Eigen::VectorXd& inv_mass, int max_depth,
                               LogDensityEval& eval, Rng& rng) {
  const Eigen::Index dim = z.q.size();
  draw_momentum(z.p, inv_mass, rng);
  const double h0 = hamiltonian(z, inv_mass);

  TreeBuilder tree(eval, inv_mass, h0, rng);
  PhasePoint z_fwd = z;
  PhasePoint z_bwd = z;
  Eigen::VectorXd p_sharp_fwd = inv_mass.cwiseProduct(z.p);
  Eigen::VectorXd p_sharp_bwd = p_sharp_fwd;
  Eigen::VectorXd rho = z.p;
  TreeBuilder::Proposal sample{z.q, z.grad, z.logp, h0};
  double log_sum_weight = 0.0;  // the initial state carries weight one

  TransitionInfo info;
  const int doublings = std::max(1, max_depth);
  while (info.depth < doublings) {
    double lsw_subtree = kNegInf;
    Eigen::VectorXd rho_subtree = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p_sharp_inner(dim);
    TreeBuilder::Proposal propose;
    bool valid;
    if (rng.uniform() < 0.5) {
      valid = tree.build(info.depth, z_fwd, propose, p_sharp_inner, p_sharp_fwd,
                         rho_subtree, lsw_subtree, eps);
    } else {
      valid = tree.build(info.depth, z_bwd, propose, p_sharp_inner, p_sharp_bwd,
                         rho_subtree, lsw_subtree, -eps);
    }
    if (!valid) break;
    ++info.depth;

    // Biased progressive sampling: favor the fresh subtree relative to the
    // trajectory accumulated so far.
    if (lsw_subtree > log_sum_weight) {
      sample = std::move(propose);
    } else if (rng.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
      sample = std::move(propose);
    }
    log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);

    rho += rho_subtree;
    if (!(p_sharp_bwd.dot(rho) > 0.0 && p_sharp_fwd.dot(rho) > 0.0)) break;
  }

  info.divergent = tree.divergent;
  info.n_leapfrog = tree.n_leapfrog;
  info.accept_stat =
      tree.n_leapfrog > 0 ? tree.sum_metro_prob / tree.n_leapfrog : 0.0;
  info.energy = sample.H;
  z.q = std::move(sample.q);
  z.grad = std::move(sample.grad);
  z.logp = sample.logp;
  return info;
}

DualAveraging::DualAveraging(double initial_step, double target_accept)
    : target_(target_accept) {
  restart(initial_step);
}

void DualAveraging::restart(double initial_step) {
  mu_ = std::log(initial_step);
  log_step_ = mu_;
  log_step_avg_ = mu_;
  h_bar_ = 0.0;
  counter_ = 0;
}

void DualAveraging::update(double accept_stat) {
  constexpr double kGamma = 0.05;
  constexpr double kT0 = 10.0;
  constexpr double kKappa = 0.75;
  const double a = std::isfinite(accept_stat)
                       ? std::min(1.0, std::max(0.0, accept_stat))
                       : 0.0;
  ++counter_;
  const double m = static_cast<double>(counter_);
  const double eta = 1.0 / (m + kT0);
  h_bar_ += eta * ((target_ - a) - h_bar_);
  log_step_ = mu_ - std::sqrt(m) / kGamma * h_bar_;
  const double w = std::pow(m, -kKappa);
  log_step_avg_ = w * log_step_ + (1.0 - w) * log_step_avg_;
}

double DualAveraging::step_size() const { return std::exp(log_step_); }

double DualAveraging::final_step_size() const {
  return std::exp(log_step_avg_);
}

WelfordVar::WelfordVar(int dim)
    : n_(0),
      mean_(Eigen::VectorXd::Zero(dim)),
      m2_(Eigen::VectorXd::Zero(dim)) {}

void WelfordVar::reset() {
  n_ = 0;
  mean_.setZero();
  m2_.setZero();
}

void WelfordVar::add(const Eigen::VectorXd& q) {
  ++n_;
  const Eigen::VectorXd delta = q - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta.cwiseProduct(q - mean_);
}

Eigen::VectorXd WelfordVar::regularized_variance() const {
  if (n_ < 2) return Eigen::VectorXd::Ones(mean_.size());
  const double n = static_cast<double>(n_);
  const Eigen::ArrayXd var = m2_.array() / (n - 1.0);
  return (n / (n + 5.0) * var + 1e-3 * (5.0 / (n + 5.0))).matrix();
}

AdaptSchedule AdaptSchedule::for_warmup(int warmup) {
  if (warmup < 150) {
    throw config_error(
        "warmup must be at least 150 iterations for the adaptation windows");
  }
  AdaptSchedule s;
  s.init_buffer = std::max(
      1, static_cast<int>(std::lround(warmup * (75.0 / 750.0))));
  s.term_buffer = std::max(
      1, static_cast<int>(std::lround(warmup * (50.0 / 750.0))));
  s.base_window = std::max(
      1, static_cast<int>(std::lround(warmup * (25.0 / 750.0))));

  const int slow_end = warmup - s.term_buffer;
  int start = s.init_buffer;
  int window = s.base_window;
  while (start < slow_end) {
    int end = start + window;
    // If the next (doubled) window would overrun the slow region, absorb the
    // remainder into this window instead of leaving a stub.
    if (end + 2 * window > slow_end) end = slow_end;
    if (end > slow_end) end = slow_end;
    s.slow_window_ends.push_back(end);
    start = end;
    window *= 2;
  }
  return s;
}

double find_initial_step_size(const PhasePoint& z0,
                              const Eigen::VectorXd& inv_mass,
                              LogDensityEval& eval, Rng& rng, double eps) {
  const double log_threshold = std::log(0.8);
  int direction = 0;
  for (int iter = 0; iter < 100; ++iter) {
    PhasePoint z = z0;
    draw_momentum(z.p, inv_mass, rng);
    const double h0 = hamiltonian(z, inv_mass);
    leapfrog_step(z, eps, inv_mass, eval);
    double h1 = hamiltonian(z, inv_mass);
    if (!std::isfinite(h1)) h1 = std::numeric_limits<double>::infinity();
    const double log_ratio = h0 - h1;
    const int dir = log_ratio > log_threshold ? 1 : -1;
    if (direction == 0) {
      direction = dir;
    } else if (dir != direction) {
      break;
    }
    const double next = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (next > 1e7 || next < 1e-10) break;
    eps = next;
  }
  return eps;
}

namespace {

ChainOutput run_single_chain(const LogDensity& model,
                             const Eigen::VectorXd& init,
                             const SamplerSettings& settings, int chain) {
  const auto t_start = std::chrono::steady_clock::now();
  Rng rng(settings.seed, static_cast<std::uint64_t>(chain));
  const std::unique_ptr<LogDensityEval> eval = model.make_eval();
  const Eigen::Index dim = eval->dim();

  PhasePoint z;
  z.q = init;
  z.p = Eigen::VectorXd::Zero(dim);
  z.grad.resize(dim);
  z.logp = eval->value_and_grad(cspan(z.q), mspan(z.grad));
  if (!std::isfinite(z.logp)) {
    throw sampler_error("chain " + std::to_string(chain) +
                        ": initial state has non-finite log density");
  }

  Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
  DualAveraging da(find_initial_step_size(z, inv_mass, *eval, rng),
                   settings.target_accept);
  const AdaptSchedule sched = AdaptSchedule::for_warmup(settings.warmup);
  WelfordVar welford(static_cast<int>(dim));

  int warmup_divergences = 0;
  std::size_t next_window = 0;
  for (int m = 1; m <= settings.warmup; ++m) {
    const TransitionInfo info = nuts_transition(
        z, da.step_size(), inv_mass, settings.max_tree_depth, *eval, rng);
    if (info.divergent) ++warmup_divergences;
    da.update(info.accept_stat);
    const bool in_slow = m > sched.init_buffer &&
                         m <= settings.warmup - sched.term_buffer;
    if (in_slow) welford.add(z.q);
    if (next_window < sched.slow_window_ends.size() &&
        m == sched.slow_window_ends[next_window]) {
      inv_mass = welford.regularized_variance();
      welford.reset();
      da.restart(find_initial_step_size(z, inv_mass, *eval, rng,
                                        da.step_size()));
      ++next_window;
    }
  }
  if (warmup_divergences == settings.warmup) {
    throw sampler_error(
        "chain " + std::to_string(chain) +
        ": every warmup transition diverged (warmup " +
        std::to_string(settings.warmup) + ", final step size " +
        std::to_string(da.step_size()) + ")");
  }

  ChainOutput out;
  out.step_size = da.final_step_size();
  out.inv_mass = inv_mass;
  out.warmup_divergences = warmup_divergences;
  out.draws.resize(settings.sampling, dim);
  out.treedepth.reserve(settings.sampling);
  out.divergent.reserve(settings.sampling);
  out.accept_stat.reserve(settings.sampling);
  out.energy.reserve(settings.sampling);
  out.n_leapfrog.reserve(settings.sampling);

  for (int t = 0; t < settings.sampling; ++t) {
    const TransitionInfo info = nuts_transition(
        z, out.step_size, inv_mass, settings.max_tree_depth, *eval, rng);
    out.draws.row(t) = z.q;
    out.treedepth.push_back(info.depth);
    out.divergent.push_back(info.divergent ? 1 : 0);
    out.accept_stat.push_back(info.accept_stat);
    out.energy.push_back(info.energy);
    out.n_leapfrog.push_back(info.n_leapfrog);
    if (info.divergent) ++out.divergences;
  }

  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

}  // namespace

std::vector<ChainOutput> run_chains(const LogDensity& model,
                                    const std::vector<Eigen::VectorXd>& inits,
                                    const SamplerSettings& settings) {
  settings.validate();
  if (static_cast<int>(inits.size()) != settings.chains) {
    throw config_error("need exactly one initial state per chain (got " +
                       std::to_string(inits.size()) + " for " +
                       std::to_string(settings.chains) + " chains)");
  }
  const int dim = model.dim();
  for (const auto& q : inits) {
    if (q.size() != dim) {
      throw config_error("initial state dimension mismatch: expected " +
                         std::to_string(dim) + ", got " +
                         std::to_string(q.size()));
    }
  }

  std::vector<ChainOutput> outputs(settings.chains);
  std::vector<std::exception_ptr> errors(settings.chains);
  std::vector<std::thread> threads;
  threads.reserve(settings.chains);
  for (int c = 0; c < settings.chains; ++c) {
    threads.emplace_back([&, c]() {
      try {
        outputs[c] = run_single_chain(model, inits[c], settings, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outputs;
}

}  // namespace frodo
