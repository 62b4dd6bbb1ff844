#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <frodo/common.hpp>
#include <frodo/rng.hpp>
#include <frodo/sampler.hpp>

#include "test_models.hpp"

using namespace frodo;
using namespace frodo::testing;

namespace {

// Piecewise-constant target: log density 0 at the origin and -drop anywhere
// else, with zero gradient.  Starting at the origin, every leapfrog step has
// an energy error of exactly drop, so the divergence flag is determined by
// drop alone.
class StepDropModel final : public AnalyticModel {
 public:
  StepDropModel(int dim, double drop) : dim_(dim), drop_(drop) {}
  int dim() const override { return dim_; }
  double logp_grad(std::span<const double> q,
                   std::span<double> grad) const override {
    for (auto& g : grad) g = 0.0;
    double norm2 = 0.0;
    for (double v : q) norm2 += v * v;
    return norm2 > 0.0 ? -drop_ : 0.0;
  }

 private:
  int dim_;
  double drop_;
};

PhasePoint make_point(const AnalyticModel& model, const Eigen::VectorXd& q) {
  PhasePoint z;
  z.q = q;
  z.p = Eigen::VectorXd::Zero(q.size());
  z.grad.resize(q.size());
  z.logp = model.logp_grad({q.data(), static_cast<std::size_t>(q.size())},
                           {z.grad.data(), static_cast<std::size_t>(q.size())});
  return z;
}

double chain_mean(const std::vector<ChainOutput>& chains, int col) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : chains) {
    sum += c.draws.col(col).sum();
    n += static_cast<int>(c.draws.rows());
  }
  return sum / n;
}

double chain_var(const std::vector<ChainOutput>& chains, int col) {
  const double m = chain_mean(chains, col);
  double sum = 0.0;
  int n = 0;
  for (const auto& c : chains) {
    sum += (c.draws.col(col).array() - m).square().sum();
    n += static_cast<int>(c.draws.rows());
  }
  return sum / (n - 1);
}

int total_divergences(const std::vector<ChainOutput>& chains) {
  int n = 0;
  for (const auto& c : chains) n += c.divergences + c.warmup_divergences;
  return n;
}

}  // namespace

TEST_CASE("leapfrog on a flat target is a free particle") {
  FlatModel model(3);
  auto eval = model.make_eval();
  Eigen::VectorXd q(3), p(3), inv_mass(3);
  q << 0.5, -1.0, 2.0;
  p << 1.0, 0.25, -0.5;
  inv_mass << 1.0, 4.0, 0.25;
  const double eps = 0.3;

  const LeapfrogResult r = leapfrog(q, p, eps, inv_mass, *eval);
  for (int d = 0; d < 3; ++d) {
    CHECK(r.q[d] == doctest::Approx(q[d] + eps * inv_mass[d] * p[d])
                        .epsilon(1e-14));
    CHECK(r.p[d] == doctest::Approx(p[d]).epsilon(1e-14));
  }
  CHECK(r.H == doctest::Approx(kinetic_energy(p, inv_mass)).epsilon(1e-14));
}

TEST_CASE("leapfrog single step on the 1-D harmonic target") {
  // U = q^2/2, one step of size 0.1 from (q, p) = (1, 0), unit mass:
  //   p_half = -0.05, q' = 1 - 0.1 * 0.05 = 0.995,
  //   p' = -0.05 - 0.05 * 0.995 = -0.09975.
  DiagNormalModel model(Eigen::VectorXd::Ones(1));
  auto eval = model.make_eval();
  Eigen::VectorXd q(1), p(1), inv_mass(1);
  q << 1.0;
  p << 0.0;
  inv_mass << 1.0;

  const LeapfrogResult r = leapfrog(q, p, 0.1, inv_mass, *eval);
  CHECK(r.q[0] == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(r.p[0] == doctest::Approx(-0.09975).epsilon(1e-15));
  CHECK(r.H == doctest::Approx(0.5 * (0.995 * 0.995 + 0.09975 * 0.09975))
                   .epsilon(1e-14));
}

TEST_CASE("leapfrog is reversible to 1e-10") {
  Eigen::VectorXd sd(5);
  sd << 0.5, 1.0, 2.0, 0.3, 1.7;
  DiagNormalModel model(sd);
  auto eval = model.make_eval();
  Rng rng(77);
  Eigen::VectorXd inv_mass(5);
  for (int d = 0; d < 5; ++d) inv_mass[d] = 0.2 + 2.0 * rng.uniform();

  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd q(5), p(5);
    for (int d = 0; d < 5; ++d) {
      q[d] = rng.normal();
      p[d] = rng.normal();
    }
    const double eps = 0.05 + 0.2 * rng.uniform();
    const LeapfrogResult fwd = leapfrog(q, p, eps, inv_mass, *eval);
    const LeapfrogResult back = leapfrog(fwd.q, -fwd.p, eps, inv_mass, *eval);
    CHECK((back.q - q).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((-back.p - p).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("leapfrog energy error scales as eps^2 over a fixed horizon") {
  DiagNormalModel model(Eigen::VectorXd::Ones(1));
  auto eval = model.make_eval();
  const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(1);

  auto max_energy_error = [&](int n_steps) {
    Eigen::VectorXd q(1), p(1);
    q << 1.3;
    p << 0.4;
    PhasePoint z = make_point(model, q);
    z.p = p;
    const double h0 = hamiltonian(z, inv_mass);
    const double eps = 2.0 / n_steps;
    double worst = 0.0;
    for (int s = 0; s < n_steps; ++s) {
      leapfrog_step(z, eps, inv_mass, *eval);
      worst = std::max(worst, std::fabs(hamiltonian(z, inv_mass) - h0));
    }
    return worst;
  };

  const double coarse = max_energy_error(40);
  const double fine = max_energy_error(80);
  CHECK(coarse / fine > 3.0);
  CHECK(coarse / fine < 5.0);
}

TEST_CASE("divergence flag tracks the energy-error threshold") {
  Rng rng(11);

  SUBCASE("energy error just below 1000 never diverges") {
    StepDropModel model(2, 999.5);
    auto eval = model.make_eval();
    const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(2);
    PhasePoint z = make_point(model, Eigen::VectorXd::Zero(2));
    for (int t = 0; t < 10; ++t) {
      const TransitionInfo info =
          nuts_transition(z, 0.5, inv_mass, 4, *eval, rng);
      CHECK_FALSE(info.divergent);
    }
  }

  SUBCASE("energy error just above 1000 always diverges") {
    StepDropModel model(2, 1000.5);
    auto eval = model.make_eval();
    const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(2);
    PhasePoint z = make_point(model, Eigen::VectorXd::Zero(2));
    for (int t = 0; t < 10; ++t) {
      const TransitionInfo info =
          nuts_transition(z, 0.5, inv_mass, 4, *eval, rng);
      CHECK(info.divergent);
      CHECK(info.n_leapfrog == 1);  // the trajectory stops immediately
      CHECK(z.q.cwiseAbs().maxCoeff() == 0.0);  // divergent states never win
    }
  }

  SUBCASE("unstable step size on the harmonic target diverges") {
    DiagNormalModel model(Eigen::VectorXd::Ones(1));
    auto eval = model.make_eval();
    const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd q(1);
    q << 1.0;
    PhasePoint z = make_point(model, q);
    int divergent = 0;
    for (int t = 0; t < 20; ++t) {
      divergent += nuts_transition(z, 50.0, inv_mass, 6, *eval, rng).divergent;
    }
    CHECK(divergent > 0);
  }
}

TEST_CASE("max depth zero degenerates to a two-state multinomial choice") {
  DiagNormalModel model(Eigen::VectorXd::Ones(1));
  auto eval = model.make_eval();
  const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(1);
  Rng rng(5);
  Eigen::VectorXd q(1);
  q << 0.3;
  PhasePoint z = make_point(model, q);

  int moved = 0;
  for (int t = 0; t < 200; ++t) {
    const double before = z.q[0];
    const TransitionInfo info = nuts_transition(z, 0.9, inv_mass, 0, *eval, rng);
    CHECK(info.n_leapfrog == 1);
    CHECK(info.depth <= 1);
    CHECK(info.accept_stat >= 0.0);
    CHECK(info.accept_stat <= 1.0);
    if (z.q[0] != before) ++moved;
  }
  CHECK(moved > 0);
  CHECK(moved < 200);

  // The cached log density must match the current position.
  CHECK(z.logp ==
        doctest::Approx(-0.5 * z.q[0] * z.q[0]).epsilon(1e-14));
}

TEST_CASE("tree depth and leapfrog count respect the depth budget") {
  DiagNormalModel model(Eigen::VectorXd::Ones(10));
  auto eval = model.make_eval();
  const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(10);
  Rng rng(9);
  PhasePoint z = make_point(model, Eigen::VectorXd::Zero(10));

  for (int t = 0; t < 50; ++t) {
    const TransitionInfo info =
        nuts_transition(z, 0.01, inv_mass, 3, *eval, rng);
    CHECK(info.depth <= 3);
    CHECK(info.n_leapfrog <= 7);  // at most 2^3 states beyond the start
  }
}

TEST_CASE("ten-dimensional standard normal is sampled without bias") {
  DiagNormalModel model(Eigen::VectorXd::Ones(10));
  std::vector<Eigen::VectorXd> inits;
  Rng init_rng(303);
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd q(10);
    for (int d = 0; d < 10; ++d) q[d] = 2.0 * init_rng.normal();
    inits.push_back(q);
  }

  SamplerSettings settings;
  settings.chains = 4;
  settings.warmup = 300;
  settings.sampling = 500;
  settings.max_tree_depth = 10;
  settings.target_accept = 0.8;
  settings.seed = 2024;

  const auto chains = run_chains(model, inits, settings);
  REQUIRE(chains.size() == 4);

  // 2000 retained draws; a conservative effective-sample bound of half the
  // nominal count puts four standard errors at 4 / sqrt(1000) = 0.126.
  for (int d = 0; d < 10; ++d) {
    CHECK(std::fabs(chain_mean(chains, d)) < 0.126);
    CHECK(chain_var(chains, d) > 0.8);
    CHECK(chain_var(chains, d) < 1.2);
  }
}

TEST_CASE("correlated bivariate normal recovers its correlation") {
  CorrNormal2Model model(0.8);
  std::vector<Eigen::VectorXd> inits;
  Rng init_rng(11);
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd q(2);
    q << init_rng.normal(), init_rng.normal();
    inits.push_back(q);
  }

  SamplerSettings settings;
  settings.chains = 4;
  settings.warmup = 300;
  settings.sampling = 750;
  settings.target_accept = 0.9;
  settings.seed = 8;

  const auto chains = run_chains(model, inits, settings);
  const double m0 = chain_mean(chains, 0);
  const double m1 = chain_mean(chains, 1);
  double cov = 0.0;
  int n = 0;
  for (const auto& c : chains) {
    cov += ((c.draws.col(0).array() - m0) * (c.draws.col(1).array() - m1))
               .sum();
    n += static_cast<int>(c.draws.rows());
  }
  cov /= (n - 1);
  const double corr =
      cov / std::sqrt(chain_var(chains, 0) * chain_var(chains, 1));
  CHECK(std::fabs(corr - 0.8) < 0.05);
}

TEST_CASE("funnel divergence rate drops at a higher acceptance target") {
  FunnelModel model(2);
  std::vector<Eigen::VectorXd> inits;
  inits.push_back(Eigen::VectorXd::Zero(2));
  inits.push_back(Eigen::VectorXd::Ones(2));

  auto run_at = [&](double target) {
    SamplerSettings settings;
    settings.chains = 2;
    settings.warmup = 400;
    settings.sampling = 800;
    settings.target_accept = target;
    settings.seed = 31;
    return total_divergences(run_chains(model, inits, settings));
  };

  const int loose = run_at(0.8);
  const int strict = run_at(0.99);
  CHECK(strict < loose);
}

TEST_CASE("mass adaptation recovers the target scales within a factor of two") {
  Eigen::VectorXd sd(3);
  sd << 10.0, 1.0, 0.1;
  DiagNormalModel model(sd);
  std::vector<Eigen::VectorXd> inits;
  inits.push_back(Eigen::VectorXd::Zero(3));

  SamplerSettings settings;
  settings.chains = 1;
  settings.warmup = 750;
  settings.sampling = 50;
  settings.target_accept = 0.8;
  settings.seed = 99;

  const auto chains = run_chains(model, inits, settings);
  REQUIRE(chains.size() == 1);
  const Eigen::VectorXd& inv_mass = chains[0].inv_mass;
  for (int d = 0; d < 3; ++d) {
    CHECK(inv_mass[d] > 0.0);
    const double ratio = inv_mass[d] / (sd[d] * sd[d]);
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }
  CHECK(chains[0].step_size > 0.0);
}

TEST_CASE("dual averaging holds the step fixed at the target acceptance") {
  DualAveraging da(0.3, 0.9);
  for (int m = 0; m < 200; ++m) {
    da.update(0.9);
    CHECK(da.step_size() == doctest::Approx(0.3).epsilon(1e-12));
  }
  CHECK(da.final_step_size() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("dual averaging shrinks the step under zero acceptance") {
  DualAveraging da(0.5, 0.8);
  double prev = da.step_size();
  for (int m = 0; m < 50; ++m) {
    da.update(0.0);
    CHECK(da.step_size() < prev);
    prev = da.step_size();
  }
}

TEST_CASE("adaptation schedule matches the canonical 750-iteration split") {
  const AdaptSchedule s = AdaptSchedule::for_warmup(750);
  CHECK(s.init_buffer == 75);
  CHECK(s.term_buffer == 50);
  CHECK(s.base_window == 25);
  REQUIRE(s.slow_window_ends.size() == 4);
  CHECK(s.slow_window_ends[0] == 100);
  CHECK(s.slow_window_ends[1] == 150);
  CHECK(s.slow_window_ends[2] == 250);
  CHECK(s.slow_window_ends[3] == 700);
}

TEST_CASE("adaptation schedule scales with the warmup length") {
  const AdaptSchedule s = AdaptSchedule::for_warmup(150);
  CHECK(s.init_buffer == 15);
  CHECK(s.term_buffer == 10);
  CHECK(s.base_window == 5);
  REQUIRE_FALSE(s.slow_window_ends.empty());
  CHECK(s.slow_window_ends.back() == 140);

  const AdaptSchedule s300 = AdaptSchedule::for_warmup(300);
  CHECK(s300.init_buffer == 30);
  CHECK(s300.term_buffer == 20);
  CHECK(s300.slow_window_ends.back() == 280);

  CHECK_THROWS_AS(AdaptSchedule::for_warmup(149), config_error);
}

TEST_CASE("welford accumulator matches the regularized variance formula") {
  WelfordVar w(2);
  const double values0[] = {1.0, 2.0, 3.0, 4.0};
  const double values1[] = {-1.0, 0.5, 2.0, -0.5};
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd q(2);
    q << values0[i], values1[i];
    w.add(q);
  }
  CHECK(w.count() == 4);

  auto direct = [](const double* v) {
    double mean = (v[0] + v[1] + v[2] + v[3]) / 4.0;
    double ss = 0.0;
    for (int i = 0; i < 4; ++i) ss += (v[i] - mean) * (v[i] - mean);
    const double var = ss / 3.0;
    return (4.0 / 9.0) * var + 1e-3 * (5.0 / 9.0);
  };
  const Eigen::VectorXd reg = w.regularized_variance();
  CHECK(reg[0] == doctest::Approx(direct(values0)).epsilon(1e-12));
  CHECK(reg[1] == doctest::Approx(direct(values1)).epsilon(1e-12));

  w.reset();
  CHECK(w.count() == 0);
  CHECK(w.regularized_variance()[0] == 1.0);  // fallback before two samples
}

TEST_CASE("initial step size search lands in a sensible range") {
  Rng rng(17);

  SUBCASE("unit normal accepts a moderate step") {
    DiagNormalModel model(Eigen::VectorXd::Ones(1));
    auto eval = model.make_eval();
    Eigen::VectorXd q(1);
    q << 0.1;
    PhasePoint z = make_point(model, q);
    const double eps =
        find_initial_step_size(z, Eigen::VectorXd::Ones(1), *eval, rng);
    CHECK(eps > 0.25);
    CHECK(eps < 8.0);
  }

  SUBCASE("narrow target forces a small step") {
    DiagNormalModel model(Eigen::VectorXd::Constant(1, 0.01));
    auto eval = model.make_eval();
    Eigen::VectorXd q(1);
    q << 0.005;
    PhasePoint z = make_point(model, q);
    const double eps =
        find_initial_step_size(z, Eigen::VectorXd::Ones(1), *eval, rng);
    CHECK(eps < 0.1);
    CHECK(eps > 0.0);
  }

  SUBCASE("always-invalid steps shrink to the floor and stop") {
    OriginOnlyModel model(2);
    auto eval = model.make_eval();
    PhasePoint z = make_point(model, Eigen::VectorXd::Zero(2));
    const double eps =
        find_initial_step_size(z, Eigen::VectorXd::Ones(2), *eval, rng);
    CHECK(eps >= 1e-10);
    CHECK(eps <= 2e-10);
  }
}

TEST_CASE("run_chains is deterministic per seed and chain") {
  CorrNormal2Model model(0.5);
  std::vector<Eigen::VectorXd> inits;
  Eigen::VectorXd q(2);
  q << 0.2, -0.4;
  inits.push_back(q);
  inits.push_back(-q);

  SamplerSettings settings;
  settings.chains = 2;
  settings.warmup = 160;
  settings.sampling = 40;
  settings.seed = 42;

  const auto a = run_chains(model, inits, settings);
  const auto b = run_chains(model, inits, settings);
  REQUIRE(a.size() == 2);
  for (int c = 0; c < 2; ++c) {
    REQUIRE(a[c].draws.rows() == 40);
    REQUIRE(a[c].draws.cols() == 2);
    CHECK(std::memcmp(a[c].draws.data(), b[c].draws.data(),
                      sizeof(double) * 80) == 0);
    CHECK(a[c].step_size == b[c].step_size);
    CHECK(a[c].treedepth == b[c].treedepth);
  }

  settings.seed = 43;
  const auto c43 = run_chains(model, inits, settings);
  CHECK(std::memcmp(a[0].draws.data(), c43[0].draws.data(),
                    sizeof(double) * 80) != 0);
}

TEST_CASE("paper-scale chain counts retain 5000 draws") {
  DiagNormalModel model(Eigen::VectorXd::Ones(1));
  std::vector<Eigen::VectorXd> inits;
  Rng init_rng(7);
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd q(1);
    q << init_rng.normal();
    inits.push_back(q);
  }

  SamplerSettings settings;  // defaults: 4 chains, warmup 750, sampling 1250
  settings.seed = 5;
  const auto chains = run_chains(model, inits, settings);
  int total = 0;
  for (const auto& c : chains) total += static_cast<int>(c.draws.rows());
  CHECK(total == 5000);
  for (const auto& c : chains) {
    CHECK(c.treedepth.size() == 1250);
    CHECK(c.divergent.size() == 1250);
    CHECK(c.inv_mass.size() == 1);
    CHECK(c.inv_mass[0] > 0.0);
  }
}

TEST_CASE("run_chains validates its configuration") {
  DiagNormalModel model(Eigen::VectorXd::Ones(2));
  std::vector<Eigen::VectorXd> inits;
  inits.push_back(Eigen::VectorXd::Zero(2));

  SamplerSettings settings;
  settings.chains = 2;  // only one init supplied
  settings.warmup = 200;
  settings.sampling = 10;
  CHECK_THROWS_AS(run_chains(model, inits, settings), config_error);

  settings.chains = 1;
  settings.warmup = 100;  // below the adaptation minimum
  CHECK_THROWS_AS(run_chains(model, inits, settings), config_error);

  settings.warmup = 200;
  inits[0] = Eigen::VectorXd::Zero(3);  // wrong dimension
  CHECK_THROWS_AS(run_chains(model, inits, settings), config_error);
}

TEST_CASE("degenerate targets raise sampler errors") {
  SUBCASE("all-divergent warmup") {
    OriginOnlyModel model(2);
    std::vector<Eigen::VectorXd> inits;
    inits.push_back(Eigen::VectorXd::Zero(2));
    SamplerSettings settings;
    settings.chains = 1;
    settings.warmup = 150;
    settings.sampling = 5;
    CHECK_THROWS_AS(run_chains(model, inits, settings), sampler_error);
  }

  SUBCASE("non-finite initial state") {
    DiagNormalModel model(Eigen::VectorXd::Ones(2));
    std::vector<Eigen::VectorXd> inits;
    Eigen::VectorXd q(2);
    q << std::numeric_limits<double>::quiet_NaN(), 0.0;
    inits.push_back(q);
    SamplerSettings settings;
    settings.chains = 1;
    settings.warmup = 150;
    settings.sampling = 5;
    CHECK_THROWS_AS(run_chains(model, inits, settings), sampler_error);
  }
}
