#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "critshe/she_sim.hpp"

using namespace critshe;
using doctest::Approx;

namespace {

// eps = 0.2 on a 64^2 grid of a 3.2 box: dx = eps/4 exactly, ten steps to T = 0.04.
SimConfig small_config(int replicas = 4, std::uint64_t seed = 5) {
  SimConfig cfg = make_sim_config(0.2, 0.0, 0.04, 64, 3.2, replicas, seed);
  return cfg;
}

std::string gate_message(const SimConfig& cfg) {
  try {
    cfg.validate();
  } catch (const GateViolation& e) {
    return e.what();
  }
  return "";
}

double lattice_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("configuration gates name the violated inequality") {
  SimConfig ok = small_config();
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.dt <= 0.004 + 1e-15);

  SimConfig dt = ok;
  dt.dt = 0.01;
  CHECK(gate_message(dt).find("dt <= eps^2/10") != std::string::npos);

  SimConfig dx = ok;
  dx.grid_n = 32;
  CHECK(gate_message(dx).find("dx <= eps/4") != std::string::npos);

  SimConfig box = ok;
  box.T = 1.0;
  box.dt = 0.004;
  CHECK(gate_message(box).find("L >= 8 sqrt(T)") != std::string::npos);

  SimConfig grid = ok;
  grid.grid_n = 96;
  grid.box_size = 2.4;
  CHECK_FALSE(gate_message(grid).empty());

  SimConfig reps = ok;
  reps.n_replicas = 0;
  CHECK_FALSE(gate_message(reps).empty());
  CHECK_THROWS_AS(Simulator{dt}, GateViolation);
}

TEST_CASE("time stepping uses a whole number of steps") {
  SimConfig cfg = small_config();
  CHECK(cfg.n_steps() == 10);
  cfg.dt = 0.0039;
  CHECK(cfg.n_steps() == 11);
}

TEST_CASE("noise covariance weights integrate to one") {
  const Simulator sim(small_config());
  const double dx = sim.config().dx();
  double total = 0.0;
  for (const auto& o : sim.noise_offsets()) {
    total += o.weight * dx * dx;
    CHECK(o.weight >= -1e-12);
  }
  CHECK(total == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("without coupling the field follows the exact heat flow") {
  SimConfig cfg = make_sim_config(0.2, 0.0, 0.1, 128, 6.4, 1, 3);
  cfg.params.coupling = 0.0;
  const GaussianBump bump{1.0, {3.2, 3.1}, 0.1};
  cfg.x0 = InitialData::mixture({bump});
  const auto runs = simulate(cfg);
  const FieldSnapshot& last = runs.front().back();
  CHECK(last.t == Approx(0.1));
  const InitialData exact = cfg.x0.heat_flow(0.1);
  double worst = 0.0;
  const double dx = cfg.dx();
  for (int i = 0; i < last.n; ++i) {
    for (int j = 0; j < last.n; ++j) worst = std::max(worst, std::fabs(last.at(i, j) - exact({i * dx, j * dx})));
  }
  CHECK(worst < 1e-8);
  // constant data stays constant
  cfg.x0 = InitialData::constant(2.5);
  const auto flat = simulate(cfg);
  for (double v : flat.front().back().values) CHECK(v == Approx(2.5).epsilon(1e-12));
}

TEST_CASE("heat steps conserve lattice mass") {
  SimConfig cfg = small_config();
  cfg.x0 = InitialData::mixture({{1.0, {1.0, 2.0}, 0.05}});
  Simulator sim(cfg);
  std::vector<double> field = sim.initial_field();
  const double before = lattice_sum(field);
  for (int k = 0; k < 5; ++k) sim.heat_step(field);
  sim.heat_flow(field, 0.37);
  CHECK(lattice_sum(field) == Approx(before).epsilon(1e-12));
}

TEST_CASE("same seed gives bit-identical trajectories") {
  SimConfig cfg = small_config(3, 17);
  cfg.snapshot_times = {0.0, 0.02, 0.04};
  const auto a = simulate(cfg);
  const auto b = simulate(cfg);
  REQUIRE(a.size() == 3);
  for (std::size_t r = 0; r < a.size(); ++r) {
    REQUIRE(a[r].size() == 3);
    for (std::size_t k = 0; k < a[r].size(); ++k) CHECK(a[r][k].values == b[r][k].values);
  }
  cfg.seed = 18;
  const auto c = simulate(cfg);
  CHECK(c[0].back().values != a[0].back().values);
  // replicas use distinct streams
  CHECK(a[0].back().values != a[1].back().values);
}

TEST_CASE("the noise is mean one: E[X] is the heat flow") {
  SimConfig cfg = small_config(200, 23);
  const GaussianBump bump{1.0, {1.6, 1.6}, 0.1};
  cfg.x0 = InitialData::mixture({bump});
  const auto runs = simulate(cfg);
  const InitialData exact = cfg.x0.heat_flow(cfg.T);
  for (Point2 x : {Point2{1.6, 1.6}, Point2{1.9, 1.6}, Point2{1.6, 1.1}}) {
    std::vector<double> values;
    for (const auto& run : runs) values.push_back(run.back().sample(x));
    const Estimate e = jackknife_mean(values);
    CHECK(std::fabs(e.mean - exact(x)) < 4.0 * e.std_err);
    CHECK(e.std_err > 0.0);
  }
}

TEST_CASE("one step conditional mean equals the heat step") {
  SimConfig cfg = small_config(1, 29);
  cfg.x0 = InitialData::mixture({{1.0, {1.6, 1.6}, 0.1}});
  Simulator sim(cfg);
  const std::vector<double> start = sim.initial_field();
  std::vector<double> heated = start;
  sim.heat_step(heated);
  RngStream rng = rng_stream(29, 99);
  const int n = 400;
  std::vector<double> mean(start.size(), 0.0);
  std::vector<double> sq(start.size(), 0.0);
  for (int k = 0; k < n; ++k) {
    std::vector<double> field = start;
    sim.step(field, rng);
    for (std::size_t i = 0; i < field.size(); ++i) {
      mean[i] += field[i] / n;
      sq[i] += field[i] * field[i] / n;
    }
  }
  int outside = 0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double se = std::sqrt(std::max(sq[i] - mean[i] * mean[i], 0.0) / n);
    if (std::fabs(mean[i] - heated[i]) > 4.0 * se + 1e-14) ++outside;
  }
  CHECK(outside < 5);
}

TEST_CASE("snapshot bookkeeping") {
  SimConfig cfg = small_config(2, 31);
  const auto runs = simulate(cfg);
  const FieldSnapshot& s = runs[0].back();
  CHECK(s.n == 64);
  CHECK(s.values.size() == 64u * 64u);
  CHECK(s.negative_fraction >= 0.0);
  CHECK(s.negative_fraction <= 1.0);
  double lowest = 1e300;
  for (double v : s.values) lowest = std::min(lowest, v);
  CHECK(s.min_value == lowest);
  const double dx = cfg.dx();
  CHECK(s.sample({3 * dx, 5 * dx}) == Approx(s.at(3, 5)));
  CHECK(s.sample({3.5 * dx, 5 * dx}) == Approx(0.5 * (s.at(3, 5) + s.at(4, 5))));
  CHECK(s.sample({3 * dx + cfg.box_size, 5 * dx - cfg.box_size}) == Approx(s.at(3, 5)));
}

TEST_CASE("second moment estimator") {
  SimConfig cfg = small_config(3, 37);
  cfg.params.coupling = 0.0;
  cfg.x0 = InitialData::mixture({{1.0, {1.6, 1.6}, 0.2}});
  const auto runs = simulate(cfg);
  std::vector<FieldSnapshot> finals;
  for (const auto& r : runs) finals.push_back(r.back());
  const Point2 x{1.6, 1.6};
  const double heat = cfg.x0.heat_flow(cfg.T)(x);
  CHECK(moment2_estimator(finals, x, {0.0, 0.0}).mean == Approx(heat * heat).epsilon(1e-8));
  cfg.x0 = InitialData::constant(0.0);
  cfg.params = make_params(*cfg.phi, 0.2, 0.0);
  const auto zero = simulate(cfg);
  std::vector<FieldSnapshot> zf;
  for (const auto& r : zero) zf.push_back(r.back());
  CHECK(moment2_estimator(zf, x, {0.05, 0.0}).mean == 0.0);
  CHECK_THROWS(moment2_estimator({finals.front()}, x, {}));
}

TEST_CASE("covariation estimators") {
  SimConfig cfg = small_config(8, 41);
  cfg.snapshot_times = {0.0, 0.008, 0.016, 0.024, 0.032, 0.04};
  const auto runs = simulate(cfg);
  CHECK(nu_estimator(runs, TestFunction::zero(), cfg.T, cfg).mean == 0.0);
  CHECK(mu_estimator(runs, [](Point2, Point2, double) { return 0.0; }, cfg.T, cfg).mean == 0.0);

  // constant data: E[X^2] >= 1, so nu(f) sits just above Lambda t int f
  const InitialData h = InitialData::mixture({{1.0, {1.6, 1.6}, 0.1}});
  const TestFunction f = TestFunction::separable(h);
  const Estimate nu = nu_estimator(runs, f, cfg.T, cfg);
  const double base = cfg.params.coupling * cfg.T * 2.0 * std::numbers::pi * 0.1;
  CHECK(nu.mean > 0.95 * base);
  CHECK(nu.mean < 1.5 * base);

  // mu with g(x~, x) = f(x) is close to nu(f) at this eps
  const Estimate mu = mu_estimator(runs, [&](Point2, Point2 x, double s) { return f(x, s); }, cfg.T, cfg);
  CHECK(mu.mean == Approx(nu.mean).epsilon(0.1));
  // relabelling a symmetric g leaves mu unchanged
  auto g = [&](Point2 a, Point2 b, double) { return h(a) * h(b); };
  auto swapped = [&](Point2 a, Point2 b, double s) { return g(b, a, s); };
  CHECK(mu_estimator(runs, g, cfg.T, cfg).mean == Approx(mu_estimator(runs, swapped, cfg.T, cfg).mean).epsilon(1e-12));

  SimConfig coupling_off = cfg;
  coupling_off.params.coupling = 0.0;
  CHECK(nu_estimator(runs, f, cfg.T, coupling_off).mean == 0.0);

  // time integrals need a snapshot at zero
  SimConfig late = small_config(2, 43);
  const auto final_only = simulate(late);
  CHECK_THROWS(nu_estimator(final_only, f, late.T, late));
}

TEST_CASE("decomposition with a vanishing test function") {
  SimConfig cfg = small_config(2, 47);
  const DecompositionReport r = decomposition_report(cfg, GaussianBump{0.0, {1.6, 1.6}, 0.0625});
  CHECK(r.I1.mean == 0.0);
  CHECK(r.I2.mean == 0.0);
  CHECK(r.I3.mean == 0.0);
  CHECK(r.I4.mean == 0.0);
  CHECK(r.lhs_deterministic == 0.0);
}
