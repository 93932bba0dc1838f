#include <doctest.h>

#include <cmath>
#include <numbers>

#include "critshe/operators.hpp"
#include "oracle.hpp"

using namespace critshe;
using doctest::Approx;
constexpr double kPi = std::numbers::pi;

namespace {

// Isotropic planar Gaussian with unnormalised peak height: h exp(-|z - c|^2 / 2 v).
struct Blob {
  double h;
  Point2 c;
  double v;
};

// int Blob_1(z) Blob_2(z) dz
double overlap(const Blob& a, const Blob& b) {
  const double s = a.v + b.v;
  return a.h * b.h * 2.0 * kPi * (a.v * b.v / s) * std::exp(-norm2(a.c - b.c) / (2.0 * s));
}

// Product of two blobs is a blob.
Blob product(const Blob& a, const Blob& b) {
  const double s = a.v + b.v;
  const Point2 c = (b.v / s) * a.c + (a.v / s) * b.c;
  return {a.h * b.h * std::exp(-norm2(a.c - b.c) / (2.0 * s)), c, a.v * b.v / s};
}

Blob heat(double t, Point2 centre) { return {1.0 / (2.0 * kPi * t), centre, t}; }

// The bump used throughout: peak 1, variance 0.5, centred at (0.2, 0.1); time factor 1 + s/2.
const Blob kBump{1.0, {0.2, 0.1}, 0.5};
double time_factor(double s) { return 1.0 + 0.5 * s; }
TestFunction bump_fn() {
  return TestFunction::separable(InitialData::mixture({{kBump.h, kBump.c, kBump.v}}), time_factor);
}
double bump_at(Point2 x) { return kBump.h * std::exp(-norm2(x - kBump.c) / (2.0 * kBump.v)); }

}  // namespace

TEST_CASE("squared heat kernel identity behind the increment integral") {
  for (double t : {0.01, 0.3, 2.0}) {
    for (Point2 x : {Point2{0.0, 0.0}, Point2{0.3, -0.2}, Point2{1.0, 1.0}}) {
      CHECK(std::pow(heat_kernel(t, x, {}), 2) == Approx(heat_kernel(t / 2.0, x, {}) / (4.0 * kPi * t)).epsilon(1e-13));
    }
  }
}

TEST_CASE("L_op trivial cases and the Gaussian oracle") {
  const OperatorContext ctx = make_context(1.0, 0.3);
  CHECK(L_op(ctx, TestFunction::zero(), {0.1, 0.2}, 0.4) == 0.0);
  CHECK(L0_op(ctx, TestFunction::zero(), {0.1, 0.2}, 0.4) == 0.0);
  const double c = 2.5, s = 0.4;
  const double coefficient =
      -(0.5 * std::log(4.0 * (ctx.T - s)) + ctx.lambda - 0.5 * euler_gamma() - ctx.phi->log_moment()) / (2.0 * kPi);
  CHECK(L_op(ctx, TestFunction::constant(c), {0.1, 0.2}, s) == Approx(coefficient * c).epsilon(1e-12));
  const double coefficient0 =
      -(0.5 * std::log(4.0 * (ctx.T - s)) + ctx.lambda - 0.5 * euler_gamma() - ctx.phi->single_log_moment()) / (2.0 * kPi);
  CHECK(L0_op(ctx, TestFunction::constant(c), {0.1, 0.2}, s) == Approx(coefficient0 * c).epsilon(1e-12));

  const TestFunction f = bump_fn();
  for (Point2 x : {Point2{0.0, 0.0}, Point2{0.5, -0.3}, Point2{1.2, 0.4}}) {
    // int_0^{T-s} ([P f](x) - f(x, s)) / (4 pi t) dt with P_{t/2} applied to the bump by hand
    auto bracket = [&](double t) {
      if (t <= 0.0) return 0.0;
      const Blob flowed{kBump.h * kBump.v / (kBump.v + 0.5 * t), kBump.c, kBump.v + 0.5 * t};
      const double moved = flowed.h * std::exp(-norm2(x - flowed.c) / (2.0 * flowed.v)) * time_factor(s + t);
      return (moved - bump_at(x) * time_factor(s)) / (4.0 * kPi * t);
    };
    const double increment = oracle::tanh_sinh(bracket, 0.0, ctx.T - s);
    const double expected = coefficient * bump_at(x) * time_factor(s) - increment;
    CHECK(L_op(ctx, f, x, s) == Approx(expected).epsilon(1e-4));
  }
  CHECK_THROWS_AS(L_op(ctx, f, {}, 1.0), DomainError);
}

TEST_CASE("L_op minus L0_op is multiplication by the difference of log moments") {
  const OperatorContext ctx = make_context(0.8, -0.2);
  const TestFunction f = bump_fn();
  const double coefficient = -(ctx.phi->single_log_moment() - ctx.phi->log_moment()) / (2.0 * kPi);
  for (Point2 x : {Point2{0.0, 0.0}, Point2{0.7, 0.2}}) {
    for (double s : {0.0, 0.3, 0.7}) {
      CHECK(L_op(ctx, f, x, s) - L0_op(ctx, f, x, s) == Approx(coefficient * f(x, s)).epsilon(1e-10));
    }
  }
}

TEST_CASE("L1_ring") {
  const OperatorContext ctx = make_context(1.0, 0.5);
  const double eps = 0.05, s = 0.2;
  const Point2 y{0.6, -0.3}, x{0.1, 0.4};
  const double coupling = coupling_constant(eps, ctx.lambda);
  CHECK(L1_ring(ctx, eps, TestFunction::constant(1.0), y, x, s) ==
        Approx(coupling * integrated_kernel(ctx.T - s, eps * y)).epsilon(1e-8));
  CHECK(L1_ring(ctx, eps, TestFunction::zero(), y, x, s) == 0.0);
  double previous = 1e300;
  for (double gap : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    const double v = L1_ring(ctx, eps, TestFunction::constant(1.0), y, x, ctx.T - gap);
    CHECK(v < previous);
    previous = v;
  }
  CHECK(previous < 1e-3);
  // generic f: the x-tilde integral of three Gaussians by hand, the time integral by the oracle
  for (double e : {0.3, 0.05}) {
    const Point2 a = e * y + x;
    auto integrand = [&](double u) {
      // the two heat factors meet with weight exp(-|a - x|^2 / 4u), zero in double precision below this
      if (u <= 0.0 || norm2(a - x) / (4.0 * u) > 700.0) return 0.0;
      const Blob three = product(heat(u, a), heat(u, x));
      return time_factor(s + u) * overlap(three, kBump);
    };
    const double expected = coupling_constant(e, ctx.lambda) * oracle::tanh_sinh(integrand, 0.0, ctx.T - s);
    CHECK(L1_ring(ctx, e, bump_fn(), y, x, s) == Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("expansion residual") {
  const OperatorContext ctx = make_context(1.0, 0.0);
  CHECK(expansion_residual(ctx, std::exp(-5.0), TestFunction::zero(), {0.5, 0.3}, {0.1, 0.4}, 0.3) == 0.0);
  CHECK_THROWS_AS(expansion_residual(ctx, 0.1, bump_fn(), {0.0, 0.0}, {}, 0.3), DomainError);
  // At lambda = 1 the scaled residual |R| log^2(1/eps) converges; the last two
  // values agree to 5 percent.
  const OperatorContext one = make_context(1.0, 1.0);
  std::vector<double> scaled;
  for (double L : {4.0, 6.0, 8.0}) {
    scaled.push_back(std::fabs(expansion_residual(one, std::exp(-L), bump_fn(), {0.5, 0.3}, {0.1, 0.4}, 0.3)) * L * L);
  }
  CHECK(scaled[2] == Approx(scaled[1]).epsilon(0.05));
}

TEST_CASE("L3_0 and L4_0") {
  const OperatorContext ctx = make_context(1.0, 0.0);
  const double s = 0.25;
  CHECK(L3_0(ctx, InitialData::constant(3.0), TestFunction::constant(1.0), {0.2, 0.3}, s) == Approx(3.0 * 0.75).epsilon(1e-10));
  CHECK(L3_0(ctx, InitialData::constant(3.0), TestFunction::zero(), {0.2, 0.3}, s) == 0.0);
  CHECK(L4_0(ctx, TestFunction::zero(), {0.2, 0.3}, {0.0, 0.1}, 0.2, 0.4) == 0.0);

  // L3_0 = int_s^T int f(z, t) [P_t X0](z) P_{t-s}(y - z) dz dt
  const Blob x0{0.7, {-0.3, 0.2}, 0.2};
  const InitialData data = InitialData::mixture({{x0.h, x0.c, x0.v}});
  const Point2 y{0.4, -0.1};
  auto l3 = [&](double t) {
    const Blob flowed{x0.h * x0.v / (x0.v + t), x0.c, x0.v + t};
    const double w = t - s;
    if (w <= 0.0) return time_factor(t) * bump_at(y) * flowed.h * std::exp(-norm2(y - flowed.c) / (2.0 * flowed.v));
    return time_factor(t) * overlap(product(kBump, flowed), heat(w, y));
  };
  CHECK(L3_0(ctx, data, bump_fn(), y, s) == Approx(oracle::tanh_sinh(l3, s, ctx.T)).epsilon(1e-4));

  // L4_0 = int_{s'}^T int f(x, t) P_{t-s'}(x - y') P_{t-s}(x - y) dx dt
  const Point2 yp{0.1, 0.3};
  const double sp = 0.4;
  auto l4 = [&](double t) {
    if (t <= sp) return 0.0;
    return time_factor(t) * overlap(product(heat(t - sp, yp), heat(t - s, y)), kBump);
  };
  CHECK(L4_0(ctx, bump_fn(), y, yp, s, sp) == Approx(oracle::tanh_sinh(l4, sp, ctx.T)).epsilon(1e-4));
  CHECK_THROWS_AS(L4_0(ctx, bump_fn(), y, yp, 0.5, 0.4), DomainError);
}

TEST_CASE("operators are linear") {
  const OperatorContext ctx = make_context(1.0, 0.2);
  const TestFunction f = bump_fn();
  const TestFunction g = TestFunction::separable(InitialData::mixture({{0.5, {-0.4, 0.3}, 0.2}}), [](double s) { return 2.0 - s; });
  RngStream rng = rng_stream(51, 0);
  for (int i = 0; i < 3; ++i) {
    const double a = rng.normal(), b = rng.normal();
    const TestFunction h = TestFunction::combination(a, f, b, g);
    const Point2 x{rng.normal() * 0.5, rng.normal() * 0.5}, y{0.4, 0.2};
    const double s = 0.5 * rng.uniform();
    CHECK(L_op(ctx, h, x, s) == Approx(a * L_op(ctx, f, x, s) + b * L_op(ctx, g, x, s)).epsilon(1e-8));
    CHECK(L1_ring(ctx, 0.1, h, y, x, s) ==
          Approx(a * L1_ring(ctx, 0.1, f, y, x, s) + b * L1_ring(ctx, 0.1, g, y, x, s)).epsilon(1e-8));
    const InitialData x0 = InitialData::constant(1.3);
    CHECK(L3_0(ctx, x0, h, x, s) == Approx(a * L3_0(ctx, x0, f, x, s) + b * L3_0(ctx, x0, g, x, s)).epsilon(1e-8));
    CHECK(L4_0(ctx, h, x, y, s, s + 0.1) ==
          Approx(a * L4_0(ctx, f, x, y, s, s + 0.1) + b * L4_0(ctx, g, x, y, s, s + 0.1)).epsilon(1e-8));
  }
}

TEST_CASE("test function gradients match finite differences") {
  const TestFunction f = bump_fn();
  CHECK(f.has_gradient());
  for (Point2 x : {Point2{0.0, 0.0}, Point2{0.6, -0.4}}) {
    const double h = 1e-5 * (1.0 + norm(x));
    const Point2 g = f.gradient(x, 0.3);
    CHECK(g.x == Approx((f({x.x + h, x.y}, 0.3) - f({x.x - h, x.y}, 0.3)) / (2.0 * h)).epsilon(1e-5));
    CHECK(g.y == Approx((f({x.x, x.y + h}, 0.3) - f({x.x, x.y - h}, 0.3)) / (2.0 * h)).epsilon(1e-5));
  }
  const TestFunction plain([](Point2 x, double) { return std::sin(x.x) * std::cos(x.y); }, 0.0);
  CHECK_FALSE(plain.has_gradient());
  CHECK(plain.gradient({0.3, 0.2}, 0.0).x == Approx(std::cos(0.3) * std::cos(0.2)).epsilon(1e-8));
}

TEST_CASE("solve_qv") {
  const OperatorContext ctx = make_context(0.5, 0.0);
  const TestFunction zero = solve_qv(ctx, InitialData::constant(0.0), 0.5, 0.5);
  CHECK(zero({0.3, 0.1}, 0.2) == 0.0);
  CHECK(L_op(ctx, zero, {0.3, 0.1}, 0.2) == 0.0);
  const InitialData g = InitialData::mixture({{1.0, {0.0, 0.0}, 0.3}});
  const TestFunction f = solve_qv(ctx, g, 0.5, 0.5);
  // near the horizon the right side tends to g(x)^2
  const Point2 x{0.2, -0.1};
  const double s = 0.5 - 1e-3;
  CHECK(L_op(ctx, f, x, s) == Approx(std::pow(g.heat_flow(1e-3)(x), 2)).epsilon(1e-2));
  CHECK(std::pow(g.heat_flow(1e-3)(x), 2) == Approx(std::pow(g(x), 2)).epsilon(1e-2));
  CHECK(f(x, s) < f(x, 0.3));
  CHECK_THROWS_AS(solve_qv(ctx, g, 0.4, 0.5), DomainError);
}

TEST_CASE("space-time delta") {
  const OperatorContext ctx = make_context(0.25, 0.0);
  const MollifierSpec mollifier = reference_bump();
  const PhiKernel self = build_phi(mollifier);
  for (double eta : {1e-2, 1e-4}) {
    CHECK(spdelta(ctx, mollifier, eta, TestFunction::constant(1.0), 0.25, {0.3, 0.1}) ==
          Approx(spdelta_unit(self, eta, 0.25)).epsilon(1e-6));
  }
  double previous = 1e300;
  for (double eta : {1e-2, 1e-4, 1e-6}) {
    const double gap = std::fabs(spdelta_unit(self, eta, 0.25) - 1.0);
    CHECK(gap < previous);
    previous = gap;
  }
  // Psi(x, t) = t vanishes at t = 0, so the value goes to zero
  const TestFunction in_time([](Point2, double t) { return t; }, 0.0, [](double, Point2, double t) { return t; });
  previous = 1e300;
  for (double eta : {1e-2, 1e-4, 1e-6}) {
    const double v = spdelta(ctx, mollifier, eta, in_time, 0.25, {0.0, 0.0});
    CHECK(v < previous);
    previous = v;
  }
  // a bump that varies in space: the value approaches Psi(x0, 0)
  const TestFunction psi = bump_fn();
  previous = 1e300;
  for (double eta : {1e-2, 1e-4, 1e-6}) {
    const double gap = std::fabs(spdelta(ctx, mollifier, eta, psi, 0.25, {0.1, 0.0}) - psi({0.1, 0.0}, 0.0));
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK_THROWS_AS(spdelta_unit(self, 0.7, 0.25), DomainError);
}
