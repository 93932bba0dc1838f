#include <doctest.h>

#include <cmath>
#include <numbers>

#include "critshe/dbg.hpp"
#include "oracle.hpp"

using namespace critshe;
using doctest::Approx;
constexpr double kPi = std::numbers::pi;

namespace {

// int_0^T s_beta = 4 pi int_0^inf (beta T)^u / Gamma(u + 1) du, by the oracle rule.
double s_beta_mass(double beta, double T) {
  return 4.0 * kPi * oracle::tanh_sinh_semi_infinite(
                         [&](double u) { return std::exp(u * std::log(beta * T) - std::lgamma(u + 1.0)); }, 0.0);
}

// int_0^T s(tau) H(tau) dtau with the singular part at tau = 0 split off.
double against_s_beta(const SBetaKernel& s, const std::function<double(double)>& H, double T) {
  const double h0 = H(0.0);
  const double regular = oracle::tanh_sinh([&](double tau) { return tau <= 0.0 ? 0.0 : s.exact(tau) * (H(tau) - h0); }, 0.0, T, 7);
  return h0 * s_beta_mass(s.beta(), T) + regular;
}

// [P_{tau/2} ((P_{t - tau} g)^2)](x) for a single bump g of peak w and variance v at c.
double squared_flow(double w, double v, Point2 c, Point2 x, double t, double tau) {
  const double var1 = v + (t - tau);
  const double peak_sq = std::pow(w * v / var1, 2);  // (P g)^2 has variance var1 / 2
  const double var2 = 0.5 * var1 + 0.5 * tau;
  const Point2 d = x - c;
  return peak_sq * (0.5 * var1 / var2) * std::exp(-norm2(d) / (2.0 * var2));
}

}  // namespace

TEST_CASE("s_beta at beta = tau = 1 is 4 pi times the reciprocal-gamma integral") {
  const double F = oracle::tanh_sinh_semi_infinite([](double u) { return u == 0.0 ? 0.0 : 1.0 / std::tgamma(u); }, 0.0);
  CHECK(F == Approx(2.8077702420285193).epsilon(1e-12));
  const SBetaKernel s(1.0);
  CHECK(s.exact(1.0) == Approx(4.0 * kPi * F).epsilon(1e-9));
  CHECK(s(1.0) == Approx(4.0 * kPi * F).epsilon(1e-8));
}

TEST_CASE("s_beta: direct quadrature against the oracle over a wide range") {
  const SBetaKernel s(1.7);
  for (double tau : {1e-6, 1e-3, 0.2, 3.0, 25.0}) {
    const double x = 1.7 * tau;
    const double nu = oracle::tanh_sinh_semi_infinite(
        [&](double u) { return u == 0.0 ? 0.0 : std::exp(u * std::log(x) - std::lgamma(u)); }, 0.0);
    CHECK(s.exact(tau) == Approx(4.0 * kPi * nu / tau).epsilon(1e-8));
    CHECK(s(tau) == Approx(s.exact(tau)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(s(0.0), DomainError);
  CHECK_THROWS_AS(SBetaKernel(0.0), DomainError);
}

TEST_CASE("s_beta scaling identity on random points") {
  RngStream rng = rng_stream(41, 0);
  const SBetaKernel unit(1.0);
  for (int i = 0; i < 100; ++i) {
    const double beta = std::exp(std::log(0.25) + rng.uniform() * std::log(16.0));
    const double tau = std::exp(std::log(1e-5) + rng.uniform() * std::log(1e6));
    CHECK(SBetaKernel(beta).exact(tau) == Approx(beta * unit.exact(beta * tau)).epsilon(1e-8));
  }
}

TEST_CASE("s_beta is positive and blows up monotonically at the origin") {
  // s_beta grows like e^{beta tau} / tau for large tau and has its minimum near
  // beta tau = 0.24, so the blow-up is checked below beta tau = 0.1.
  const SBetaKernel s(2.0);
  for (double tau = 0.01; tau < 20.0; tau *= 1.5) CHECK(s(tau) > 0.0);
  double previous = 0.0;
  for (double tau = 0.05; tau > 1e-8; tau *= 0.7) {
    const double v = s(tau);
    CHECK(v > previous);
    previous = v;
  }
}

TEST_CASE("integral of s_beta is finite and matches the oracle") {
  for (double beta : {0.5, 1.0, 2.7}) {
    const SBetaKernel s(beta);
    for (double T : {0.01, 0.3, 1.0}) CHECK(s.integral(T) == Approx(s_beta_mass(beta, T)).epsilon(1e-9));
  }
}

TEST_CASE("Laplace transform equals 4 pi / log(q / beta)") {
  CHECK(SBetaKernel(1.0).laplace(std::numbers::e) == Approx(4.0 * kPi).epsilon(1e-4));
  CHECK(SBetaKernel(1.0).laplace(std::exp(2.0)) == Approx(2.0 * kPi).epsilon(1e-4));
  CHECK(SBetaKernel(0.5).laplace(10.0) == Approx(4.0 * kPi / std::log(20.0)).epsilon(1e-4));
  CHECK(SBetaKernel(2.0).laplace(100.0) == Approx(4.0 * kPi / std::log(50.0)).epsilon(1e-4));
  CHECK(SBetaKernel(1.0).laplace(1.001) > 1000.0);
  CHECK_THROWS_AS(SBetaKernel(1.0).laplace(1.0), DomainError);
}

TEST_CASE("Gaussian smoothing and initial data") {
  const InitialData g = InitialData::mixture({{2.0, {0.3, -0.1}, 0.4}});
  const InitialData flowed = g.heat_flow(0.6);
  CHECK(flowed({0.5, 0.2}) == Approx(2.0 * 0.4 / 1.0 * std::exp(-(0.04 + 0.09) / 2.0)).epsilon(1e-14));
  auto fn = [&](Point2 p) { return g(p); };
  CHECK(gaussian_smooth(fn, 0.6, {0.5, 0.2}, 30) == Approx(flowed({0.5, 0.2})).epsilon(1e-10));
  const InitialData callable = InitialData::callable(fn, 50.0, 30);
  CHECK(callable.heat_flow(0.6)({0.5, 0.2}) == Approx(flowed({0.5, 0.2})).epsilon(1e-10));
  CHECK(InitialData::constant(3.0).heat_flow(5.0)({7.0, 1.0}) == 3.0);
  CHECK(g.shifted({1.0, 1.0})({1.3, 0.9}) == Approx(g({0.3, -0.1})));
  CHECK(g.squared()({0.0, 0.0}) == Approx(std::pow(g({0.0, 0.0}), 2)).epsilon(1e-14));
}

TEST_CASE("m_g reduced form against Gaussian algebra and the oracle rule") {
  const double beta = 1.3, w = 1.0, v = 0.5, t = 0.5;
  const SBetaKernel s(beta);
  const InitialData g = InitialData::mixture({{w, {0.0, 0.0}, v}});
  for (Point2 x : {Point2{0.0, 0.0}, Point2{0.5, 0.0}, Point2{0.7, 0.7}, Point2{-1.0, 0.3}, Point2{2.0, 0.0}}) {
    const double expected = against_s_beta(s, [&](double tau) { return squared_flow(w, v, {}, x, t, tau); }, t);
    CHECK(m_g(s, g, x, t) == Approx(expected).epsilon(1e-3));
  }
}

TEST_CASE("m_g simple cases") {
  const SBetaKernel s(1.0);
  CHECK(m_g(s, InitialData::constant(0.0), {0.2, 0.3}, 0.4) == 0.0);
  CHECK(m_g(s, InitialData::mixture({}), {0.2, 0.3}, 0.4) == 0.0);
  const InitialData g = InitialData::mixture({{1.0, {0.0, 0.0}, 0.3}, {0.5, {0.4, -0.2}, 0.1}});
  const Point2 h{1.3, -0.7};
  CHECK(m_g(s, g.shifted(h), Point2{0.2, 0.1} + h, 0.4) == Approx(m_g(s, g, {0.2, 0.1}, 0.4)).epsilon(1e-10));
  // decay along a ray
  double previous = 1e300;
  for (double r : {0.5, 1.0, 2.0, 4.0}) {
    const double m = m_g(s, InitialData::mixture({{1.0, {0.0, 0.0}, 0.3}}), {r, 0.0}, 0.4);
    CHECK(m < previous);
    previous = m;
  }
  CHECK_THROWS_AS(m_g(s, g, {}, 0.0), DomainError);
}

TEST_CASE("K1") {
  const SBetaKernel s(2.0);
  CHECK(K1(s, InitialData::constant(0.0), {0.1, 0.2}, 0.3) == 0.0);
  CHECK(K1(s, InitialData::constant(1.5), {0.1, 0.2}, 0.3) == Approx(2.25 * s_beta_mass(2.0, 0.3)).epsilon(1e-8));
  const double w = 0.8, v = 0.2, t = 0.3;
  const InitialData x0 = InitialData::mixture({{w, {0.1, 0.0}, v}});
  for (Point2 x : {Point2{0.0, 0.0}, Point2{0.4, 0.3}, Point2{-0.5, 0.5}}) {
    const double expected = against_s_beta(s, [&](double tau) { return squared_flow(w, v, {0.1, 0.0}, x, t, tau); }, t);
    CHECK(K1(s, x0, x, t) == Approx(expected).epsilon(1e-3));
  }
}

TEST_CASE("K2 against a single-atom oracle") {
  const SBetaKernel s(1.0);
  CHECK(K2(s, {0.0, 0.0}, 0.5, {0.1, 0.0}, 0.1, {}) == 0.0);
  const Atom atom{{0.3, 0.2}, 1.7};
  const struct {
    Point2 x, xp;
    double t, tp;
  } cases[] = {{{0.0, 0.0}, {0.1, 0.0}, 0.5, 0.1}, {{0.4, -0.2}, {0.2, 0.3}, 0.8, 0.2}, {{-0.3, 0.1}, {0.0, 0.0}, 0.4, 0.0}};
  for (const auto& c : cases) {
    const Point2 mid = 0.5 * (c.xp + atom.position);
    // y-integral by Chapman-Kolmogorov: P_a(y - x')P_a(y - z) = P_{2a}(x' - z) P_{a/2}(y - mid)
    auto H = [&](double tau) {
      const double a = c.t - tau - c.tp;
      if (a <= 0.0) return 0.0;
      const Point2 dz = c.xp - atom.position, dx = c.x - mid;
      return atom.mass * oracle::gauss2(2.0 * a, dz.x, dz.y) * oracle::gauss2(0.5 * tau + 0.5 * a, dx.x, dx.y);
    };
    const double expected = against_s_beta(s, H, c.t - c.tp);
    CHECK(K2(s, c.x, c.t, c.xp, c.tp, {atom}) == Approx(expected).epsilon(1e-3));
  }
  // the time window collapses as t' -> t
  double previous = 1e300;
  for (double gap : {0.1, 0.01, 0.001}) {
    const double v = K2(s, {0.0, 0.0}, 0.5, {0.1, 0.0}, 0.5 - gap, {atom});
    CHECK(v < previous);
    previous = v;
  }
  CHECK(previous < 1e-3);
  CHECK_THROWS_AS(K2(s, {}, 0.5, {}, 0.5, {atom}), DomainError);
}

TEST_CASE("delta-Bose-gas kernel") {
  const Point2 x{0.3, 0.1}, y{-0.2, 0.4};
  const SBetaKernel s(1.5);
  CHECK(p_beta_kernel(s, 0.7, x, y) == Approx(p_beta_kernel(s, 0.7, y, x)).epsilon(1e-10));
  RngStream rng = rng_stream(42, 0);
  for (int i = 0; i < 20; ++i) {
    const Point2 a{rng.normal(), rng.normal()}, b{rng.normal(), rng.normal()};
    const double t = 0.1 + rng.uniform();
    CHECK(p_beta_kernel(s, t, a, b) == Approx(p_beta_kernel(s, t, b, a)).epsilon(1e-9));
  }
  // free part
  CHECK(p_beta_kernel(s, 0.7, x, y) - p_beta_correction(s, 0.7, x, y) ==
        Approx(heat_kernel(1.4, x, y)).epsilon(1e-12));
  // The correction vanishes as beta -> 0, but only logarithmically: s_beta(tau)
  // behaves like 4 pi / (tau log^2(1 / (beta tau))), whose integral near zero is
  // 4 pi / log(1 / (beta t)). So log(1/beta) times the ratio stays bounded.
  double previous = 1e300;
  std::vector<double> scaled;
  for (double beta : {1e-2, 1e-4, 1e-8, 1e-16}) {
    const double ratio = p_beta_correction(SBetaKernel(beta), 0.7, x, y) / heat_kernel(1.4, x, y);
    CHECK(ratio < previous);
    previous = ratio;
    scaled.push_back(ratio * std::log(1.0 / beta));
  }
  CHECK(previous < 0.2);
  for (std::size_t i = 1; i < scaled.size(); ++i) CHECK(scaled[i] <= scaled[i - 1]);
  // and as t -> 0 relative to the free part
  previous = 1e300;
  for (double t : {0.5, 0.05, 0.005}) {
    const Point2 near{0.05, 0.0};
    const double ratio = p_beta_correction(s, t, near, near) / heat_kernel(2.0 * t, near, near);
    CHECK(ratio < previous);
    previous = ratio;
  }
}
