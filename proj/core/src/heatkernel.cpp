#include "critshe/heatkernel.hpp"

#include <cmath>

namespace critshe {

double norm(Point2 a) { return std::hypot(a.x, a.y); }

double heat_density(double t, double r2) {
  if (!(t > 0.0)) throw DomainError("heat kernel needs t > 0");
  return std::exp(-r2 / (2.0 * t)) / (2.0 * M_PI * t);
}

double heat_kernel(double t, Point2 x, Point2 y) { return heat_density(t, norm2(x - y)); }

double integrated_kernel(double T, Point2 y) {
  if (!(T > 0.0)) throw DomainError("integrated_kernel needs T > 0");
  const double r2 = norm2(y);
  if (!(r2 > 0.0)) throw DomainError("integrated_kernel is singular at y = 0");
  return exp_integral_e1(r2 / (4.0 * T)) / (4.0 * M_PI);
}

double RemainderEval::bound() const {
  if (a >= 1.0) return 1.0 / (4.0 * M_PI * a);
  return (1.0 - std::log(a)) / (4.0 * M_PI);
}

RemainderEval expansion_remainder(double a) {
  if (!(a > 0.0)) throw DomainError("remainder needs a > 0");
  const QuadSpec spec{1e-15, 1e-13, 1000};
  auto smooth_part = [](double t) { return t == 0.0 ? 1.0 : -std::expm1(-t) / t; };
  double integral = 0.0;
  if (a >= 1.0) {
    integral = quad_1d(smooth_part, 0.0, 1.0 / a, spec);
  } else {
    integral = quad_1d(smooth_part, 0.0, 1.0, spec);
    // Beyond t ~ 740 the exponential is below the double range.
    const double upper = std::min(1.0 / a, 740.0);
    if (upper > 1.0) integral -= quad_1d([](double t) { return std::exp(-t) / t; }, 1.0, upper, spec);
    integral -= std::log(a);  // log^-(a) = -log a for a < 1
  }
  return {a, integral / (4.0 * M_PI)};
}

double expansion_remainder_closed(double a) {
  if (!(a > 0.0)) throw DomainError("remainder needs a > 0");
  return exp_integral_ein(1.0 / a) / (4.0 * M_PI);
}

double MacdonaldCheck::gap() const { return std::fabs(lhs - rhs); }

MacdonaldCheck macdonald_expansion_check(double q, Point2 x, double eps) {
  if (!(q > 0.0)) throw DomainError("q must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps must lie in (0,1)");
  const double r2 = norm2(x);
  if (!(r2 > 0.0)) throw DomainError("x must be nonzero");
  const double c = eps * eps * r2 / 4.0;
  // t = e^s turns dt/t into ds and leaves a doubly exponentially decaying integrand.
  auto integrand = [&](double s) { return std::exp(-q * std::exp(s) - c * std::exp(-s)); };
  const double lo = std::log(c / 720.0), hi = std::log(720.0 / q);
  // The integrand peaks at s* = log(sqrt(c/q)); splitting there helps GK.
  const double peak = 0.5 * std::log(c / q);
  const QuadSpec spec{1e-15, 1e-13, 2000};
  const double lhs = (quad_1d(integrand, lo, peak, spec) + quad_1d(integrand, peak, hi, spec)) /
                     (4.0 * M_PI);
  const double rhs = std::log(1.0 / eps) / (2.0 * M_PI) +
                     ((std::log(4.0) - std::log(q)) / 2.0 - 0.5 * std::log(r2) - euler_gamma()) /
                         (2.0 * M_PI);
  return {lhs, rhs};
}

double macdonald_lhs_via_k0(double q, Point2 x, double eps) {
  const double z = eps * norm(x) * std::sqrt(q);
  if (!(z > 0.0)) throw DomainError("K0 argument must be positive");
  const double upper = std::acosh(std::max(1.0, 745.0 / z)) + 1.0;
  const double k0 =
      quad_1d([&](double u) { return std::exp(-z * std::cosh(u)); }, 0.0, upper, {1e-15, 1e-13, 2000});
  return k0 / (2.0 * M_PI);
}

double ratio_bound_constant(double p) { return std::pow(2.0, p + 1.0); }

bool ratio_bound_check(double p, const std::vector<std::pair<Point2, Point2>>& samples) {
  if (p < 0.0) throw DomainError("p must be nonnegative");
  const double c = ratio_bound_constant(p);
  for (const auto& [y, yp] : samples) {
    const double lhs = 1.0 / (1.0 + std::pow(norm(y - yp), p));
    const double rhs = c * (1.0 + std::pow(norm(yp), p)) / (1.0 + std::pow(norm(y), p));
    if (lhs > rhs * (1.0 + 1e-12)) return false;
  }
  return true;
}

double weighted_heat_ratio_integral(double p_moment, double p_decay, double T0, Point2 y) {
  if (!(T0 > 0.0)) throw DomainError("T0 must be positive");
  const double radius = 14.0 * std::sqrt(T0);
  return quad_2d(
      [&](double a, double b) {
        const Point2 xp{a, b};
        return std::pow(norm(xp), p_moment) * heat_density(T0, norm2(xp)) /
               (1.0 + std::pow(norm(y - xp), p_decay));
      },
      Disk{0.0, 0.0, radius}, {1e-12, 1e-8, 400});
}

}  // namespace critshe
