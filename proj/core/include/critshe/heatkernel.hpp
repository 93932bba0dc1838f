#pragma once

#include <utility>
#include <vector>

#include "critshe/numcore.hpp"

namespace critshe {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double c, Point2 a) { return {c * a.x, c * a.y}; }
inline Point2 operator*(Point2 a, double c) { return {c * a.x, c * a.y}; }
inline double norm2(Point2 a) { return a.x * a.x + a.y * a.y; }
double norm(Point2 a);

// Gaussian density with covariance t*I evaluated at squared distance r2.
double heat_density(double t, double r2);
double heat_kernel(double t, Point2 x, Point2 y);

// int_0^T P_{2r}(y) dr in closed form E1(|y|^2/4T)/(4 pi).
double integrated_kernel(double T, Point2 y);

struct RemainderEval {
  double a = 0.0;
  double value = 0.0;
  // Explicit bound for the remainder: 1/(4 pi a) if a >= 1, (1 + log^- a)/(4 pi) otherwise.
  double bound() const;
};

// The Euler-Mascheroni remainder of the time-integrated kernel, evaluated from
// its defining integral.
RemainderEval expansion_remainder(double a);
// Same quantity in closed form, Ein(1/a)/(4 pi); cheap enough for inner loops.
double expansion_remainder_closed(double a);

struct MacdonaldCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap() const;
};
MacdonaldCheck macdonald_expansion_check(double q, Point2 x, double eps);
// The same left side through K0(z) = int_0^inf exp(-z cosh u) du.
double macdonald_lhs_via_k0(double q, Point2 x, double eps);

// Constant in 1/(1+|y-y'|^p) <= C (1+|y'|^p)/(1+|y|^p).
double ratio_bound_constant(double p);
bool ratio_bound_check(double p, const std::vector<std::pair<Point2, Point2>>& samples);

// int |x'|^{p'} P_{T0}(x') / (1 + |y - x'|^p) dx'.
double weighted_heat_ratio_integral(double p_moment, double p_decay, double T0, Point2 y);

}  // namespace critshe
