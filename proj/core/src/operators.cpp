#include "critshe/operators.hpp"

#include <cmath>

namespace critshe {

namespace {

constexpr int kHermiteOrder = 20;

void check_time(const OperatorContext& ctx, double s) {
  if (!(s < ctx.T)) throw DomainError("operators need s < T");
  if (s < 0.0) throw DomainError("operators need s >= 0");
}

double log_coefficient(const OperatorContext& ctx, double s, double log_moment) {
  return -(0.5 * std::log(4.0 * (ctx.T - s)) + ctx.lambda - 0.5 * euler_gamma() - log_moment) / (2.0 * M_PI);
}

}  // namespace

TestFunction::TestFunction(Fn f, double decay_order, Smooth smooth, Grad grad)
    : f_(std::move(f)), smooth_(std::move(smooth)), grad_(std::move(grad)), decay_order_(decay_order) {
  if (!f_) throw DomainError("test function needs a callable");
}

TestFunction TestFunction::zero() { return constant(0.0); }

TestFunction TestFunction::constant(double c) {
  return TestFunction([c](Point2, double) { return c; }, 0.0, [c](double, Point2, double) { return c; },
                      [](Point2, double) { return Point2{}; });
}

TestFunction TestFunction::separable(const InitialData& h, std::function<double(double)> time_factor) {
  if (!time_factor) time_factor = [](double) { return 1.0; };
  Fn f = [h, time_factor](Point2 x, double s) { return h(x) * time_factor(s); };
  Smooth sm = [h, time_factor](double v, Point2 x, double s) { return h.heat_flow(v)(x) * time_factor(s); };
  Grad grad;
  if (h.kind() == InitialData::Kind::mixture) {
    grad = [h, time_factor](Point2 x, double s) {
      Point2 g{};
      for (const auto& b : h.bumps()) {
        const double e = b.weight * std::exp(-norm2(x - b.center) / (2.0 * b.variance)) / b.variance;
        g = g + (-e) * (x - b.center);
      }
      return time_factor(s) * g;
    };
  } else if (h.kind() == InitialData::Kind::constant) {
    grad = [](Point2, double) { return Point2{}; };
  }
  return TestFunction(std::move(f), h.decay_order(), std::move(sm), std::move(grad));
}

TestFunction TestFunction::combination(double a, const TestFunction& f, double b, const TestFunction& g) {
  Fn fn = [=](Point2 x, double s) { return a * f(x, s) + b * g(x, s); };
  Smooth sm = [=](double v, Point2 x, double s) { return a * f.smoothed(v, x, s) + b * g.smoothed(v, x, s); };
  Grad gr = [=](Point2 x, double s) { return a * f.gradient(x, s) + b * g.gradient(x, s); };
  return TestFunction(std::move(fn), std::min(f.decay_order(), g.decay_order()), std::move(sm), std::move(gr));
}

double TestFunction::smoothed(double v, Point2 x, double s) const {
  if (v <= 0.0) return f_(x, s);
  if (smooth_) return smooth_(v, x, s);
  return gaussian_smooth([&](Point2 z) { return f_(z, s); }, v, x, kHermiteOrder);
}

Point2 TestFunction::gradient(Point2 x, double s) const {
  if (grad_) return grad_(x, s);
  const double h = 1e-5 * (1.0 + norm(x));
  return {(f_({x.x + h, x.y}, s) - f_({x.x - h, x.y}, s)) / (2.0 * h),
          (f_({x.x, x.y + h}, s) - f_({x.x, x.y - h}, s)) / (2.0 * h)};
}

OperatorContext make_context(double T, double lambda, std::shared_ptr<const PhiKernel> phi) {
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  OperatorContext ctx;
  ctx.T = T;
  ctx.lambda = lambda;
  ctx.phi = std::move(phi);
  ctx.kernel = std::make_shared<const SBetaKernel>(beta_of(*ctx.phi, lambda));
  return ctx;
}

double increment_integral(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s) {
  check_time(ctx, s);
  const double u = ctx.T - s;
  const double base = f(x, s);
  // P_t(x')^2 = P_{t/2}(x') / (4 pi t); the bracket is O(t), so the integrand is bounded.
  auto integrand = [&](double t) { return (f.smoothed(0.5 * t, x, s + t) - base) / (4.0 * M_PI * t); };
  return quad_1d(integrand, 0.0, u, ctx.quad, Endpoint::both);
}

double L_op(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s) {
  check_time(ctx, s);
  return log_coefficient(ctx, s, ctx.phi->log_moment()) * f(x, s) - increment_integral(ctx, f, x, s);
}

double L0_op(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s) {
  check_time(ctx, s);
  return log_coefficient(ctx, s, ctx.phi->single_log_moment()) * f(x, s) - increment_integral(ctx, f, x, s);
}

double L1_ring(const OperatorContext& ctx, double eps, const TestFunction& f, Point2 y, Point2 x, double s) {
  check_time(ctx, s);
  const double coupling = coupling_constant(eps, ctx.lambda);
  const Point2 d = eps * y;
  const double d2 = norm2(d);
  if (!(d2 > 0.0)) throw DomainError("L1_ring is singular at y = 0");
  const Point2 mid = x + 0.5 * d;
  // Chapman-Kolmogorov: P_t(x+d, z) P_t(z, x) = P_{2t}(d) P_{t/2}(z - mid).
  // In w = log t the kernel P_{2t}(d) dt becomes exp(-|d|^2/4t) dw / (4 pi).
  auto integrand = [&](double w) {
    const double t = std::exp(w);
    return std::exp(-d2 / (4.0 * t)) * f.smoothed(0.5 * t, mid, s + t);
  };
  const double w_hi = std::log(ctx.T - s);
  const double w_lo = std::log(d2 / (4.0 * 720.0));
  if (w_lo >= w_hi) return 0.0;
  const double w_knee = std::clamp(std::log(d2 / 4.0), w_lo, w_hi);
  const double total = quad_1d(integrand, w_lo, w_knee, ctx.quad) + quad_1d(integrand, w_knee, w_hi, ctx.quad);
  return coupling * total / (4.0 * M_PI);
}

double expansion_residual(const OperatorContext& ctx, double eps, const TestFunction& f, Point2 y, Point2 x,
                          double s) {
  check_time(ctx, s);
  const double r = norm(y);
  if (!(r > 0.0)) throw DomainError("expansion residual needs y != 0");
  const double L = std::log(1.0 / eps);
  const double fx = f(x, s);
  const double first_order =
      (0.5 * std::log(4.0 * (ctx.T - s)) + ctx.lambda - 0.5 * euler_gamma() - std::log(r)) * fx / L;
  const double expansion = fx + first_order + 2.0 * M_PI / L * increment_integral(ctx, f, x, s);
  return L1_ring(ctx, eps, f, y, x, s) - expansion;
}

double L3_0(const OperatorContext& ctx, const InitialData& x0, const TestFunction& f, Point2 y, double s) {
  check_time(ctx, s);
  auto integrand = [&](double t) {
    const InitialData flowed = x0.heat_flow(t);
    return gaussian_smooth([&](Point2 z) { return f(z, t) * flowed(z); }, t - s, y, kHermiteOrder);
  };
  return quad_1d(integrand, s, ctx.T, ctx.quad);
}

double L4_0(const OperatorContext& ctx, const TestFunction& f, Point2 y, Point2 yp, double s, double sp) {
  check_time(ctx, sp);
  if (sp < s) throw DomainError("L4_0 needs s <= s'");
  if (s == sp && norm2(y - yp) == 0.0) throw DomainError("L4_0 diverges at coincident space-time points");
  // Product of two Gaussians in x: P_a(x - y') P_b(x - y) = P_{a+b}(y - y') P_{ab/(a+b)}(x - m).
  auto integrand = [&](double t) {
    const double a = t - sp, b = t - s;
    if (a + b <= 0.0) return 0.0;
    const Point2 m = (b / (a + b)) * yp + (a / (a + b)) * y;
    return heat_density(a + b, norm2(y - yp)) * f.smoothed(a * b / (a + b), m, t);
  };
  return quad_1d(integrand, sp, ctx.T, ctx.quad, Endpoint::left);
}

TestFunction solve_qv(const OperatorContext& ctx, const InitialData& g, double S, double T) {
  if (!(T > 0.0) || T > S) throw DomainError("solve_qv needs 0 < T <= S");
  const InitialData data = g.heat_flow(S - T);
  const auto kernel = ctx.kernel;
  TestFunction::Fn f = [kernel, data, T](Point2 x, double s) {
    return s >= T ? 0.0 : m_g(*kernel, data, x, T - s);
  };
  TestFunction::Smooth sm = [kernel, data, T](double v, Point2 x, double s) {
    return s >= T ? 0.0 : m_g_smoothed(*kernel, data, v, x, T - s);
  };
  return TestFunction(std::move(f), g.decay_order(), std::move(sm));
}

double spdelta_unit(const PhiKernel& phi, double eta, double T) {
  if (!(eta > 0.0 && eta < 0.5)) throw DomainError("eta must lie in (0, 1/2)");
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  // [P_t Phi_eta]^2 integrates to P_{2t} of the difference of two mollifier
  // samples, whose law is the self-correlation; the t-integral is E1 in closed form.
  const double value = quad_1d(
      [&](double r) {
        return 2.0 * M_PI * r * phi.radial(r) * exp_integral_e1(eta * eta * r * r / (4.0 * T)) / (4.0 * M_PI);
      },
      0.0, phi.support_radius(), {1e-14, 1e-11, 400}, Endpoint::left);
  return 2.0 * M_PI / std::log(1.0 / eta) * value;
}

double spdelta(const OperatorContext& ctx, const MollifierSpec& mollifier, double eta, const TestFunction& psi,
               double T, Point2 x0) {
  if (!(eta > 0.0 && eta < 0.5)) throw DomainError("eta must lie in (0, 1/2)");
  const PhiKernel self = build_phi(mollifier);
  const double L = std::log(1.0 / eta);
  const QuadSpec qs{1e-12, 1e-8, 400};
  auto smoothed_psi = [&](double t, Point2 z) { return psi.smoothed(0.5 * t, z, t); };
  // Time integral of P_{2t}(d) h(t), in w = log t.
  auto time_integral = [&](double d2, const std::function<double(double)>& h) {
    const double w_hi = std::log(T);
    const double w_lo = d2 > 0.0 ? std::max(std::log(d2 / (4.0 * 720.0)), w_hi - 80.0) : w_hi - 80.0;
    auto g = [&](double w) {
      const double t = std::exp(w);
      return std::exp(-d2 / (4.0 * t)) * h(t) / (4.0 * M_PI);
    };
    return quad_1d(g, w_lo, w_hi, qs);
  };
  // Main part: Psi smoothed at x0 itself, which only sees the pair distance.
  const double main = quad_1d(
      [&](double r) {
        if (r <= 0.0) return 0.0;
        return 2.0 * M_PI * r * self.radial(r) *
               time_integral(eta * eta * r * r, [&](double t) { return smoothed_psi(t, x0); });
      },
      0.0, self.support_radius(), qs, Endpoint::left);
  // Correction from the pair's midpoint offset, O(eta): a fixed polar product rule.
  const FixedRule& gl = gauss_legendre_unit(10);
  const int n_angle = 12;
  const double M = mollifier.support_radius;
  std::vector<Point2> nodes_a, nodes_b;
  std::vector<double> weights;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    const double r = M * gl.nodes[i];
    const double w = M * gl.weights[i] * 2.0 * M_PI * r * mollifier.rho(r) / n_angle;
    for (int k = 0; k < n_angle; ++k) {
      const double th = 2.0 * M_PI * k / n_angle;
      const double th_b = th + M_PI / n_angle;  // offset so no pair coincides
      nodes_a.push_back({r * std::cos(th), r * std::sin(th)});
      nodes_b.push_back({r * std::cos(th_b), r * std::sin(th_b)});
      weights.push_back(w);
    }
  }
  double correction = 0.0;
  for (std::size_t i = 0; i < nodes_a.size(); ++i) {
    for (std::size_t j = 0; j < nodes_b.size(); ++j) {
      const Point2 diff = eta * (nodes_a[i] - nodes_b[j]);
      const Point2 mid = x0 - (0.5 * eta) * (nodes_a[i] + nodes_b[j]);
      correction += weights[i] * weights[j] * time_integral(norm2(diff), [&](double t) {
        return smoothed_psi(t, mid) - smoothed_psi(t, x0);
      });
    }
  }
  (void)ctx;
  return 2.0 * M_PI / L * (main + correction);
}

}  // namespace critshe
