#include "critshe/dbg.hpp"

#include <gsl/gsl_sf_bessel.h>

#include <cmath>
#include <limits>

namespace critshe {

namespace {

// log of int_0^inf exp(u log x + lw(u)) du, where exp(lw(u)) behaves like
// 1/Gamma(u + shift) times a bounded factor. For x < 1/e the substitution
// v = u log(1/x) turns the spike at u = 0 into the smooth weight e^{-v};
// otherwise the u-integrand is a bump around u ~ x and is integrated over a
// window around it, scaled by its peak so nothing overflows.
double log_gamma_power_integral(double x, const std::function<double(double)>& lw) {
  const QuadSpec spec{1e-300, 1e-13, 1000};
  if (!(x > 0.0)) throw DomainError("power base must be positive");
  if (x < std::exp(-1.0)) {
    const double ell = -std::log(x);
    auto f = [&](double v) { return v <= 0.0 ? 0.0 : std::exp(-v + lw(v / ell)); };
    return std::log(quad_1d(f, 0.0, 64.0, spec) / ell);
  }
  const double lx = std::log(x);
  const double hi = u_truncation(x);
  const double lo = std::max(0.0, x - 10.0 * std::sqrt(x) - 10.0);
  const double peak = std::clamp(x, std::max(lo, 1e-3), hi);
  const double scale = peak * lx + lw(peak);
  auto f = [&](double u) { return u <= 0.0 ? 0.0 : std::exp(u * lx + lw(u) - scale); };
  double integral = 0.0;
  if (hi - lo < 60.0) {
    integral = quad_1d(f, lo, hi, spec);
  } else {
    integral = quad_1d(f, lo, peak, spec) + quad_1d(f, peak, hi, spec);
  }
  return scale + std::log(integral);
}

double log_reciprocal_gamma(double u) { return -std::lgamma(u); }

constexpr double kTableWMin = -60.0;
constexpr double kTableWMax = 6.5;  // nu(x) ~ e^x overflows beyond x ~ 700
constexpr double kTableStep = 0.0025;

}  // namespace

double u_truncation(double x) { return std::max(50.0, x + 10.0 * std::sqrt(std::max(x, 0.0)) + 10.0); }

double nu_function(double x) { return std::exp(log_nu(x)); }

double log_nu(double x) { return log_gamma_power_integral(x, log_reciprocal_gamma); }

SBetaKernel::SBetaKernel(double beta)
    : beta_(beta), w_min_(kTableWMin), w_max_(kTableWMax), h_(kTableStep) {
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  const auto n = static_cast<std::size_t>(std::lround((w_max_ - w_min_) / h_)) + 1;
  log_nu_.resize(n);
  // The table is beta independent (it is nu on a log grid); keep one copy.
  static const std::vector<double> shared = [n] {
    std::vector<double> v(n);
    parallel_for(n, [&](std::size_t i) {
      v[i] = log_nu(std::exp(kTableWMin + kTableStep * static_cast<double>(i)));
    });
    return v;
  }();
  log_nu_ = shared;
}

double SBetaKernel::exact(double tau) const {
  if (!(tau > 0.0)) throw DomainError("s_beta needs tau > 0");
  return 4.0 * M_PI / tau * std::exp(log_nu(beta_ * tau));
}

double SBetaKernel::operator()(double tau) const {
  if (!(tau > 0.0)) throw DomainError("s_beta needs tau > 0");
  const double w = std::log(beta_ * tau);
  if (w <= w_min_ || w >= w_max_) return exact(tau);
  const double pos = (w - w_min_) / h_;
  std::size_t i = static_cast<std::size_t>(pos);
  const std::size_t n = log_nu_.size();
  i = std::clamp<std::size_t>(i, 1, n - 3);
  const double t = pos - static_cast<double>(i);
  const double p0 = log_nu_[i - 1], p1 = log_nu_[i], p2 = log_nu_[i + 1], p3 = log_nu_[i + 2];
  // Four-point Lagrange interpolation on the uniform grid.
  const double value = p0 * (-t * (t - 1.0) * (t - 2.0) / 6.0) + p1 * ((t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0) +
                       p2 * (-(t + 1.0) * t * (t - 2.0) / 2.0) + p3 * ((t + 1.0) * t * (t - 1.0) / 6.0);
  return 4.0 * M_PI / tau * std::exp(value);
}

double SBetaKernel::integral(double T) const {
  if (T <= 0.0) return 0.0;
  return 4.0 * M_PI * std::exp(log_gamma_power_integral(beta_ * T, [](double u) { return -std::lgamma(u + 1.0); }));
}

double SBetaKernel::moment(int n, double tau0) const {
  if (n < 0) throw DomainError("moment order must be nonnegative");
  if (n == 0) return integral(tau0);
  const double nn = n;
  return 4.0 * M_PI * std::pow(tau0, nn) *
         std::exp(log_gamma_power_integral(beta_ * tau0, [nn](double u) { return -std::lgamma(u) - std::log(u + nn); }));
}

double SBetaKernel::laplace(double q) const {
  if (!(q > beta_)) throw DomainError("Laplace transform of s_beta diverges for q <= beta");
  // Near the origin expand e^{-q tau} and use exact moments; the rest is a
  // regular exponentially decaying integral.
  const double tau0 = 0.5 / q;
  double head = 0.0, coeff = 1.0;
  for (int n = 0; n < 40; ++n) {
    const double term = coeff * moment(n, tau0);
    head += term;
    if (n > 2 && std::fabs(term) < 1e-17 * std::fabs(head)) break;
    coeff *= -q / (n + 1);
  }
  // s(tau) grows like e^{beta tau}/tau, so the tail decays at rate q - beta;
  // stop once the integrand has dropped by about e^{-70}.
  auto integrand = [&](double tau) {
    return std::exp(-q * tau + std::log(4.0 * M_PI / tau) + log_nu(beta_ * tau));
  };
  const double tau_end = tau0 + 70.0 / (q - beta_);
  double tail = 0.0;
  for (double a = tau0, width = tau0; a < tau_end; a += width, width *= 2.0) {
    tail += quad_1d(integrand, a, std::min(a + width, tau_end), {1e-300, 1e-12, 1000});
  }
  return head + tail;
}

double SBetaKernel::integrate_against(const std::function<double(double)>& H, double T,
                                      const QuadSpec& spec) const {
  if (T <= 0.0) return 0.0;
  const double h0 = H(0.0);
  const double regular = quad_1d([&](double tau) { return (*this)(tau) * (H(tau) - h0); }, 0.0, T, spec,
                                 Endpoint::left);
  return h0 * integral(T) + regular;
}

// ---------------------------------------------------------------------------

InitialData InitialData::constant(double c) {
  if (c < 0.0) throw DomainError("initial data must be nonnegative");
  InitialData d;
  d.kind_ = Kind::constant;
  d.constant_ = c;
  return d;
}

InitialData InitialData::mixture(std::vector<GaussianBump> bumps) {
  for (const auto& b : bumps) {
    if (!(b.variance > 0.0)) throw DomainError("bump variance must be positive");
  }
  InitialData d;
  d.kind_ = Kind::mixture;
  d.bumps_ = std::move(bumps);
  d.decay_order_ = std::numeric_limits<double>::infinity();
  return d;
}

InitialData InitialData::callable(std::function<double(Point2)> g, double decay_order, int hermite_order) {
  InitialData d;
  d.kind_ = Kind::callable;
  d.fn_ = std::move(g);
  d.decay_order_ = decay_order;
  d.hermite_order_ = hermite_order;
  return d;
}

double InitialData::operator()(Point2 x) const {
  switch (kind_) {
    case Kind::constant:
      return constant_;
    case Kind::mixture: {
      double s = 0.0;
      for (const auto& b : bumps_) s += b.weight * std::exp(-norm2(x - b.center) / (2.0 * b.variance));
      return s;
    }
    case Kind::callable:
      return fn_(x);
  }
  return 0.0;
}

InitialData InitialData::heat_flow(double t) const {
  if (t < 0.0) throw DomainError("heat flow time must be nonnegative");
  if (t == 0.0 || kind_ == Kind::constant) return *this;
  if (kind_ == Kind::mixture) {
    InitialData d = *this;
    for (auto& b : d.bumps_) {
      b.weight *= b.variance / (b.variance + t);
      b.variance += t;
    }
    return d;
  }
  InitialData d = *this;
  const auto fn = fn_;
  const int order = hermite_order_;
  d.fn_ = [fn, t, order](Point2 x) { return gaussian_smooth(fn, t, x, order); };
  return d;
}

InitialData InitialData::squared() const {
  if (kind_ == Kind::constant) return constant(constant_ * constant_);
  if (kind_ == Kind::mixture) {
    std::vector<GaussianBump> out;
    out.reserve(bumps_.size() * bumps_.size());
    for (const auto& a : bumps_) {
      for (const auto& b : bumps_) {
        const double s = a.variance + b.variance;
        GaussianBump c;
        c.variance = a.variance * b.variance / s;
        c.center = (b.variance / s) * a.center + (a.variance / s) * b.center;
        c.weight = a.weight * b.weight * std::exp(-norm2(a.center - b.center) / (2.0 * s));
        out.push_back(c);
      }
    }
    return mixture(std::move(out));
  }
  InitialData d = *this;
  const auto fn = fn_;
  d.fn_ = [fn](Point2 x) {
    const double v = fn(x);
    return v * v;
  };
  d.decay_order_ = 2.0 * decay_order_;
  return d;
}

InitialData InitialData::shifted(Point2 h) const {
  InitialData d = *this;
  if (kind_ == Kind::mixture) {
    for (auto& b : d.bumps_) b.center = b.center + h;
  } else if (kind_ == Kind::callable) {
    const auto fn = fn_;
    d.fn_ = [fn, h](Point2 x) { return fn(x - h); };
  }
  return d;
}

InitialData InitialData::scaled(double c) const {
  if (c < 0.0) throw DomainError("initial data must stay nonnegative");
  InitialData d = *this;
  d.constant_ *= c;
  for (auto& b : d.bumps_) b.weight *= c;
  if (kind_ == Kind::callable) {
    const auto fn = fn_;
    d.fn_ = [fn, c](Point2 x) { return c * fn(x); };
  }
  return d;
}

double gaussian_smooth(const std::function<double(Point2)>& h, double t, Point2 x, int order) {
  if (t <= 0.0) return h(x);
  const FixedRule& r = gauss_hermite_normal(order);
  const double sd = std::sqrt(t);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < r.nodes.size(); ++j) {
      row += r.weights[j] * h({x.x + sd * r.nodes[i], x.y + sd * r.nodes[j]});
    }
    s += r.weights[i] * row;
  }
  return s;
}

// ---------------------------------------------------------------------------

double p_beta_correction(const SBetaKernel& s, double t, Point2 x, Point2 y) {
  if (!(t > 0.0)) throw DomainError("p_beta needs t > 0");
  const double rx = norm2(x), ry = norm2(y);
  if (!(rx > 0.0) || !(ry > 0.0)) throw DomainError("the correction term is singular at the origin");
  // Time the pair spends travelling from x to the origin and from the origin to y:
  // int_0^r P_{2a}(x) P_{2(r-a)}(y) da. With a = r w / (1 + w) it becomes a
  // Macdonald integral, e^{-(|x|^2+|y|^2)/4r} K0(|x||y|/2r) / (8 pi^2 r).
  const double nx = std::sqrt(rx), ny = std::sqrt(ry);
  auto travel = [&](double r) {
    if (r <= 0.0) return 0.0;
    const double z = nx * ny / (2.0 * r);
    return std::exp(-(nx - ny) * (nx - ny) / (4.0 * r)) * gsl_sf_bessel_K0_scaled(z) / (8.0 * M_PI * M_PI * r);
  };
  return s.integrate_against([&](double tau) { return travel(t - tau); }, t);
}

double p_beta_kernel(const SBetaKernel& s, double t, Point2 x, Point2 y) {
  return heat_kernel(2.0 * t, x, y) + p_beta_correction(s, t, x, y);
}

double m_g(const SBetaKernel& s, const InitialData& g, Point2 x, double t) {
  return m_g_smoothed(s, g, 0.0, x, t);
}

double m_g_smoothed(const SBetaKernel& s, const InitialData& g, double v, Point2 x, double t) {
  if (!(t > 0.0)) throw DomainError("m_g needs t > 0");
  if (v < 0.0) throw DomainError("smoothing time must be nonnegative");
  if (g.kind() == InitialData::Kind::constant) {
    const double c = g.constant_value();
    return c * c * s.integral(t);
  }
  auto H = [&](double tau) { return g.heat_flow(t - tau).squared().heat_flow(v + tau / 2.0)(x); };
  return s.integrate_against(H, t);
}

double K1(const SBetaKernel& s, const InitialData& x0, Point2 x, double t) {
  // With tau = t - r the kernel is the second-moment density of the initial data.
  return m_g(s, x0, x, t);
}

double K2(const SBetaKernel& s, Point2 x, double t, Point2 xp, double tp, const std::vector<Atom>& measure) {
  if (!(tp < t)) throw DomainError("K2 needs s' < s");
  const double D = t - tp;
  double total = 0.0;
  for (const auto& atom : measure) {
    if (atom.mass == 0.0) continue;
    const double d2 = norm2(xp - atom.position);
    if (!(d2 > 0.0)) throw DomainError("K2 diverges when an atom sits at x'");
    const Point2 mid = 0.5 * (xp + atom.position);
    // After Chapman-Kolmogorov in y only the meeting-time integral remains.
    const double time_part = s.integrate_against([&](double tau) {
      return tau >= D ? 0.0 : heat_density(2.0 * (D - tau), d2);
    }, D);
    total += atom.mass * heat_density(D / 2.0, norm2(x - mid)) * time_part;
  }
  return total;
}

}  // namespace critshe
