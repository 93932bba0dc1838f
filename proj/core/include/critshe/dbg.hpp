#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "critshe/heatkernel.hpp"

namespace critshe {

// nu(x) = int_0^inf x^u / Gamma(u) du, so that s_beta(tau) = (4 pi / tau) nu(beta tau).
double nu_function(double x);
double log_nu(double x);
// Truncation of the u-integral: the integrand x^u/Gamma(u) peaks near u = x
// with width about sqrt(x), so the window extends ten widths past the peak.
double u_truncation(double x);

class SBetaKernel {
 public:
  explicit SBetaKernel(double beta);

  double beta() const { return beta_; }
  // Table-backed evaluation (cubic interpolation of log nu in log(beta tau)).
  double operator()(double tau) const;
  // Direct u-quadrature, independent of the table.
  double exact(double tau) const;
  // int_0^T s(tau) dtau = 4 pi int (beta T)^u / Gamma(u+1) du.
  double integral(double T) const;
  // int_0^tau0 tau^n s(tau) dtau.
  double moment(int n, double tau0) const;
  // int_0^inf e^{-q tau} s(tau) dtau for q > beta.
  double laplace(double q) const;
  // int_0^T s(tau) H(tau) dtau for H bounded near 0, as H(0) S(T) plus the
  // regular remainder.
  double integrate_against(const std::function<double(double)>& H, double T,
                           const QuadSpec& spec = {1e-13, 1e-9, 400}) const;

 private:
  double beta_;
  double w_min_, w_max_, h_;
  std::vector<double> log_nu_;
};

struct GaussianBump {
  double weight = 1.0;  // peak height
  Point2 center{};
  double variance = 1.0;
};

// Nonnegative initial profile. Constants and Gaussian mixtures flow under the
// heat semigroup in closed form; arbitrary callables fall back to
// Gauss-Hermite smoothing.
class InitialData {
 public:
  enum class Kind { constant, mixture, callable };

  static InitialData constant(double c);
  static InitialData mixture(std::vector<GaussianBump> bumps);
  static InitialData callable(std::function<double(Point2)> g, double decay_order,
                              int hermite_order = 20);

  Kind kind() const { return kind_; }
  double operator()(Point2 x) const;
  // Polynomial decay order; Gaussian mixtures report a large sentinel and constants 0.
  double decay_order() const { return decay_order_; }
  const std::vector<GaussianBump>& bumps() const { return bumps_; }
  double constant_value() const { return constant_; }

  InitialData heat_flow(double t) const;
  InitialData squared() const;
  InitialData shifted(Point2 h) const;
  InitialData scaled(double c) const;

 private:
  Kind kind_ = Kind::constant;
  double constant_ = 0.0;
  std::vector<GaussianBump> bumps_;
  std::function<double(Point2)> fn_;
  double decay_order_ = 0.0;
  int hermite_order_ = 20;
};

// E[h(x + sqrt(t) Z)] for a standard planar Gaussian Z, by tensor Gauss-Hermite.
double gaussian_smooth(const std::function<double(Point2)>& h, double t, Point2 x, int order);

// Delta-Bose-gas two-body kernel: free part P_{2t}(x - y) plus the correction
// int_{a + tau + b = t} P_{2a}(x) s(tau) P_{2b}(y).
double p_beta_kernel(const SBetaKernel& s, double t, Point2 x, Point2 y);
double p_beta_correction(const SBetaKernel& s, double t, Point2 x, Point2 y);

// int_0^t s(tau) [P_{tau/2}((P_{t - tau} g)^2)](x) dtau.
double m_g(const SBetaKernel& s, const InitialData& g, Point2 x, double t);
// [P_v m_g(., t)](x); the extra smoothing simply adds to the inner heat time.
double m_g_smoothed(const SBetaKernel& s, const InitialData& g, double v, Point2 x, double t);
double K1(const SBetaKernel& s, const InitialData& x0, Point2 x, double t);

struct Atom {
  Point2 position{};
  double mass = 0.0;
};
double K2(const SBetaKernel& s, Point2 x, double t, Point2 xp, double tp,
          const std::vector<Atom>& measure);

}  // namespace critshe
