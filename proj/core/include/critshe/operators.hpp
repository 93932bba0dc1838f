#pragma once

#include <functional>
#include <memory>

#include "critshe/dbg.hpp"
#include "critshe/mollifier.hpp"

namespace critshe {

// Space-time test function f(x, s) together with its heat smoothing
// [P_v f(., s)](x), which every operator below needs.
class TestFunction {
 public:
  using Fn = std::function<double(Point2, double)>;
  using Smooth = std::function<double(double, Point2, double)>;
  using Grad = std::function<Point2(Point2, double)>;

  TestFunction() = default;
  // Generic f; smoothing falls back to Gauss-Hermite when none is supplied.
  TestFunction(Fn f, double decay_order, Smooth smooth = {}, Grad grad = {});

  static TestFunction zero();
  static TestFunction constant(double c);
  // f(x, s) = h(x) * time_factor(s) with closed-form smoothing for mixtures.
  static TestFunction separable(const InitialData& h, std::function<double(double)> time_factor = {});
  static TestFunction combination(double a, const TestFunction& f, double b, const TestFunction& g);

  double operator()(Point2 x, double s) const { return f_(x, s); }
  double smoothed(double v, Point2 x, double s) const;
  Point2 gradient(Point2 x, double s) const;
  double decay_order() const { return decay_order_; }
  bool has_gradient() const { return static_cast<bool>(grad_); }

 private:
  Fn f_;
  Smooth smooth_;
  Grad grad_;
  double decay_order_ = 0.0;
};

struct OperatorContext {
  double T = 1.0;
  double lambda = 0.0;
  std::shared_ptr<const PhiKernel> phi;
  QuadSpec quad{1e-13, 1e-10, 400};

  std::shared_ptr<const SBetaKernel> kernel;  // s_beta at beta(phi, lambda)

  double beta() const { return kernel->beta(); }
  const SBetaKernel& s_beta() const { return *kernel; }
};
OperatorContext make_context(double T, double lambda, std::shared_ptr<const PhiKernel> phi = reference_phi());

// int_0^{T-s} ([P_{t/2} f(., s+t)](x) - f(x, s)) / (4 pi t) dt, i.e. the
// increment integral against P_t(x')^2 dx' dt.
double increment_integral(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s);

double L_op(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s);
double L0_op(const OperatorContext& ctx, const TestFunction& f, Point2 x, double s);
double L1_ring(const OperatorContext& ctx, double eps, const TestFunction& f, Point2 y, Point2 x, double s);
double expansion_residual(const OperatorContext& ctx, double eps, const TestFunction& f, Point2 y, Point2 x,
                          double s);
double L3_0(const OperatorContext& ctx, const InitialData& x0, const TestFunction& f, Point2 y, double s);
double L4_0(const OperatorContext& ctx, const TestFunction& f, Point2 y, Point2 yp, double s, double sp);

// f(x, s) = m_{P_{S-T} g}(x, T - s), the function whose image under the
// operator is the squared heat flow (P_{S-s} g)^2.
TestFunction solve_qv(const OperatorContext& ctx, const InitialData& g, double S, double T);

// (2 pi / log(1/eta)) int_0^T int [P_t Phi_eta(y)]^2 Psi(x0 - y, t) dy dt.
double spdelta(const OperatorContext& ctx, const MollifierSpec& mollifier, double eta, const TestFunction& psi,
               double T, Point2 x0);
// Psi = 1 case through the self-correlation of the mollifier (one radial integral).
double spdelta_unit(const PhiKernel& self_correlation, double eta, double T);

}  // namespace critshe
