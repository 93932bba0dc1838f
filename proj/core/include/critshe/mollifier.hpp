#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "critshe/heatkernel.hpp"

namespace critshe {

// Radial probability density rho(|x|) on the plane, vanishing beyond the
// support radius.
struct MollifierSpec {
  std::string name;
  std::function<double(double)> rho;  // profile as a function of the radius
  double support_radius = 1.0;
  int grid_resolution = 1601;  // radial samples used for the self-correlation table

  void validate() const;  // throws DomainError unless rho integrates to one
};

MollifierSpec reference_bump();                    // (4/pi)(1 - r^2)^3 on r <= 1
MollifierSpec uniform_disk(double radius = 1.0);
// Piecewise-linear profile from (radius, value) rows; normalisation is checked.
MollifierSpec tabulated_profile(const std::vector<double>& radii, const std::vector<double>& values);
MollifierSpec load_profile_csv(const std::string& path);
MollifierSpec mollifier_by_name(const std::string& name);

// Hankel transform of the reference bump, int rho(x) e^{i k.x} dx = 384 J_4(k)/k^4.
double reference_bump_fourier(double k);

// Uniform radial table with cubic (Catmull-Rom) interpolation.
class RadialTable {
 public:
  RadialTable() = default;
  RadialTable(double r_max, std::vector<double> values);
  double operator()(double r) const;
  double r_max() const { return r_max_; }
  const std::vector<double>& values() const { return values_; }

 private:
  double r_max_ = 0.0;
  double h_ = 0.0;
  std::vector<double> values_;
};

// phi = rho * reversed rho, its support, and the log-moments entering beta.
class PhiKernel {
 public:
  double operator()(Point2 y) const { return radial(norm(y)); }
  double radial(double r) const { return r >= support_radius_ ? 0.0 : table_(r); }
  double support_radius() const { return support_radius_; }
  // int int phi(y) phi(y') log|y - y'| dy dy'
  double log_moment() const { return log_moment_; }
  // int phi(y) log|y| dy
  double single_log_moment() const { return single_log_moment_; }
  // int_0^r 2 pi s phi(s) ds
  double radial_mass(double r) const;
  const MollifierSpec& spec() const { return spec_; }

 private:
  friend PhiKernel build_phi(const MollifierSpec& spec);
  MollifierSpec spec_;
  RadialTable table_;
  double support_radius_ = 0.0;
  double log_moment_ = 0.0;
  double single_log_moment_ = 0.0;
};

PhiKernel build_phi(const MollifierSpec& spec);
// Built once per process and shared; immutable afterwards.
std::shared_ptr<const PhiKernel> reference_phi();

double phi_eps(const PhiKernel& kernel, double eps, Point2 y);
double varphi_eps(const PhiKernel& kernel, double eps, Point2 x);

double coupling_constant(double eps, double lambda);
// Largest admissible eps for a given lambda: the coupling is positive for eps
// strictly below this value.
double eps_bar(double lambda);
double beta_of(const PhiKernel& kernel, double lambda);

struct CriticalParams {
  double epsilon = 0.0;
  double lambda = 0.0;
  double coupling = 0.0;
  double beta = 0.0;
};
CriticalParams make_params(const PhiKernel& kernel, double eps, double lambda);

}  // namespace critshe
