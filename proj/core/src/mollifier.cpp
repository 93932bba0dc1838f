#include "critshe/mollifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

namespace critshe {

namespace {

double radial_mass_of(const std::function<double(double)>& rho, double R) {
  return quad_1d([&](double r) { return 2.0 * M_PI * r * rho(r); }, 0.0, R, {1e-14, 1e-12, 1000});
}

// phi(r) = int rho(|y'|) rho(|y' - (r,0)|) dy' in polar coordinates about the origin.
double self_correlation(const MollifierSpec& spec, double r) {
  const double M = spec.support_radius;
  const QuadSpec inner{1e-14, 1e-11, 400};
  auto angular = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double rs = spec.rho(s);
    if (rs == 0.0) return 0.0;
    auto f = [&](double th) {
      const double d2 = s * s + r * r - 2.0 * s * r * std::cos(th);
      const double d = std::sqrt(std::max(0.0, d2));
      return d > M ? 0.0 : spec.rho(d);
    };
    // Restrict to the arc where the shifted point stays inside the support.
    double th_max = M_PI;
    if (r > 0.0) {
      const double c = (s * s + r * r - M * M) / (2.0 * s * r);
      if (c >= 1.0) return 0.0;
      if (c > -1.0) th_max = std::acos(c);
    }
    return 2.0 * rs * s * quad_1d(f, 0.0, th_max, inner);
  };
  const double lo = std::max(0.0, r - M);
  return quad_1d(angular, lo, M, {1e-13, 1e-10, 400});
}

}  // namespace

void MollifierSpec::validate() const {
  if (!rho) throw DomainError("mollifier has no density");
  if (!(support_radius > 0.0)) throw DomainError("support radius must be positive");
  if (grid_resolution < 64) throw DomainError("grid resolution too coarse");
  const double mass = radial_mass_of(rho, support_radius);
  if (std::fabs(mass - 1.0) > 1e-8) {
    std::ostringstream os;
    os << "mollifier '" << name << "' integrates to " << mass << ", not 1";
    throw DomainError(os.str());
  }
}

MollifierSpec reference_bump() {
  MollifierSpec s;
  s.name = "bump";
  s.rho = [](double r) {
    if (r >= 1.0) return 0.0;
    const double u = 1.0 - r * r;
    return (4.0 / M_PI) * u * u * u;
  };
  s.support_radius = 1.0;
  return s;
}

MollifierSpec uniform_disk(double radius) {
  MollifierSpec s;
  s.name = "disk";
  const double h = 1.0 / (M_PI * radius * radius);
  s.rho = [=](double r) { return r < radius ? h : 0.0; };
  s.support_radius = radius;
  return s;
}

MollifierSpec tabulated_profile(const std::vector<double>& radii, const std::vector<double>& values) {
  if (radii.size() != values.size() || radii.size() < 2) throw DomainError("bad radial profile");
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (!(radii[i] > radii[i - 1])) throw DomainError("profile radii must increase");
  }
  for (double v : values) {
    if (v < 0.0) throw DomainError("profile values must be nonnegative");
  }
  MollifierSpec s;
  s.name = "tabulated";
  s.support_radius = radii.back();
  s.rho = [radii, values](double r) {
    if (r >= radii.back()) return 0.0;
    if (r <= radii.front()) return values.front();
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - radii.begin());
    const double w = (r - radii[i - 1]) / (radii[i] - radii[i - 1]);
    return (1.0 - w) * values[i - 1] + w * values[i];
  };
  return s;
}

MollifierSpec load_profile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open mollifier profile " + path);
  std::vector<double> r, v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double a, b;
    if (ls >> a >> b) {
      r.push_back(a);
      v.push_back(b);
    }  // header rows fail to parse and are skipped
  }
  return tabulated_profile(r, v);
}

MollifierSpec mollifier_by_name(const std::string& name) {
  if (name == "bump" || name == "reference") return reference_bump();
  if (name == "disk") return uniform_disk(1.0);
  if (name.rfind("csv:", 0) == 0) return load_profile_csv(name.substr(4));
  throw DomainError("unknown mollifier '" + name + "'");
}

double reference_bump_fourier(double k) {
  k = std::fabs(k);
  if (k < 1e-3) {
    // Taylor series of 384 J_4(k)/k^4 = 1 - k^2/10 + k^4/240 - ...
    const double k2 = k * k;
    return 1.0 - k2 / 10.0 + k2 * k2 / 240.0;
  }
  return 384.0 * std::cyl_bessel_j(4.0, k) / (k * k * k * k);
}

RadialTable::RadialTable(double r_max, std::vector<double> values)
    : r_max_(r_max), values_(std::move(values)) {
  if (values_.size() < 4) throw DomainError("radial table needs at least four samples");
  h_ = r_max_ / static_cast<double>(values_.size() - 1);
}

double RadialTable::operator()(double r) const {
  if (r < 0.0) r = -r;
  if (r >= r_max_) return values_.back();
  const double pos = r / h_;
  const std::size_t n = values_.size();
  std::size_t i = static_cast<std::size_t>(pos);
  if (i > n - 2) i = n - 2;
  const double t = pos - static_cast<double>(i);
  // Radial tables are even in r, so the sample left of zero mirrors index 1.
  const double p0 = i == 0 ? values_[1] : values_[i - 1];
  const double p1 = values_[i], p2 = values_[i + 1];
  const double p3 = i + 2 < n ? values_[i + 2] : 2.0 * p2 - p1;
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

double PhiKernel::radial_mass(double r) const {
  r = std::min(r, support_radius_);
  if (r <= 0.0) return 0.0;
  return quad_1d([&](double s) { return 2.0 * M_PI * s * radial(s); }, 0.0, r, {1e-13, 1e-10, 400});
}

PhiKernel build_phi(const MollifierSpec& spec) {
  spec.validate();
  PhiKernel k;
  k.spec_ = spec;
  k.support_radius_ = 2.0 * spec.support_radius;
  const int n = spec.grid_resolution;
  std::vector<double> values(static_cast<std::size_t>(n));
  const double h = k.support_radius_ / (n - 1);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    values[i] = i + 1 == static_cast<std::size_t>(n) ? 0.0 : self_correlation(spec, h * static_cast<double>(i));
  });
  k.table_ = RadialTable(k.support_radius_, std::move(values));

  const double R = k.support_radius_;
  const QuadSpec qs{1e-13, 1e-10, 400};
  auto phi_r = [&](double r) { return k.radial(r); };
  k.single_log_moment_ =
      quad_1d([&](double r) { return 2.0 * M_PI * r * std::log(r) * phi_r(r); }, 0.0, R, qs,
              Endpoint::left);
  // Newton's theorem in the plane: the log potential of a radial density is
  // log r times the enclosed mass plus the outer shells' own log radius.
  auto potential = [&](double r) {
    if (r <= 0.0) return k.single_log_moment_;
    const double inner =
        quad_1d([&](double s) { return 2.0 * M_PI * s * phi_r(s); }, 0.0, std::min(r, R), qs);
    const double outer =
        r >= R ? 0.0
               : quad_1d([&](double s) { return 2.0 * M_PI * s * std::log(s) * phi_r(s); }, r, R, qs);
    return std::log(r) * inner + outer;
  };
  k.log_moment_ = quad_1d([&](double r) { return 2.0 * M_PI * r * phi_r(r) * potential(r); }, 0.0,
                          R, qs, Endpoint::left);
  return k;
}

std::shared_ptr<const PhiKernel> reference_phi() {
  static std::once_flag once;
  static std::shared_ptr<const PhiKernel> kernel;
  std::call_once(once, [] { kernel = std::make_shared<const PhiKernel>(build_phi(reference_bump())); });
  return kernel;
}

double phi_eps(const PhiKernel& kernel, double eps, Point2 y) {
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("eps must lie in (0,1]");
  return kernel.radial(norm(y) / eps) / (eps * eps);
}

double varphi_eps(const PhiKernel& kernel, double eps, Point2 x) {
  return phi_eps(kernel, eps, std::sqrt(2.0) * x);
}

double coupling_constant(double eps, double lambda) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("coupling needs eps in (0,1)");
  const double L = std::log(1.0 / eps);
  return 2.0 * M_PI / L + 2.0 * M_PI * lambda / (L * L);
}

double eps_bar(double lambda) {
  // 1 + lambda/log(1/eps) > 0  <=>  eps < exp(lambda) when lambda < 0.
  return lambda >= 0.0 ? 1.0 : std::exp(lambda);
}

double beta_of(const PhiKernel& kernel, double lambda) {
  return std::exp(2.0 * (-kernel.log_moment() + std::log(2.0) + lambda - euler_gamma()));
}

CriticalParams make_params(const PhiKernel& kernel, double eps, double lambda) {
  if (!(eps < eps_bar(lambda))) throw DomainError("eps lies outside the range where the coupling is positive");
  CriticalParams p;
  p.epsilon = eps;
  p.lambda = lambda;
  p.coupling = coupling_constant(eps, lambda);
  p.beta = beta_of(kernel, lambda);
  return p;
}

}  // namespace critshe
