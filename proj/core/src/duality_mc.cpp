#include "critshe/duality_mc.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <gsl/gsl_sf_bessel.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace critshe {

namespace {

// Work is cut into a fixed number of shards so that results do not depend on
// how many threads run them.
constexpr std::size_t kShards = 64;

template <class PathFn>
Estimate sharded_mean(long long n_paths, std::uint64_t seed, PathFn&& one_path) {
  std::vector<RunningStats> parts(kShards);
  parallel_for(kShards, [&](std::size_t s) {
    RngStream rng = rng_stream(seed, s);
    const long long count = n_paths / static_cast<long long>(kShards) +
                            (static_cast<long long>(s) < n_paths % static_cast<long long>(kShards) ? 1 : 0);
    for (long long p = 0; p < count; ++p) parts[s].add(one_path(rng));
  });
  RunningStats total;
  for (const auto& p : parts) total.merge(p);
  return total.estimate();
}

Point2 gaussian_step(RngStream& rng, double variance) {
  const double sd = std::sqrt(variance);
  const double a = rng.normal();
  const double b = rng.normal();
  return {sd * a, sd * b};
}

// Interaction seen by the relative motion W of a pair: varphi_eps(W) = phi_eps(sqrt2 W).
struct RelativeInteraction {
  const PhiKernel* phi;
  double eps;
  double reach;  // |W| beyond which the interaction vanishes

  RelativeInteraction(const PhiKernel& k, double e)
      : phi(&k), eps(e), reach(k.support_radius() * e / std::sqrt(2.0)) {}
  double operator()(Point2 w) const { return phi->radial(std::sqrt(2.0) * norm(w) / eps) / (eps * eps); }
  double clearance(Point2 w) const { return norm(w) - reach; }
};

// Radial equation u'' + u'/s + (g phi(s) - k2) u = -forcing phi(s) in the scaled
// radius s = sqrt2 |w| / eps, integrated by RK4 from the regular point s = 0.
struct RadialSolution {
  std::vector<double> s, u, du;
};

RadialSolution shoot_radial(const PhiKernel& phi, double g, double k2, double forcing, double u0, int steps) {
  const double R = phi.support_radius();
  const double s0 = 1e-6 * R;
  const double p0 = phi.radial(0.0), c0 = g * p0 - k2;
  std::array<double, 2> y{u0 - (forcing * p0 + c0 * u0) * s0 * s0 / 4.0, -(forcing * p0 + c0 * u0) * s0 / 2.0};
  auto rhs = [&](double s, const std::array<double, 2>& v) {
    const double p = phi.radial(s);
    return std::array<double, 2>{v[1], -v[1] / s - (g * p - k2) * v[0] - forcing * p};
  };
  RadialSolution out;
  const double h = (R - s0) / steps;
  double s = s0;
  for (int i = 0;; ++i) {
    out.s.push_back(s);
    out.u.push_back(y[0]);
    out.du.push_back(y[1]);
    if (i == steps) break;
    const auto k1 = rhs(s, y);
    const auto k2v = rhs(s + h / 2, {y[0] + h / 2 * k1[0], y[1] + h / 2 * k1[1]});
    const auto k3 = rhs(s + h / 2, {y[0] + h / 2 * k2v[0], y[1] + h / 2 * k2v[1]});
    const auto k4 = rhs(s + h, {y[0] + h * k3[0], y[1] + h * k3[1]});
    y[0] += h / 6.0 * (k1[0] + 2 * k2v[0] + 2 * k3[0] + k4[0]);
    y[1] += h / 6.0 * (k1[1] + 2 * k2v[1] + 2 * k3[1] + k4[1]);
    s += h;
  }
  return out;
}

// Logarithmic derivative of the decaying exterior solution K0(k s).
double exterior_log_slope(double k, double s) {
  return -k * gsl_sf_bessel_K1_scaled(k * s) / gsl_sf_bessel_K0_scaled(k * s);
}

// Drift grad log psi of the ground state, as a function of |w|.
class GroundStateDrift {
 public:
  GroundStateDrift(double coupling, double eps, const PhiKernel& phi) : eps_(eps), R_(phi.support_radius()) {
    energy_ = bound_state_energy(coupling, eps, phi);
    k_ = eps * std::sqrt(energy_);
    const int steps = 4000;
    const RadialSolution sol = shoot_radial(phi, coupling, k_ * k_, 0.0, 1.0, steps);
    std::vector<double> slope(sol.s.size());
    for (std::size_t i = 0; i < slope.size(); ++i) slope[i] = sol.du[i] / sol.u[i];
    slope[0] = 0.0;
    table_ = RadialTable(R_, std::move(slope));
    // Exterior slope on a uniform grid in log s out to k s = 60, where the
    // Bessel ratio is within 1e-2 of its limit and still evaluated directly beyond.
    log_lo_ = std::log(R_);
    log_hi_ = std::log(std::max(60.0 / k_, 2.0 * R_));
    std::vector<double> ext(4001);
    for (std::size_t i = 0; i < ext.size(); ++i) {
      const double ls = log_lo_ + (log_hi_ - log_lo_) * static_cast<double>(i) / (ext.size() - 1);
      ext[i] = exterior_log_slope(k_, std::exp(ls));
    }
    exterior_ = std::move(ext);
  }
  double energy() const { return energy_; }
  Point2 operator()(Point2 w) const {
    const double r = norm(w);
    if (r == 0.0) return {0.0, 0.0};
    const double s = std::sqrt(2.0) * r / eps_;
    const double ds = s < R_ ? table_(s) : exterior(s);
    return w * (std::sqrt(2.0) / eps_ * ds / r);
  }

 private:
  double exterior(double s) const {
    const double ls = std::log(s);
    if (ls >= log_hi_) return exterior_log_slope(k_, s);
    const double u = (ls - log_lo_) / (log_hi_ - log_lo_) * (exterior_.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(u), exterior_.size() - 2);
    const double f = u - i;
    return (1 - f) * exterior_[i] + f * exterior_[i + 1];
  }

  double eps_, R_, energy_ = 0.0, k_ = 0.0;
  double log_lo_ = 0.0, log_hi_ = 0.0;
  RadialTable table_;
  std::vector<double> exterior_;
};

// One relative motion with its running log weight: the exponent
// coupling int varphi_eps(W) by the trapezoid rule, plus, for guided walks,
// the log likelihood ratio of the plain Gaussian steps against the drifted ones.
class RelativeWalker {
 public:
  RelativeWalker(const RelativeInteraction& inter, double exp_coupling, double substep,
                 const GroundStateDrift* drift)
      : inter_(inter), coupling_(exp_coupling), substep_(substep), drift_(drift) {}

  // Steps are the substep near the interaction and grow as (distance to it)^2 / 40
  // away from it, where touching the support within a step has chance below e^{-20}.
  // visit(a, b, log_weight_a, log_weight_b) sees each step.
  struct End {
    Point2 w;
    double log_weight;
  };
  template <class Visit>
  End walk(Point2 w, double horizon, RngStream& rng, Visit&& visit) const {
    double t = 0.0, log_weight = 0.0;
    double rate = inter_(w);
    while (t < horizon) {
      const double d = inter_.clearance(w);
      double h = d > 0.0 ? std::max(substep_, d * d / 40.0) : substep_;
      h = std::min(h, horizon - t);
      const Point2 noise = gaussian_step(rng, h);
      double next_log = log_weight;
      if (drift_) {
        const Point2 b = (*drift_)(w);
        const Point2 move = b * h + noise;
        next_log += -(move.x * b.x + move.y * b.y) + 0.5 * norm2(b) * h;
        w = w + move;
      } else {
        w = w + noise;
      }
      const double next = inter_(w);
      next_log += coupling_ * 0.5 * h * (rate + next);
      visit(t, t + h, log_weight, next_log);
      log_weight = next_log;
      rate = next;
      t += h;
    }
    return {w, log_weight};
  }

 private:
  RelativeInteraction inter_;
  double coupling_, substep_;
  const GroundStateDrift* drift_;
};

std::unique_ptr<GroundStateDrift> make_drift(const PathConfig& cfg) {
  const double g = cfg.params.coupling * cfg.exponent_scale;
  if (!cfg.guided || !(g > 0.0)) return nullptr;
  return std::make_unique<GroundStateDrift>(g, cfg.params.epsilon, *cfg.phi);
}

// Draw x ~ phi as the difference of two independent rho-distributed points.
class PhiSampler {
 public:
  explicit PhiSampler(const MollifierSpec& spec) : spec_(&spec) {
    const double R = spec.support_radius;
    for (int k = 0; k <= 2000; ++k) peak_ = std::max(peak_, spec.rho(R * k / 2000.0));
    peak_ *= 1.05;
  }
  Point2 operator()(RngStream& rng) const { return draw_rho(rng) - draw_rho(rng); }

 private:
  Point2 draw_rho(RngStream& rng) const {
    const double R = spec_->support_radius;
    for (;;) {
      const double x = R * (2.0 * rng.uniform() - 1.0);
      const double y = R * (2.0 * rng.uniform() - 1.0);
      const double r = std::hypot(x, y);
      if (r >= R) continue;
      if (rng.uniform() * peak_ <= spec_->rho(r)) return {x, y};
    }
  }
  const MollifierSpec* spec_;
  double peak_ = 0.0;
};

// [P_h varphi_eps](w) for radial varphi_eps, by the Hankel form of the planar heat kernel.
double smoothed_interaction(const RelativeInteraction& inter, double h, double w) {
  const double reach = inter.reach;
  auto integrand = [&](double r) {
    const double v = inter(Point2{r, 0.0});
    if (v == 0.0) return 0.0;
    return r * v / h * std::exp(-(w - r) * (w - r) / (2.0 * h)) * gsl_sf_bessel_I0_scaled(w * r / h);
  };
  const double sd = std::sqrt(h);
  const double lo = std::max(0.0, w - 12.0 * sd), hi = std::min(reach, w + 12.0 * sd);
  if (lo >= hi) return 0.0;
  return quad_1d(integrand, lo, hi, QuadSpec{1e-14, 1e-10, 400});
}

}  // namespace

void PathConfig::validate() const {
  const double eps = params.epsilon;
  std::ostringstream os;
  if (n_paths < 100) {
    os << "n_paths >= 100 violated (got " << n_paths << ")";
    throw GateViolation(os.str());
  }
  if (!(substep > 0.0) || substep > eps * eps / 10.0 * (1.0 + 1e-12)) {
    os << "gate substep <= eps^2/10 violated: substep = " << substep << ", eps^2/10 = " << eps * eps / 10.0
       << "; reduce the substep";
    throw GateViolation(os.str());
  }
  if (!(t > 0.0)) throw GateViolation("horizon t > 0 violated");
  if (!phi) throw GateViolation("no self-correlation kernel supplied");
}

PathConfig make_path_config(double eps, double lambda, double t, long long n_paths, std::uint64_t seed,
                            std::shared_ptr<const PhiKernel> phi) {
  PathConfig c;
  c.params = make_params(*phi, eps, lambda);
  c.phi = std::move(phi);
  c.substep = eps * eps / 10.0;
  c.t = t;
  c.n_paths = n_paths;
  c.seed = seed;
  return c;
}

Estimate n_point_moment(const MomentRequest& req, const PathConfig& cfg) {
  cfg.validate();
  const std::size_t N = req.points.size();
  if (N < 1 || N > 4) throw DomainError("n_point_moment supports 1 to 4 points");
  if (!(req.t > 0.0)) throw DomainError("n_point_moment needs t > 0");
  const PhiKernel& phi = *cfg.phi;
  const double eps = cfg.params.epsilon;
  const double coupling = cfg.params.coupling * cfg.exponent_scale;
  const double reach = phi.support_radius() * eps;
  auto pair_rate = [&](const std::vector<Point2>& b) {
    double r = 0.0, clearance = 1e300;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) {
        const double d = norm(b[j] - b[i]);
        clearance = std::min(clearance, d - reach);
        r += phi.radial(d / eps) / (eps * eps);
      }
    }
    return std::make_pair(coupling * r, clearance);
  };
  return sharded_mean(cfg.n_paths, cfg.seed, [&](RngStream& rng) {
    std::vector<Point2> b = req.points;
    auto [rate, clearance] = pair_rate(b);
    double exponent = 0.0, t = 0.0;
    while (t < req.t) {
      // pair differences move with variance 2 per unit time, hence /80
      double h = (N > 1 && clearance > 0.0) ? std::max(cfg.substep, clearance * clearance / 80.0) : cfg.substep;
      if (N == 1) h = req.t;
      h = std::min(h, req.t - t);
      for (auto& p : b) p = p + gaussian_step(rng, h);
      auto [next, next_clear] = pair_rate(b);
      exponent += 0.5 * h * (rate + next);
      rate = next;
      clearance = next_clear;
      t += h;
    }
    double terminal = 1.0;
    for (const auto& p : b) terminal *= req.x0(p);
    return std::exp(exponent) * terminal;
  });
}

double pair_terminal_factor(const InitialData& x0, Point2 x1, Point2 x2, Point2 d, double t) {
  const double s = 0.5 * t;  // variance of Z per coordinate
  const Point2 a = x1 - d, b = x2 + d;
  switch (x0.kind()) {
    case InitialData::Kind::constant:
      return x0.constant_value() * x0.constant_value();
    case InitialData::Kind::mixture: {
      // Each product of two Gaussians in Z is again Gaussian; its expectation
      // under N(0, s I) is closed form.
      double total = 0.0;
      for (const auto& g1 : x0.bumps()) {
        for (const auto& g2 : x0.bumps()) {
          const Point2 m1 = g1.center - a, m2 = g2.center - b;
          const double v1 = g1.variance, v2 = g2.variance, vs = v1 + v2;
          const double vbar = v1 * v2 / vs;
          const Point2 mbar = (m1 * v2 + m2 * v1) * (1.0 / vs);
          const Point2 dm = m1 - m2;
          total += g1.weight * g2.weight * std::exp(-norm2(dm) / (2.0 * vs)) * (vbar / (vbar + s)) *
                   std::exp(-norm2(mbar) / (2.0 * (vbar + s)));
        }
      }
      return total;
    }
    case InitialData::Kind::callable:
    default:
      return gaussian_smooth([&](Point2 z) { return x0(a + z) * x0(b + z); }, s, Point2{0.0, 0.0}, 20);
  }
}

Estimate pair_functional(Point2 x, Point2 offset, double t, const InitialData& x0, const PathConfig& cfg) {
  cfg.validate();
  if (!(t > 0.0)) throw DomainError("pair_functional needs t > 0");
  const RelativeInteraction inter(*cfg.phi, cfg.params.epsilon);
  const auto drift = make_drift(cfg);
  const RelativeWalker walker(inter, cfg.params.coupling * cfg.exponent_scale, cfg.substep, drift.get());
  const Point2 w0 = offset * (1.0 / std::sqrt(2.0));
  const Point2 x2 = x + offset;
  return sharded_mean(cfg.n_paths, cfg.seed, [&](RngStream& rng) {
    const auto end = walker.walk(w0, t, rng, [](double, double, double, double) {});
    const Point2 d = (end.w - w0) * (1.0 / std::sqrt(2.0));
    return cfg.params.coupling * std::exp(end.log_weight) * pair_terminal_factor(x0, x, x2, d, t);
  });
}

FlaggedEstimate s_bar_eps(double tau, const PathConfig& cfg) {
  cfg.validate();
  if (!(tau > 0.0)) throw DomainError("s_bar_eps needs tau > 0");
  const double eps = cfg.params.epsilon;
  const RelativeInteraction inter(*cfg.phi, eps);
  const auto drift = make_drift(cfg);
  const RelativeWalker walker(inter, cfg.params.coupling * cfg.exponent_scale, cfg.substep, drift.get());
  const double coupling = cfg.params.coupling;
  const double last = std::min(cfg.substep, tau);
  // Radial table of the last-step smoothing of the interaction.
  const double w_max = inter.reach + 12.0 * std::sqrt(last);
  const int n_tab = 1201;
  std::vector<double> tab(n_tab);
  parallel_for(static_cast<std::size_t>(n_tab), [&](std::size_t k) {
    tab[k] = smoothed_interaction(inter, last, w_max * static_cast<double>(k) / (n_tab - 1));
  });
  const RadialTable smoothed(w_max, std::move(tab));
  const PhiSampler sampler(cfg.phi->spec());
  FlaggedEstimate out;
  out.estimate = sharded_mean(cfg.n_paths, cfg.seed, [&](RngStream& rng) {
    const Point2 w0 = sampler(rng) * (eps / std::sqrt(2.0));
    const auto end = walker.walk(w0, tau - last, rng, [](double, double, double, double) {});
    const double r = norm(end.w);
    const double terminal = r >= w_max ? 0.0 : smoothed(r);
    return coupling * coupling * std::exp(end.log_weight) * terminal;
  });
  out.low_confidence = tau < 0.01 * eps * eps;
  return out;
}

double s_bar_eps_free(double tau, const CriticalParams& params, const PhiKernel& phi) {
  if (!(tau > 0.0)) throw DomainError("s_bar_eps_free needs tau > 0");
  const RelativeInteraction inter(phi, params.epsilon);
  const double eps = params.epsilon;
  auto outer = [&](double r) {
    return 2.0 * M_PI * r * phi.radial(r) * smoothed_interaction(inter, tau, eps * r / std::sqrt(2.0));
  };
  return params.coupling * params.coupling * quad_1d(outer, 0.0, phi.support_radius(), QuadSpec{1e-14, 1e-9, 400});
}

LaplaceEstimate S_eps(double q, const PathConfig& cfg) {
  cfg.validate();
  if (!(q > 0.0)) throw DomainError("S_eps needs q > 0");
  if (!(cfg.exponent_scale > 0.0)) throw DomainError("S_eps needs a positive exponent scale");
  const double eps = cfg.params.epsilon;
  const RelativeInteraction inter(*cfg.phi, eps);
  const auto drift = make_drift(cfg);
  const RelativeWalker walker(inter, cfg.params.coupling * cfg.exponent_scale, cfg.substep, drift.get());
  // e^{-q tau} E_tau decays like e^{-(q - beta) tau}; ten decay lengths leave
  // a relative tail of about e^{-10}.
  const double gap = q - cfg.params.beta;
  const double horizon = gap > 0.0 ? 10.0 / gap : 10.0 / q;
  const PhiSampler sampler(cfg.phi->spec());
  LaplaceEstimate out;
  out.horizon = horizon;
  out.estimate = sharded_mean(cfg.n_paths, cfg.seed, [&](RngStream& rng) {
    const Point2 w0 = sampler(rng) * (eps / std::sqrt(2.0));
    double laplace = 0.0, weight_a = 1.0, decay_a = 1.0;
    const auto last = walker.walk(w0, horizon, rng, [&](double, double b, double, double lb) {
      // int_a^b e^{-q s} ds, with the path weight averaged over the step
      const double weight_b = std::exp(lb), decay_b = std::exp(-q * b);
      laplace += 0.5 * (weight_a + weight_b) * (decay_a - decay_b) / q;
      weight_a = weight_b;
      decay_a = decay_b;
    });
    const double end = std::exp(last.log_weight - q * horizon);
    // d(E_tau) = Lambda varphi E_tau dtau integrated by parts against e^{-q tau}
    return cfg.params.coupling * (end - 1.0 + q * laplace) / cfg.exponent_scale;
  });
  return out;
}

double S_eps_resolvent(double q, const CriticalParams& params, const PhiKernel& phi) {
  if (!(q > 0.0)) throw DomainError("S_eps_resolvent needs q > 0");
  // u = forced + c free, with c fixed by matching u'/u to the exterior K0(k s).
  const double lam = params.coupling, k2 = q * params.epsilon * params.epsilon, k = std::sqrt(k2);
  const int steps = 40000;
  const RadialSolution forced = shoot_radial(phi, lam, k2, 1.0, 0.0, steps);
  const RadialSolution free_sol = shoot_radial(phi, lam, k2, 0.0, 1.0, steps);
  const double R = phi.support_radius();
  const double ratio = exterior_log_slope(k, R);
  const double c = (forced.du.back() - ratio * forced.u.back()) / (ratio * free_sol.u.back() - free_sol.du.back());
  // Lambda^2 int 2 pi s phi(s) u(s) ds by the trapezoid rule on the integration grid.
  double acc = 0.0;
  for (int i = 0; i < steps; ++i) {
    const auto f = [&](int j) {
      return forced.s[j] * phi.radial(forced.s[j]) * (forced.u[j] + c * free_sol.u[j]);
    };
    acc += 0.5 * (forced.s[i + 1] - forced.s[i]) * (f(i) + f(i + 1));
  }
  return lam * lam * 2.0 * M_PI * acc;
}

double bound_state_energy(double coupling, double eps, const PhiKernel& phi) {
  if (!(coupling > 0.0)) throw DomainError("a bound state needs a positive coupling");
  const double R = phi.support_radius();
  // The free solution's slope at the support edge falls below the exterior
  // one exactly for energies under the bound state.
  auto mismatch = [&](double energy) {
    const double k = eps * std::sqrt(energy);
    const RadialSolution sol = shoot_radial(phi, coupling, k * k, 0.0, 1.0, 4000);
    if (sol.u.back() <= 0.0) return -1.0;
    return sol.du.back() / sol.u.back() - exterior_log_slope(k, R);
  };
  double lo = 1e-300, hi = 1.0;
  while (mismatch(hi) < 0.0) hi *= 4.0;
  lo = hi / 4.0;
  while (mismatch(lo) > 0.0) {
    lo /= 4.0;
    if (lo < 1e-200) throw DomainError("no bound state found");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mismatch(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

AprioriCheck apriori_growth_check(double t, const PathConfig& cfg, const AprioriConstants& k) {
  cfg.validate();
  if (!(t > 0.0)) throw DomainError("apriori_growth_check needs t > 0");
  const double eps = cfg.params.epsilon;
  const RelativeInteraction inter(*cfg.phi, eps);
  const auto drift = make_drift(cfg);
  const RelativeWalker walker(inter, cfg.params.coupling * cfg.exponent_scale, cfg.substep, drift.get());
  const double coupling = cfg.params.coupling;
  AprioriCheck out;
  out.value = sharded_mean(cfg.n_paths, cfg.seed, [&](RngStream& rng) {
    const auto end = walker.walk(Point2{0.0, 0.0}, t, rng, [](double, double, double, double) {});
    return coupling * (std::exp(end.log_weight) - 1.0);
  });
  const double q = k.q_over_beta * cfg.params.beta;
  out.bound = k.C * std::fabs(coupling) * (1.0 + std::max(0.0, std::log(t / (eps * eps)))) * std::exp(q * t);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Composite Gauss-Legendre nodes in w = log s over [log T - 50, log T]: the
// kernel 1/(2s' + s) is smooth on the scale of one unit of log s.
struct LogGrid {
  std::vector<double> s, weight;  // weight includes ds = s dw
};

const LogGrid& log_grid_unit() {
  static const LogGrid grid = [] {
    LogGrid g;
    const FixedRule& rule = gauss_legendre_unit(8);
    const double w_lo = -50.0, width = 0.5;
    const int panels = 100;
    for (int p = 0; p < panels; ++p) {
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double w = w_lo + width * (p + rule.nodes[q]);
        g.s.push_back(std::exp(w));
        g.weight.push_back(width * rule.weights[q] * std::exp(w));
      }
    }
    return g;
  }();
  return grid;
}

}  // namespace

double iterated_integral(int k, double s0, double T) {
  if (k < 1) throw DomainError("iterated_integral needs k >= 1");
  if (!(s0 > 0.0 && T > 0.0)) throw DomainError("iterated_integral needs s0, T > 0");
  if (k > 8) throw DomainError("iterated_integral refuses k > 8 (cost)");
  if (k > 4) return iterated_integral_mc(k, s0, T, 400000, 0x5eedULL + static_cast<std::uint64_t>(k)).mean;
  // The integral is invariant under s -> s / T, so work on (0, 1).
  const double a = s0 / T;
  const LogGrid& g = log_grid_unit();
  const std::size_t n = g.s.size();
  // inner[i] = value of the (j)-fold inner integral seen from s_{prev} = s_i
  std::vector<double> inner(n, 1.0), next(n);
  for (int level = 1; level < k; ++level) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g.weight[j] * inner[j] / (2.0 * g.s[j] + g.s[i]);
      next[i] = acc;
    }
    inner.swap(next);
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += g.weight[j] * inner[j] / (2.0 * g.s[j] + a);
  // The cut at s = e^{-50} drops at most e^{-50} / a per level.
  return acc;
}

Estimate iterated_integral_mc(int k, double s0, double T, long long n_samples, std::uint64_t seed) {
  if (k < 1) throw DomainError("iterated_integral_mc needs k >= 1");
  if (!(s0 > 0.0 && T > 0.0)) throw DomainError("iterated_integral_mc needs s0, T > 0");
  if (n_samples < 2) throw DomainError("iterated_integral_mc needs at least two samples");
  // Sequential importance sampling: s_j has density proportional to
  // 1 / (2 s + s_{j-1}) on (0, T); the weight is the product of the normalisers.
  return sharded_mean(n_samples, seed, [&](RngStream& rng) {
    double prev = s0, weight = 1.0;
    for (int j = 0; j < k; ++j) {
      const double span = 1.0 + 2.0 * T / prev;
      weight *= 0.5 * std::log(span);
      const double u = rng.uniform();
      prev = 0.5 * prev * (std::pow(span, u) - 1.0);
      if (prev <= 0.0) prev = std::numeric_limits<double>::min();
    }
    return weight;
  });
}

void RateTable::validate() const {
  if (breaks.size() < 2 || rates.size() + 1 != breaks.size()) throw DomainError("rate table shape mismatch");
  const std::size_t pairs = rates.front().size();
  for (std::size_t p = 0; p < rates.size(); ++p) {
    if (!(breaks[p + 1] > breaks[p])) throw DomainError("rate table breaks must increase");
    if (rates[p].size() != pairs) throw DomainError("every piece needs one rate per pair");
    for (double r : rates[p]) {
      if (!std::isfinite(r)) throw DomainError("rates must be finite");
    }
  }
}

ExpansionCheck exp_expansion_check(int m_max, const RateTable& table) {
  table.validate();
  if (m_max < 0) throw DomainError("m_max must be nonnegative");
  const int P = static_cast<int>(table.rates.front().size());
  // State: [1, W_1(0..P-1), ..., W_m(0..P-1)] where W_k(i) collects the chains
  // of k blocks whose current block sits on pair i. A new block may start on i
  // only after a block on a different pair, which keeps consecutive pairs distinct.
  const int dim = 1 + m_max * P;
  Eigen::VectorXd state = Eigen::VectorXd::Zero(dim);
  state(0) = 1.0;
  double total_exponent = 0.0;
  for (std::size_t p = 0; p < table.rates.size(); ++p) {
    const double len = table.breaks[p + 1] - table.breaks[p];
    const auto& r = table.rates[p];
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 1; k <= m_max; ++k) {
      for (int i = 0; i < P; ++i) {
        const int row = 1 + (k - 1) * P + i;
        A(row, row) += r[static_cast<std::size_t>(i)];
        if (k == 1) {
          A(row, 0) += r[static_cast<std::size_t>(i)];
        } else {
          for (int j = 0; j < P; ++j) {
            if (j != i) A(row, 1 + (k - 2) * P + j) += r[static_cast<std::size_t>(i)];
          }
        }
      }
    }
    for (double v : r) total_exponent += v * len;
    const Eigen::MatrixXd step = (A * len).exp();
    state = step * state;
  }
  ExpansionCheck out;
  double acc = 1.0;
  out.truncations.push_back(acc);
  for (int k = 1; k <= m_max; ++k) {
    for (int i = 0; i < P; ++i) acc += state(1 + (k - 1) * P + i);
    out.truncations.push_back(acc);
  }
  out.exact = std::exp(total_exponent);
  return out;
}

}  // namespace critshe
