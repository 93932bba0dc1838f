#include "critshe/she_sim.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <sstream>

namespace critshe {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;  // FFTW's planner is not thread safe
  return mu;
}

// Signed lattice displacement for index difference k on a periodic grid of size n.
int wrap_signed(int k, int n) {
  k %= n;
  if (k < 0) k += n;
  return k > n / 2 ? k - n : k;
}

int wrap_index(int k, int n) {
  k %= n;
  return k < 0 ? k + n : k;
}

double min_image(double d, double L) { return d - L * std::round(d / L); }

}  // namespace

int SimConfig::n_steps() const { return static_cast<int>(std::ceil(T / dt - 1e-9)); }

void SimConfig::validate() const {
  std::ostringstream os;
  const double eps = params.epsilon;
  if (!(dt > 0.0)) throw GateViolation("dt > 0 violated");
  if (!(T > 0.0)) throw GateViolation("T > 0 violated");
  if (grid_n < 8 || (grid_n & (grid_n - 1)) != 0) {
    os << "grid_n must be a power of two >= 8 (got " << grid_n << ")";
    throw GateViolation(os.str());
  }
  if (dt > eps * eps / 10.0 * (1.0 + 1e-12)) {
    os << "gate dt <= eps^2/10 violated: dt = " << dt << " > " << eps * eps / 10.0
       << "; reduce dt to at most " << eps * eps / 10.0;
    throw GateViolation(os.str());
  }
  if (dx() > eps / 4.0 * (1.0 + 1e-12)) {
    os << "gate dx <= eps/4 violated: dx = L/grid_n = " << dx() << " > " << eps / 4.0
       << "; raise grid_n to at least " << std::ceil(4.0 * box_size / eps) << " or shrink the box";
    throw GateViolation(os.str());
  }
  if (box_size < 8.0 * std::sqrt(T) * (1.0 - 1e-12)) {
    os << "gate L >= 8 sqrt(T) violated: L = " << box_size << " < " << 8.0 * std::sqrt(T)
       << "; enlarge the box or shorten T";
    throw GateViolation(os.str());
  }
  if (!(params.coupling >= 0.0)) throw GateViolation("coupling must be nonnegative");
  if (n_replicas < 1) throw GateViolation("n_replicas >= 1 violated");
}

SimConfig make_sim_config(double eps, double lambda, double T, int grid_n, double box_size, int n_replicas,
                          std::uint64_t seed, std::shared_ptr<const PhiKernel> phi) {
  SimConfig c;
  c.params = make_params(*phi, eps, lambda);
  c.phi = std::move(phi);
  c.T = T;
  c.grid_n = grid_n;
  c.box_size = box_size;
  c.n_replicas = n_replicas;
  c.seed = seed;
  c.dt = eps * eps / 10.0;
  return c;
}

double FieldSnapshot::at(int i, int j) const {
  return values[static_cast<std::size_t>(wrap_index(i, n)) * n + wrap_index(j, n)];
}

double FieldSnapshot::sample(Point2 x) const {
  const double h = box_size / n;
  const double u = x.x / h, v = x.y / h;
  const int i = static_cast<int>(std::floor(u)), j = static_cast<int>(std::floor(v));
  const double a = u - i, b = v - j;
  return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) +
         a * b * at(i + 1, j + 1);
}

struct Simulator::Plans {
  int n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward{};
  fftw_plan backward{};

  explicit Plans(int n_) : n(n_) {
    const std::size_t nr = static_cast<std::size_t>(n) * n;
    const std::size_t nc = static_cast<std::size_t>(n) * (n / 2 + 1);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    real = fftw_alloc_real(nr);
    spec = fftw_alloc_complex(nc);
    forward = fftw_plan_dft_r2c_2d(n, n, real, spec, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_2d(n, n, spec, real, FFTW_ESTIMATE);
  }
  ~Plans() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec);
  }
  // field <- IFFT(multiplier * FFT(field)); the multiplier carries 1/n^2.
  void filter(std::vector<double>& field, const std::vector<double>& multiplier) {
    std::copy(field.begin(), field.end(), real);
    fftw_execute(forward);
    const std::size_t nc = multiplier.size();
    for (std::size_t k = 0; k < nc; ++k) {
      spec[k][0] *= multiplier[k];
      spec[k][1] *= multiplier[k];
    }
    fftw_execute(backward);
    std::copy(real, real + field.size(), field.begin());
  }
};

Simulator::Simulator(const SimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.grid_n;
  plans_ = std::make_unique<Plans>(n);
  const double L = cfg_.box_size, dx = cfg_.dx();
  const double step = cfg_.T / cfg_.n_steps();
  const double norm = 1.0 / (static_cast<double>(n) * n);
  const std::size_t nc = static_cast<std::size_t>(n) * (n / 2 + 1);
  heat_multiplier_.resize(nc);
  for (int i = 0; i < n; ++i) {
    const double k1 = 2.0 * M_PI * wrap_signed(i, n) / L;
    for (int j = 0; j <= n / 2; ++j) {
      const double k2 = 2.0 * M_PI * j / L;
      heat_multiplier_[static_cast<std::size_t>(i) * (n / 2 + 1) + j] =
          std::exp(-(k1 * k1 + k2 * k2) * step / 2.0) * norm;
    }
  }

  // rho_eps sampled on the lattice and renormalised to unit lattice mass.
  const double eps = cfg_.params.epsilon;
  const MollifierSpec& moll = cfg_.phi->spec();
  const int reach = static_cast<int>(std::ceil(moll.support_radius * eps / dx)) + 1;
  std::vector<double> rho(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<std::pair<std::pair<int, int>, double>> cells;
  double mass = 0.0;
  for (int a = -reach; a <= reach; ++a) {
    for (int b = -reach; b <= reach; ++b) {
      const double r = std::hypot(a * dx, b * dx) / eps;
      const double v = moll.rho(r) / (eps * eps);
      if (v <= 0.0) continue;
      cells.push_back({{a, b}, v});
      mass += v * dx * dx;
    }
  }
  for (auto& c : cells) {
    c.second /= mass;
    rho[static_cast<std::size_t>(wrap_index(c.first.first, n)) * n + wrap_index(c.first.second, n)] +=
        c.second * dx * dx;
  }
  // Filter = FFT of the lattice kernel (real and even), times the 1/n^2 of the inverse.
  std::copy(rho.begin(), rho.end(), plans_->real);
  fftw_execute(plans_->forward);
  noise_filter_.resize(nc);
  for (std::size_t k = 0; k < nc; ++k) noise_filter_[k] = plans_->spec[k][0] * norm;

  // Lattice covariance C(d) = dx^2 sum_z rho(z) rho(z + d).
  std::map<std::pair<int, int>, double> cov;
  for (const auto& p : cells) {
    for (const auto& q : cells) {
      const int di = q.first.first - p.first.first, dj = q.first.second - p.first.second;
      cov[{di, dj}] += dx * dx * p.second * q.second;
    }
  }
  for (const auto& [d, w] : cov) offsets_.push_back({d.first, d.second, w});
}

Simulator::~Simulator() = default;

std::vector<double> Simulator::initial_field() const {
  const int n = cfg_.grid_n;
  const double dx = cfg_.dx();
  std::vector<double> f(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) f[static_cast<std::size_t>(i) * n + j] = cfg_.x0({i * dx, j * dx});
  }
  return f;
}

void Simulator::heat_step(std::vector<double>& field) { plans_->filter(field, heat_multiplier_); }

void Simulator::heat_flow(std::vector<double>& field, double r) {
  if (r <= 0.0) return;
  const int n = cfg_.grid_n;
  const double L = cfg_.box_size;
  const double norm = 1.0 / (static_cast<double>(n) * n);
  std::vector<double> mult(heat_multiplier_.size());
  for (int i = 0; i < n; ++i) {
    const double k1 = 2.0 * M_PI * wrap_signed(i, n) / L;
    for (int j = 0; j <= n / 2; ++j) {
      const double k2 = 2.0 * M_PI * j / L;
      mult[static_cast<std::size_t>(i) * (n / 2 + 1) + j] = std::exp(-(k1 * k1 + k2 * k2) * r / 2.0) * norm;
    }
  }
  plans_->filter(field, mult);
}

void Simulator::draw_noise(RngStream& rng, std::vector<double>& noise) {
  const std::size_t nr = static_cast<std::size_t>(cfg_.grid_n) * cfg_.grid_n;
  noise.resize(nr);
  const double sd = std::sqrt(cfg_.T / cfg_.n_steps()) / cfg_.dx();
  for (std::size_t k = 0; k < nr; ++k) noise[k] = sd * rng.normal();
  plans_->filter(noise, noise_filter_);
}

void Simulator::step(std::vector<double>& field, RngStream& rng, std::vector<double>* pre_noise,
                     std::vector<double>* noise) {
  heat_step(field);
  if (pre_noise) *pre_noise = field;
  std::vector<double> local;
  std::vector<double>& w = noise ? *noise : local;
  draw_noise(rng, w);
  const double amp = std::sqrt(cfg_.params.coupling);
  bool finite = true;
  for (std::size_t k = 0; k < field.size(); ++k) {
    field[k] *= 1.0 + amp * w[k];
    finite = finite && std::isfinite(field[k]);
  }
  if (!finite) {
    throw InstabilityError("non-finite field value after a step; reduce dt (currently " +
                           std::to_string(cfg_.dt) + ") or the coupling");
  }
}

FieldSnapshot make_snapshot(const std::vector<double>& field, const SimConfig& cfg, double t) {
  FieldSnapshot s;
  s.t = t;
  s.n = cfg.grid_n;
  s.box_size = cfg.box_size;
  s.values = field;
  double mn = field.empty() ? 0.0 : field[0];
  std::size_t negative = 0;
  for (double v : field) {
    mn = std::min(mn, v);
    if (v < 0.0) ++negative;
  }
  s.min_value = mn;
  s.negative_fraction = field.empty() ? 0.0 : static_cast<double>(negative) / field.size();
  return s;
}

void run_replica(const SimConfig& cfg, int replica, const StepObserver& observer) {
  Simulator sim(cfg);
  RngStream rng = rng_stream(cfg.seed, static_cast<std::uint64_t>(replica));
  std::vector<double> field = sim.initial_field(), pre, noise;
  const int steps = cfg.n_steps();
  const double h = cfg.T / steps;
  for (int k = 0; k < steps; ++k) {
    sim.step(field, rng, &pre, &noise);
    if (observer) observer(k, (k + 1) * h, pre, noise, field);
  }
}

std::vector<std::vector<FieldSnapshot>> simulate(const SimConfig& cfg) {
  cfg.validate();
  const int steps = cfg.n_steps();
  const double h = cfg.T / steps;
  std::vector<double> times = cfg.snapshot_times.empty() ? std::vector<double>{cfg.T} : cfg.snapshot_times;
  std::vector<int> at_step;
  for (double t : times) {
    if (t < 0.0 || t > cfg.T + 1e-12) throw DomainError("snapshot time outside [0, T]");
    at_step.push_back(static_cast<int>(std::lround(t / h)));
  }
  std::vector<std::vector<FieldSnapshot>> out(static_cast<std::size_t>(cfg.n_replicas));
  parallel_for(out.size(), [&](std::size_t r) {
    Simulator sim(cfg);
    RngStream rng = rng_stream(cfg.seed, r);
    std::vector<double> field = sim.initial_field();
    auto record = [&](int k) {
      for (std::size_t m = 0; m < at_step.size(); ++m) {
        if (at_step[m] == k) out[r].push_back(make_snapshot(field, cfg, k * h));
      }
    };
    record(0);
    for (int k = 1; k <= steps; ++k) {
      sim.step(field, rng);
      record(k);
    }
  });
  return out;
}

Estimate moment2_estimator(const std::vector<FieldSnapshot>& finals, Point2 x, Point2 offset,
                           bool spatial_average) {
  if (finals.size() < 2) throw DomainError("moment2_estimator needs at least two replicas");
  std::vector<double> per_replica;
  per_replica.reserve(finals.size());
  for (const auto& s : finals) {
    if (!spatial_average) {
      per_replica.push_back(s.sample(x) * s.sample(x + offset));
      continue;
    }
    const double h = s.box_size / s.n;
    double acc = 0.0;
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < s.n; ++j) {
        const Point2 p{i * h, j * h};
        acc += s.at(i, j) * s.sample(p + offset);
      }
    }
    per_replica.push_back(acc / (static_cast<double>(s.n) * s.n));
  }
  return jackknife_mean(per_replica);
}

namespace {

// Weights of a left Riemann sum over snapshot times restricted to [0, t].
std::vector<double> riemann_weights(const std::vector<FieldSnapshot>& run, double t) {
  if (run.empty()) throw DomainError("no snapshots");
  if (run.front().t > 1e-12) throw DomainError("snapshots must start at time 0 for time integrals");
  std::vector<double> w(run.size(), 0.0);
  for (std::size_t k = 0; k < run.size(); ++k) {
    const double a = run[k].t;
    const double b = k + 1 < run.size() ? run[k + 1].t : t;
    w[k] = std::max(0.0, std::min(b, t) - a);
  }
  if (run.back().t < t - 1e-12 && run.size() > 1) {
    const double spacing = run[run.size() - 1].t - run[run.size() - 2].t;
    if (t - run.back().t > 1.5 * spacing) throw DomainError("snapshot times do not cover [0, t]");
  }
  return w;
}

}  // namespace

Estimate nu_estimator(const std::vector<std::vector<FieldSnapshot>>& runs, const TestFunction& f, double t,
                      const SimConfig& cfg) {
  if (runs.size() < 2) throw DomainError("nu_estimator needs at least two replicas");
  std::vector<double> per;
  for (const auto& run : runs) {
    const auto w = riemann_weights(run, t);
    double acc = 0.0;
    for (std::size_t k = 0; k < run.size(); ++k) {
      if (w[k] == 0.0) continue;
      const auto& s = run[k];
      const double h = s.box_size / s.n;
      double space = 0.0;
      for (int i = 0; i < s.n; ++i) {
        for (int j = 0; j < s.n; ++j) {
          const double v = s.at(i, j);
          space += f({i * h, j * h}, s.t) * v * v;
        }
      }
      acc += w[k] * space * h * h;
    }
    per.push_back(cfg.params.coupling * acc);
  }
  return jackknife_mean(per);
}

Estimate mu_estimator(const std::vector<std::vector<FieldSnapshot>>& runs, const TwoPointFunction& g, double t,
                      const SimConfig& cfg) {
  if (runs.size() < 2) throw DomainError("mu_estimator needs at least two replicas");
  Simulator probe(cfg);
  const auto& offsets = probe.noise_offsets();
  std::vector<double> per;
  for (const auto& run : runs) {
    const auto w = riemann_weights(run, t);
    double acc = 0.0;
    for (std::size_t k = 0; k < run.size(); ++k) {
      if (w[k] == 0.0) continue;
      const auto& s = run[k];
      const double h = s.box_size / s.n;
      double space = 0.0;
      for (int i = 0; i < s.n; ++i) {
        for (int j = 0; j < s.n; ++j) {
          const Point2 x{i * h, j * h};
          const double v = s.at(i, j);
          for (const auto& o : offsets) {
            const Point2 xt{(i + o.di) * h, (j + o.dj) * h};
            space += o.weight * h * h * g(xt, x, s.t) * s.at(i + o.di, j + o.dj) * v;
          }
        }
      }
      acc += w[k] * space * h * h;
    }
    per.push_back(cfg.params.coupling * acc);
  }
  return jackknife_mean(per);
}

// ---------------------------------------------------------------------------

DecompositionReport decomposition_report(const SimConfig& cfg, const GaussianBump& bump, int block_steps) {
  cfg.validate();
  if (cfg.n_replicas < 2) throw DomainError("the decomposition needs at least two replicas");
  if (block_steps < 1) throw DomainError("block_steps must be positive");
  const int n = cfg.grid_n;
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  const double dx = cfg.dx(), L = cfg.box_size, eps = cfg.params.epsilon;
  const int steps = cfg.n_steps();
  const double h = cfg.T / steps;
  const int n_blocks = (steps + block_steps - 1) / block_steps;
  auto block_start = [&](int b) { return std::min(b * block_steps, steps) * h; };

  const InitialData f_space = InitialData::mixture({bump});
  const TestFunction f = TestFunction::separable(f_space);
  const OperatorContext ctx = make_context(cfg.T, cfg.params.lambda, cfg.phi);

  // Displacement of lattice cell (i, j) from the bump centre, periodic.
  auto rel = [&](int i, int j) {
    return Point2{min_image(i * dx - bump.center.x, L), min_image(j * dx - bump.center.y, L)};
  };
  std::vector<double> f_lattice(nn);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) f_lattice[static_cast<std::size_t>(i) * n + j] = f_space(bump.center + rel(i, j));
  }

  Simulator probe(cfg);
  const auto& offsets = probe.noise_offsets();
  const double region_radius = 7.0 * std::sqrt(bump.variance);
  std::vector<std::pair<int, int>> region;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (norm(rel(i, j)) <= region_radius) region.push_back({i, j});
    }
  }

  // Block-averaged L1_ring on a (|d|, |x + d/2 - centre|) grid.
  std::vector<double> radii;
  for (const auto& o : offsets) {
    const double r = std::hypot(o.di, o.dj) * dx;
    bool seen = false;
    for (double q : radii) seen = seen || std::fabs(q - r) < 1e-12;
    if (!seen) radii.push_back(r);
  }
  const int nz = 240;
  const double z_max = region_radius + 2.0 * cfg.phi->support_radius() * eps + 2.0 * dx;
  const FixedRule& gl = gauss_legendre_unit(3);
  // table[b][radius][z]
  std::vector<std::vector<RadialTable>> l1_table(static_cast<std::size_t>(n_blocks),
                                                 std::vector<RadialTable>(radii.size()));
  parallel_for(radii.size() * static_cast<std::size_t>(n_blocks), [&](std::size_t idx) {
    const std::size_t ri = idx % radii.size();
    const int b = static_cast<int>(idx / radii.size());
    const double r = radii[ri];
    std::vector<double> vals(nz);
    const double s0 = block_start(b), s1 = block_start(b + 1);
    for (int z = 0; z < nz; ++z) {
      const double rz = z_max * z / (nz - 1);
      double acc = 0.0;
      if (r > 0.0) {
        const Point2 y{r / eps, 0.0};
        const Point2 x = bump.center + Point2{rz - 0.5 * r, 0.0};
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          const double s = s0 + (s1 - s0) * gl.nodes[q];
          acc += (s1 - s0) * gl.weights[q] * L1_ring(ctx, eps, f, y, x, s);
        }
      }
      vals[static_cast<std::size_t>(z)] = acc;
    }
    l1_table[static_cast<std::size_t>(b)][ri] = RadialTable(z_max, std::move(vals));
  });
  std::vector<std::size_t> offset_radius(offsets.size());
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const double r = std::hypot(offsets[k].di, offsets[k].dj) * dx;
    for (std::size_t q = 0; q < radii.size(); ++q) {
      if (std::fabs(radii[q] - r) < 1e-12) offset_radius[k] = q;
    }
  }

  // Deterministic heat flows of the initial data on the lattice.
  const std::vector<double> x0_lattice = probe.initial_field();
  auto flowed_x0 = [&](Simulator& sim, double t) {
    std::vector<double> v = x0_lattice;
    sim.heat_flow(v, t);
    return v;
  };

  // L3 at each block start: int_{s_b}^T P_{t - s_b}[f P_t X0] dt.
  const FixedRule& gl_t = gauss_legendre_unit(10);
  std::vector<std::vector<double>> l3(static_cast<std::size_t>(n_blocks), std::vector<double>(nn, 0.0));
  {
    Simulator sim(cfg);
    for (int b = 0; b < n_blocks; ++b) {
      const double sb = block_start(b);
      for (std::size_t q = 0; q < gl_t.nodes.size(); ++q) {
        const double t = sb + (cfg.T - sb) * gl_t.nodes[q];
        std::vector<double> v = flowed_x0(sim, t);
        for (std::size_t k = 0; k < nn; ++k) v[k] *= f_lattice[k];
        sim.heat_flow(v, t - sb);
        const double w = (cfg.T - sb) * gl_t.weights[q];
        for (std::size_t k = 0; k < nn; ++k) l3[static_cast<std::size_t>(b)][k] += w * v[k];
      }
    }
  }

  // int_0^T int f (P_t X0)^2.
  double lhs = 0.0;
  {
    Simulator sim(cfg);
    const FixedRule& g16 = gauss_legendre_unit(16);
    for (std::size_t q = 0; q < g16.nodes.size(); ++q) {
      const double t = cfg.T * g16.nodes[q];
      const std::vector<double> v = flowed_x0(sim, t);
      double acc = 0.0;
      for (std::size_t k = 0; k < nn; ++k) acc += f_lattice[k] * v[k] * v[k];
      lhs += cfg.T * g16.weights[q] * acc * dx * dx;
    }
  }

  const double amp = std::sqrt(cfg.params.coupling);
  std::vector<double> i1(static_cast<std::size_t>(cfg.n_replicas)), i2(i1.size()), i3(i1.size()), i4(i1.size());
  parallel_for(i1.size(), [&](std::size_t r) {
    Simulator sim(cfg);
    std::vector<double> g_block(nn, 0.0);
    double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
    auto quadratic_terms = [&](int b, const std::vector<double>& X) {
      const double s0 = block_start(b), s1 = block_start(b + 1);
      const auto& tables = l1_table[static_cast<std::size_t>(b)];
      for (const auto& [i, j] : region) {
        const double xv = X[static_cast<std::size_t>(i) * n + j];
        const Point2 xr = rel(i, j);
        double diag = 0.0, cross = 0.0;
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          const auto& o = offsets[k];
          const Point2 zr = xr + Point2{0.5 * o.di * dx, 0.5 * o.dj * dx};
          const double w = o.weight * dx * dx * tables[offset_radius[k]](norm(zr));
          diag += w;
          cross += w * X[static_cast<std::size_t>(wrap_index(i + o.di, n)) * n + wrap_index(j + o.dj, n)];
        }
        const double fbar = (s1 - s0) * f_lattice[static_cast<std::size_t>(i) * n + j];
        a1 += (fbar - diag) * xv * xv * dx * dx;
        a2 -= (cross - diag * xv) * xv * dx * dx;
      }
    };
    auto refresh_g = [&](int b, const std::vector<double>& X) {
      // G = int_{s_b}^T P_{t-s_b}[f P_{t-s_b} N] dt with N the martingale part at s_b.
      const double sb = block_start(b);
      std::vector<double> N = X;
      const std::vector<double> base = flowed_x0(sim, sb);
      for (std::size_t k = 0; k < nn; ++k) N[k] -= base[k];
      std::fill(g_block.begin(), g_block.end(), 0.0);
      const FixedRule& g8 = gauss_legendre_unit(8);
      for (std::size_t q = 0; q < g8.nodes.size(); ++q) {
        const double lag = (cfg.T - sb) * g8.nodes[q];
        std::vector<double> v = N;
        sim.heat_flow(v, lag);
        for (std::size_t k = 0; k < nn; ++k) v[k] *= f_lattice[k];
        sim.heat_flow(v, lag);
        const double w = (cfg.T - sb) * g8.weights[q];
        for (std::size_t k = 0; k < nn; ++k) g_block[k] += w * v[k];
      }
    };
    std::vector<double> X0 = x0_lattice;
    refresh_g(0, X0);
    run_replica(cfg, static_cast<int>(r),
                [&](int k, double, const std::vector<double>& pre, const std::vector<double>& noise,
                    const std::vector<double>& X) {
                  const int b = k / block_steps;
                  const auto& l3b = l3[static_cast<std::size_t>(b)];
                  double s3 = 0.0, s4 = 0.0;
                  for (std::size_t c = 0; c < nn; ++c) {
                    const double m = amp * pre[c] * noise[c];
                    s3 += l3b[c] * m;
                    s4 += g_block[c] * m;
                  }
                  a3 += s3 * dx * dx;
                  a4 += s4 * dx * dx;
                  const int within = k - b * block_steps;
                  const int len = std::min(block_steps, steps - b * block_steps);
                  if (within == len / 2) quadratic_terms(b, X);
                  if (within == len - 1 && b + 1 < n_blocks) refresh_g(b + 1, X);
                });
    i1[r] = a1;
    i2[r] = a2;
    i3[r] = a3;
    i4[r] = a4;
  });

  DecompositionReport rep;
  rep.I1 = jackknife_mean(i1);
  rep.I2 = jackknife_mean(i2);
  rep.I3 = jackknife_mean(i3);
  rep.I4 = jackknife_mean(i4);
  std::vector<double> comb(i1.size());
  for (std::size_t r = 0; r < comb.size(); ++r) comb[r] = i1[r] + i2[r] - 2.0 * i3[r] - 2.0 * i4[r];
  rep.combined = jackknife_mean(comb);
  rep.lhs_deterministic = lhs;
  return rep;
}

}  // namespace critshe
