#include "critshe/numcore.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_expint.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace critshe {

namespace {

constexpr double kEulerGamma = 0.577215664901532860606512;

void silence_gsl() {
  static std::once_flag once;
  std::call_once(once, [] { gsl_set_error_handler_off(); });
}

// Exceptions must not unwind through GSL's C frames, so the trampoline parks
// them here and quad_1d rethrows once GSL has returned.
struct Trampoline {
  const Integrand* f;
  std::exception_ptr error;
};

double trampoline(double t, void* raw) {
  auto* tr = static_cast<Trampoline*>(raw);
  if (tr->error) return 0.0;
  try {
    return (*tr->f)(t);
  } catch (...) {
    tr->error = std::current_exception();
    return 0.0;
  }
}

struct Workspace {
  explicit Workspace(std::size_t n) : ptr(gsl_integration_workspace_alloc(n)), size(n) {}
  ~Workspace() { gsl_integration_workspace_free(ptr); }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  gsl_integration_workspace* ptr;
  std::size_t size;
};

enum class Rule { plain, extrapolating, upper_infinite };

double run_gsl(const Integrand& f, double a, double b, const QuadSpec& spec, Rule rule) {
  silence_gsl();
  spec.validate();
  const auto limit = static_cast<std::size_t>(spec.max_refinement_depth);
  Workspace ws(limit);
  Trampoline tr{&f, nullptr};
  gsl_function gf{&trampoline, &tr};
  double result = 0.0, abserr = 0.0;
  int status = 0;
  switch (rule) {
    case Rule::plain:
      status = gsl_integration_qag(&gf, a, b, spec.abs_tol, spec.rel_tol, limit,
                                   GSL_INTEG_GAUSS21, ws.ptr, &result, &abserr);
      break;
    case Rule::extrapolating:
      status = gsl_integration_qags(&gf, a, b, spec.abs_tol, spec.rel_tol, limit, ws.ptr,
                                    &result, &abserr);
      break;
    case Rule::upper_infinite:
      status = gsl_integration_qagiu(&gf, a, spec.abs_tol, spec.rel_tol, limit, ws.ptr,
                                     &result, &abserr);
      break;
  }
  if (tr.error) std::rethrow_exception(tr.error);
  if (!std::isfinite(result)) {
    throw RefinementExhausted("quadrature produced a non-finite value", result, abserr);
  }
  if (status != GSL_SUCCESS && status != GSL_EROUND) {
    // GSL error estimates are conservative; accept results that are close to
    // the requested accuracy rather than failing deep inside nested integrals.
    const double target = std::max(spec.abs_tol, spec.rel_tol * std::fabs(result));
    if (abserr > 50.0 * target) {
      throw RefinementExhausted(std::string("quadrature did not converge: ") + gsl_strerror(status),
                                result, abserr);
    }
  }
  return result;
}

}  // namespace

void QuadSpec::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw DomainError("quadrature tolerances must be positive");
  if (max_refinement_depth < 1) throw DomainError("refinement depth must be at least 1");
}

double euler_gamma() {
  static const double value = [] {
    QuadSpec spec{1e-15, 1e-14, 1000};
    auto integrand = [](double t) { return std::exp(-t) * std::log(t); };
    double near = quad_1d(integrand, 0.0, 1.0, spec, Endpoint::left);
    double far = quad_semi_infinite(integrand, 1.0, spec);
    double integral_form = -(near + far);
    if (std::fabs(integral_form - kEulerGamma) > 1e-12) {
      std::fprintf(stderr, "Euler-Mascheroni cross-check failed: %.17g vs %.17g\n", integral_form,
                   kEulerGamma);
      std::abort();
    }
    return kEulerGamma;
  }();
  return value;
}

double gamma_fn(double u) {
  if (!(u > 0.0)) throw DomainError("gamma_fn requires a positive argument");
  return std::tgamma(u);
}

double exp_integral_e1(double x) {
  if (!(x > 0.0)) throw DomainError("E1 requires a positive argument");
  silence_gsl();
  if (x > 700.0) {
    // Beyond underflow of e^{-x}; return the leading asymptotic term scaled.
    return std::exp(-x) / x * (1.0 - 1.0 / x + 2.0 / (x * x));
  }
  return gsl_sf_expint_E1(x);
}

double exp_integral_ein(double z) {
  if (z < 0.0) throw DomainError("Ein is only used for nonnegative arguments");
  if (z == 0.0) return 0.0;
  if (z <= 2.0) {
    // Alternating series, terms shrink quickly for z <= 2.
    double term = z, sum = z;
    for (int k = 2; k < 60; ++k) {
      term *= -z / k;
      double add = term / k;
      sum += add;
      if (std::fabs(add) < 1e-17 * std::fabs(sum)) break;
    }
    return sum;
  }
  return exp_integral_e1(z) + std::log(z) + euler_gamma();
}

double quad_1d(const Integrand& f, double a, double b, const QuadSpec& spec, Endpoint singular) {
  if (!(a < b)) {
    if (a == b) return 0.0;
    throw DomainError("quad_1d requires a < b");
  }
  const double h = b - a;
  switch (singular) {
    case Endpoint::none:
      return run_gsl(f, a, b, spec, Rule::plain);
    case Endpoint::left: {
      Integrand g = [&](double u) {
        const double t = a + h * u * u;
        return t == a ? 0.0 : 2.0 * h * u * f(t);  // u^2 underflowed onto the singular end
      };
      return run_gsl(g, 0.0, 1.0, spec, Rule::extrapolating);
    }
    case Endpoint::right: {
      Integrand g = [&](double u) {
        const double t = b - h * u * u;
        return t == b ? 0.0 : 2.0 * h * u * f(t);
      };
      return run_gsl(g, 0.0, 1.0, spec, Rule::extrapolating);
    }
    case Endpoint::both: {
      const double mid = 0.5 * (a + b);
      return quad_1d(f, a, mid, spec, Endpoint::left) + quad_1d(f, mid, b, spec, Endpoint::right);
    }
  }
  return 0.0;
}

double quad_semi_infinite(const Integrand& f, double a, const QuadSpec& spec) {
  return run_gsl(f, a, 0.0, spec, Rule::upper_infinite);
}

double quad_2d(const Integrand2& f, const Rect& d, const QuadSpec& spec) {
  if (!(d.x0 < d.x1) || !(d.y0 < d.y1)) throw DomainError("empty rectangle");
  QuadSpec inner = spec;
  inner.abs_tol = spec.abs_tol / (d.x1 - d.x0);
  return quad_1d(
      [&](double x) { return quad_1d([&](double y) { return f(x, y); }, d.y0, d.y1, inner); },
      d.x0, d.x1, spec);
}

double quad_2d(const Integrand2& f, const Disk& d, const QuadSpec& spec) {
  if (!(d.radius > 0.0)) throw DomainError("disk radius must be positive");
  QuadSpec inner = spec;
  inner.abs_tol = spec.abs_tol / (2.0 * M_PI);
  return quad_1d(
      [&](double theta) {
        const double c = std::cos(theta), s = std::sin(theta);
        return quad_1d([&](double r) { return r * f(d.cx + r * c, d.cy + r * s); }, 0.0, d.radius,
                       inner, Endpoint::left);
      },
      0.0, 2.0 * M_PI, spec);
}

const FixedRule& gauss_hermite_normal(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<FixedRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    if (n < 1) throw DomainError("Gauss-Hermite order must be positive");
    gsl_integration_fixed_workspace* w =
        gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, n, 0.0, 1.0, 0.0, 0.0);
    auto rule = std::make_unique<FixedRule>();
    const double* x = gsl_integration_fixed_nodes(w);
    const double* wt = gsl_integration_fixed_weights(w);
    for (int i = 0; i < n; ++i) {
      rule->nodes.push_back(std::sqrt(2.0) * x[i]);
      rule->weights.push_back(wt[i] / std::sqrt(M_PI));
    }
    gsl_integration_fixed_free(w);
    slot = std::move(rule);
  }
  return *slot;
}

const FixedRule& gauss_legendre_unit(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<FixedRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    if (n < 1) throw DomainError("Gauss-Legendre order must be positive");
    gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(n);
    auto rule = std::make_unique<FixedRule>();
    for (int i = 0; i < n; ++i) {
      double xi = 0.0, wi = 0.0;
      gsl_integration_glfixed_point(0.0, 1.0, i, &xi, &wi, t);
      rule->nodes.push_back(xi);
      rule->weights.push_back(wi);
    }
    gsl_integration_glfixed_table_free(t);
    slot = std::move(rule);
  }
  return *slot;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
  engine_.seed(seq);
}

RngStream rng_stream(std::uint64_t seed, std::uint64_t stream_id) {
  return RngStream(seed, stream_id);
}

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double n = static_cast<double>(n_ + o.n_);
  const double delta = o.mean_ - mean_;
  mean_ += delta * static_cast<double>(o.n_) / n;
  m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
  n_ += o.n_;
}

double RunningStats::variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

Estimate RunningStats::estimate() const {
  Estimate e;
  e.mean = mean_;
  e.n_samples = n_;
  e.std_err = n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  return e;
}

Estimate jackknife(const std::vector<double>& values,
                   const std::function<double(const std::vector<double>&)>& statistic) {
  const std::size_t n = values.size();
  if (n < 2) throw DomainError("jackknife needs at least two replicas");
  const double full = statistic(values);
  std::vector<double> loo(values.begin() + 1, values.end());
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) loo[i - 1] = values[i - 1];  // loo now omits values[i]
    const double v = statistic(loo);
    sum += v;
    sum2 += v * v;
  }
  const double mean_loo = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean_loo * mean_loo);
  Estimate e;
  e.mean = full;
  e.std_err = std::sqrt(static_cast<double>(n - 1) * var);
  e.n_samples = static_cast<long long>(n);
  return e;
}

Estimate jackknife_mean(const std::vector<double>& values) {
  RunningStats rs;
  for (double v : values) rs.add(v);
  if (values.size() < 2) throw DomainError("jackknife needs at least two replicas");
  // For the sample mean the delete-one jackknife equals the classical error.
  return rs.estimate();
}

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("CRITSHE_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace critshe
