#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace critshe {

struct QuadSpec {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_refinement_depth = 400;  // maximum number of bisected subintervals

  void validate() const;
};

// Monte Carlo result: value, its standard error, and how many samples went in.
struct Estimate {
  double mean = 0.0;
  double std_err = 0.0;
  long long n_samples = 0;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A configuration inequality failed; the message names it and suggests a fix.
class GateViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RefinementExhausted : public std::runtime_error {
 public:
  RefinementExhausted(const std::string& what, double best, double err)
      : std::runtime_error(what), best_estimate(best), error_estimate(err) {}
  double best_estimate;
  double error_estimate;
};

// Euler-Mascheroni constant. The first call checks it against
// -int_0^inf e^{-t} log t dt and aborts the process on mismatch.
double euler_gamma();

double gamma_fn(double u);
double exp_integral_e1(double x);
// Ein(z) = int_0^z (1 - e^{-t})/t dt, the entire companion of E1.
double exp_integral_ein(double z);

using Integrand = std::function<double(double)>;
using Integrand2 = std::function<double(double, double)>;

// Which endpoints carry an integrable singularity. Declared singular ends are
// regularised by the substitution t = a + (b-a)u^2 before adaptive bisection.
enum class Endpoint { none, left, right, both };

double quad_1d(const Integrand& f, double a, double b, const QuadSpec& spec = {},
               Endpoint singular = Endpoint::none);
// int_a^inf f(t) dt.
double quad_semi_infinite(const Integrand& f, double a, const QuadSpec& spec = {});

struct Rect {
  double x0, x1, y0, y1;
};
struct Disk {
  double cx, cy, radius;
};
double quad_2d(const Integrand2& f, const Rect& domain, const QuadSpec& spec = {});
// Polar coordinates around the centre; the radial direction is treated as
// possibly singular at r = 0.
double quad_2d(const Integrand2& f, const Disk& domain, const QuadSpec& spec = {});

struct FixedRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
// Nodes and weights for E[h(Z)], Z ~ N(0,1): sum_i w_i h(z_i).
const FixedRule& gauss_hermite_normal(int n);
// Gauss-Legendre on [0,1].
const FixedRule& gauss_legendre_unit(int n);

// One deterministic random source per (seed, stream_id). Streams are owned by
// a single worker and never shared.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

RngStream rng_stream(std::uint64_t seed, std::uint64_t stream_id);

// Welford accumulator with an associative merge, for sharded Monte Carlo.
class RunningStats {
 public:
  void add(double x);
  void merge(const RunningStats& other);
  long long count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;
  Estimate estimate() const;

 private:
  long long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Delete-one jackknife for a smooth statistic of per-replica values.
Estimate jackknife(const std::vector<double>& values,
                   const std::function<double(const std::vector<double>&)>& statistic);
Estimate jackknife_mean(const std::vector<double>& values);

// Worker count: hardware concurrency capped by CRITSHE_THREADS.
int worker_count();
// Runs body(i) for i in [0, n) over worker_count() threads. Results must not
// depend on scheduling, so bodies write to index-addressed slots only.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace critshe
