#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "critshe/dbg.hpp"
#include "critshe/mollifier.hpp"
#include "critshe/operators.hpp"

namespace critshe {

class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double box_size = 6.4;
  int grid_n = 256;
  double dt = 1e-3;
  double T = 0.25;
  CriticalParams params;
  InitialData x0 = InitialData::constant(1.0);
  int n_replicas = 1;
  std::uint64_t seed = 1;
  std::vector<double> snapshot_times;  // empty: final time only
  std::shared_ptr<const PhiKernel> phi = reference_phi();

  double dx() const { return box_size / grid_n; }
  int n_steps() const;
  void validate() const;  // throws GateViolation
};

SimConfig make_sim_config(double eps, double lambda, double T, int grid_n, double box_size, int n_replicas,
                          std::uint64_t seed, std::shared_ptr<const PhiKernel> phi = reference_phi());

struct FieldSnapshot {
  double t = 0.0;
  int n = 0;
  double box_size = 0.0;
  std::vector<double> values;  // row-major, index i * n + j for x = (i dx, j dx)
  double min_value = 0.0;
  double negative_fraction = 0.0;

  double at(int i, int j) const;
  // Bilinear interpolation, periodic.
  double sample(Point2 x) const;
};

// Lattice covariance of the mollified noise: E[W(x) W(x + d)] = dt * weight(d).
struct NoiseOffset {
  int di = 0, dj = 0;
  double weight = 0.0;
};

// One replica's state with its FFT plans. Not shareable across threads.
class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const SimConfig& config() const { return cfg_; }
  // Initial lattice field.
  std::vector<double> initial_field() const;
  // Exact heat flow P_{dt}, in place.
  void heat_step(std::vector<double>& field);
  // Heat flow P_{r} for arbitrary r >= 0, in place.
  void heat_flow(std::vector<double>& field, double r);
  // Mollified noise increment W for one step.
  void draw_noise(RngStream& rng, std::vector<double>& noise);
  // Full step: heat, then X <- X(1 + sqrt(Lambda) W). Returns the pre-noise field
  // and the noise through the optional outputs.
  void step(std::vector<double>& field, RngStream& rng, std::vector<double>* pre_noise = nullptr,
            std::vector<double>* noise = nullptr);
  const std::vector<NoiseOffset>& noise_offsets() const { return offsets_; }

 private:
  struct Plans;
  SimConfig cfg_;
  std::unique_ptr<Plans> plans_;
  std::vector<double> heat_multiplier_;
  std::vector<double> noise_filter_;
  std::vector<NoiseOffset> offsets_;
};

FieldSnapshot make_snapshot(const std::vector<double>& field, const SimConfig& cfg, double t);

// Per step callback: (step index k, time after the step, pre-noise field,
// noise increment, field after the step).
using StepObserver = std::function<void(int, double, const std::vector<double>&, const std::vector<double>&,
                                        const std::vector<double>&)>;
void run_replica(const SimConfig& cfg, int replica, const StepObserver& observer);

// Snapshots of every replica at cfg.snapshot_times (or only at T).
std::vector<std::vector<FieldSnapshot>> simulate(const SimConfig& cfg);

// E[X(x) X(x + offset)] across replicas. With spatial_average the product is
// averaged over all lattice translates first, valid for translation invariant data.
Estimate moment2_estimator(const std::vector<FieldSnapshot>& finals, Point2 x, Point2 offset,
                           bool spatial_average = false);

// Lambda * int_0^t int f(x, s) X(x, s)^2 dx ds, left Riemann sum over snapshot times.
Estimate nu_estimator(const std::vector<std::vector<FieldSnapshot>>& runs, const TestFunction& f, double t,
                      const SimConfig& cfg);
// Lambda * int_0^t int int g(x + d, x, s) X(x + d, s) X(x, s) C(d) dd dx ds with the lattice noise covariance C.
using TwoPointFunction = std::function<double(Point2, Point2, double)>;
Estimate mu_estimator(const std::vector<std::vector<FieldSnapshot>>& runs, const TwoPointFunction& g, double t,
                      const SimConfig& cfg);

struct DecompositionReport {
  Estimate I1, I2, I3, I4;
  Estimate combined;  // I1 + I2 - 2 I3 - 2 I4 per replica
  double lhs_deterministic = 0.0;
};

// Runs the replicas of cfg and evaluates the four terms of the squared mild
// form for the time-independent test function f(x) = bump(x).
DecompositionReport decomposition_report(const SimConfig& cfg, const GaussianBump& bump, int block_steps = 10);

}  // namespace critshe
