#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "critshe/dbg.hpp"
#include "critshe/mollifier.hpp"

namespace critshe {

// Brownian path settings shared by every Feynman-Kac estimator below.
struct PathConfig {
  long long n_paths = 10000;
  double substep = 0.0;  // must resolve the interaction: substep <= eps^2 / 10
  double t = 1.0;
  CriticalParams params;
  std::uint64_t seed = 1;
  std::shared_ptr<const PhiKernel> phi = reference_phi();
  // Multiplies the coupling inside the exponent only; 0 switches the interaction off.
  double exponent_scale = 1.0;
  // Estimators of a single relative motion draw it with the drift of the
  // interaction's ground state and carry the exact likelihood ratio; the plain
  // exponential weight has a variance growing like e^{c t / eps}.
  bool guided = true;

  void validate() const;  // throws GateViolation
};

// Substep eps^2 / 10, the coarsest the gate admits.
PathConfig make_path_config(double eps, double lambda, double t, long long n_paths, std::uint64_t seed,
                            std::shared_ptr<const PhiKernel> phi = reference_phi());

struct MomentRequest {
  std::vector<Point2> points;  // 1 to 4 starting points
  double t = 1.0;
  InitialData x0 = InitialData::constant(1.0);
};

// E[exp{Lambda sum_{i<j} int_0^t phi_eps(B^j - B^i)} prod X0(B^i_t)].
Estimate n_point_moment(const MomentRequest& req, const PathConfig& cfg);

// E_C[X0(x1 + Z - d) X0(x2 + Z + d)] with Z ~ N(0, (t/2) I): the centre of mass
// of two Brownian motions integrated out, d the relative displacement over sqrt 2.
double pair_terminal_factor(const InitialData& x0, Point2 x1, Point2 x2, Point2 d, double t);

// Lambda E[exp{Lambda int varphi_eps(W)} F(W_t)] for the relative motion W of the
// pair started at x and x + offset, with the centre of mass integrated out.
Estimate pair_functional(Point2 x, Point2 offset, double t, const InitialData& x0, const PathConfig& cfg);

struct FlaggedEstimate {
  Estimate estimate;
  bool low_confidence = false;  // tau far below eps^2, where the variance explodes
};

// Lambda^2 int phi(x) E_{eps x / sqrt 2}[exp{Lambda int_0^tau varphi_eps(W)} varphi_eps(W_tau)] dx,
// with the last substep integrated exactly against the Gaussian kernel.
FlaggedEstimate s_bar_eps(double tau, const PathConfig& cfg);
// Same quantity with the coupling removed from the exponent, by deterministic quadrature.
double s_bar_eps_free(double tau, const CriticalParams& params, const PhiKernel& phi);
// int_0^inf e^{-q tau} s_bar(tau) dtau via the pathwise identity
// Lambda varphi E_tau = dE_tau / dtau, truncated at the returned horizon.
struct LaplaceEstimate {
  Estimate estimate;
  double horizon = 0.0;
};
LaplaceEstimate S_eps(double q, const PathConfig& cfg);
// The same Laplace transform without sampling: u = E[int e^{-q tau} varphi_eps(W) E_tau dtau]
// solves the radial equation (q - Delta/2 - Lambda varphi_eps) u = varphi_eps, and the
// transform is Lambda^2 int phi(x) u(eps x / sqrt 2) dx.
double S_eps_resolvent(double q, const CriticalParams& params, const PhiKernel& phi);
// Energy E of the bound state (Delta/2 + coupling varphi_eps) psi = E psi; the
// transform above has its pole at q = E when coupling = Lambda.
double bound_state_energy(double coupling, double eps, const PhiKernel& phi);

struct AprioriCheck {
  Estimate value;  // Lambda (E_0[exp{Lambda int_0^t varphi_eps(W)}] - 1)
  double bound = 0.0;
};
// Frozen constants of the bound C |Lambda| [1 + log+(t / eps^2)] e^{q t}.
struct AprioriConstants {
  double C = 1.0;
  double q_over_beta = 2.0;
};
AprioriCheck apriori_growth_check(double t, const PathConfig& cfg, const AprioriConstants& k = {});

// int_{(0,T)^k} prod_j 1 / (2 s_j + s_{j-1}) ds_1..ds_k. Deterministic product
// quadrature for k <= 4, Monte Carlo for 5 <= k <= 8, refused above.
double iterated_integral(int k, double s0, double T);
Estimate iterated_integral_mc(int k, double s0, double T, long long n_samples, std::uint64_t seed);

// Rates that are constant on time pieces: rates[p][i] on [breaks[p], breaks[p+1]).
struct RateTable {
  std::vector<double> breaks;
  std::vector<std::vector<double>> rates;
  void validate() const;
};
struct ExpansionCheck {
  std::vector<double> truncations;  // index m: terms with at most m blocks
  double exact = 0.0;
};
ExpansionCheck exp_expansion_check(int m_max, const RateTable& table);

}  // namespace critshe
