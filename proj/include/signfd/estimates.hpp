#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "signfd/grid.hpp"
#include "signfd/noise.hpp"
#include "signfd/regularize.hpp"
#include "signfd/solver.hpp"

namespace signfd {

// Exponent bookkeeping for the extinction bound. From (d, p):
//   p_tilde = (p + d/2)/2,  tau_exp = p - p_tilde,  p_tilde_star = conjugate,
//   alpha = 2*p_tilde_star/q with q = sobolev_q(d) (alpha = 0 at q = inf, d=1).
struct ExtinctionBoundParams {
  int d = 1;
  double p = 2.0;
  double q = 0.0;
  double p_tilde = 0.0;
  double tau_exp = 0.0;
  double p_tilde_star = 0.0;
  double alpha = 0.0;
  double C_w = 0.0;    // Torricelli sup
  double C1_hat = 0.0; // empirical integrability constant (<= 0: estimate it)
  double t0_hat = 0.0;

  static ExtinctionBoundParams make(int d, double p, double C_w, double C1_hat = 0.0,
                                    double t0_hat = 0.0, double q_two_dim = 6.0);
};

// h1(t, p) = sup over interior nodes of |Lap exp(mu_t + p*mu_tilde*t)|.
// Exponential overflow returns +inf.
double h1(const NoiseBasis& basis, const BrownianPath& path, int step, double p);

// Gronwall envelope of the weighted-Lp mass at path step `step`:
//   C1*C_w^p * ( e^{delta*int_0^r h1(s,p+tau)ds} * x
//              + |O|*eps^{p+tau-1} * int_0^r e^{delta*int_s^r h1} h1(s,p+tau) ds )^{p/(p+tau)}
// where x = int |x0|^{p+tau} dxi. Collapses to C1*C_w^p*x^{p/(p+tau)} at eps=delta=0.
double h2(const NoiseBasis& basis, const BrownianPath& path, int step, double p,
          double tau, const RegParams& reg, double x0_norm_pow, double C1, double C_w);

// Dissipation rate floor along a flat interval anchored at s_step:
//   d = 1 :  inf_xi e^{mu_r - mu_s} * eta_sup
//   d >= 2:  inf_xi e^{mu_r - mu_s} / h2(r, p_tilde, tau_exp, ...)^{2 p_tilde_star/(p_tilde q)}
double g_rate(const ExtinctionBoundParams& params, const NoiseBasis& basis,
              const BrownianPath& path, int s_step, int r_step, const RegParams& reg,
              double x0_norm_pow, double eta_sup);

// Largest eps such that any field nu with C^2 bound eps * sum_k c2(f_k) keeps
// the weight expansion -1 + 2|grad nu||grad w| + w(|grad nu|^2 + |Lap nu|)
// below -margin (bisection; +inf when the basis is empty).
double flatness_threshold(const NoiseBasis& basis, const TorricelliWeight& tw,
                          double margin = 0.05);

// B(t) = ( (A^{1-alpha} - t (1-alpha) g_floor)+ )^{1/(1-alpha)} with
// A = C1_hat * C_w * ||x0||_p; hits zero at L_star = A^{1-alpha}/((1-alpha) g_floor).
struct ExtinctionBound {
  double A = 0.0;
  double alpha = 0.0;
  double g_floor = 0.0;
  double L_star = 0.0;
  double operator()(double t) const;
};
ExtinctionBound extinction_upper_bound(const ExtinctionBoundParams& params, double x0_lp,
                                       std::optional<double> g_floor_override = {});

// Common verdict container for the inequality monitors: residual = LHS - RHS
// per checkpoint; pass iff the worst residual is <= tolerance.
struct EnergyReport {
  std::string name;
  std::vector<double> times;
  std::vector<double> residuals;
  double worst_violation = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  void finalize();
};

// int e^{p mu_tilde t}|Y_t|^p <= int |x0|^p + Slack(eps, delta, t) + tol with
// Slack = eps^{p-1}|O| int_0^t h1(r,p) dr + delta int_0^t h1(r,p) int|Y_r|^p dr.
EnergyReport monitor_weighted_lp(const RunResult& run, double p, const NoiseBasis& basis,
                                 const BrownianPath& path, double tol = 1e-6);

// Energy inequality on [t_from, t_to] with weight rho:
//   int psi(Y_v) rho + int_u^v int rho e^{mu}|grad eta|^2
//     <= int psi(Y_u) rho + 1/2 int_u^v int eta^2 Lap(rho e^{mu})
//        + delta int_u^v int psi(Y) Lap(rho e^{mu}) + tol_rate*(v-u).
EnergyReport monitor_energy_L1(const RunResult& run, const NoiseBasis& basis,
                               const BrownianPath& path, const GridFunction& rho,
                               double t_from, double t_to, double tol_rate);

// Pathwise bound X_t = e^{-mu_t} Y_t <= exp(-mu_t - mu_tilde t) * x0_sup + tol,
// nodal, at every checkpoint.
EnergyReport supersolution_check(const RunResult& run, const NoiseBasis& basis,
                                 const BrownianPath& path, double x0_sup,
                                 double tol = 1e-6);

// Closed form of dh/dt = -g(t) ((h-K)+)^alpha, h(0) = q0 >= K >= 0:
//   h(t) = ( ((q0-K)^{1-alpha} - (1-alpha) G(t))+ )^{1/(1-alpha)} + K,
// G(t) = int_0^t g. alpha in [0,1).
double ode_h_closed_form(double q0, double alpha, double K,
                         const std::function<double(double)>& g_integral, double t);

// RK4 reference trajectory for the same ODE, sampled at multiples of dt.
std::vector<double> ode_bound_oracle(double q0, double alpha, double K,
                                     const std::function<double(double)>& g,
                                     double t_end, double dt);

// Empirical integrability constant: 2x the max over t_grid of
// I_{p'}(t)^{tau/(p_tilde+tau)} with p' = p_tilde (p_tilde+tau)/tau; t0 is the
// argmax time. Returns (1, 0) for a deterministic basis.
struct C1Estimate {
  double C1_hat = 1.0;
  double t0_hat = 0.0;
  bool overflow = false;
};
C1Estimate estimate_c1_t0(const NoiseBasis& basis, const BrownianPath& path,
                          double p_tilde, double tau, const std::vector<double>& t_grid);

// Full pipeline: flatness threshold -> flat interval -> decay curve
// W(t) = int psi_eps(Y_t) w e^{-mu_s} vs B(t-s) + K_eps -> verdict.
struct ExtinctionPrediction {
  enum class Verdict { confirmed, bound_violated, inconclusive };
  Verdict verdict = Verdict::inconclusive;
  std::optional<FlatInterval> interval;
  double eps_star = 0.0;
  double K_eps = 0.0;  // finite-eps offset carried by the monitored curve
  ExtinctionBound bound;
  ExtinctionBoundParams params;  // with the resolved C1_hat / t0_hat
  EnergyReport curve;            // name "extinction_bound"
  std::optional<double> tau0;
  std::string message;
};
ExtinctionPrediction predict_and_verify_extinction(const RunResult& run,
                                                   const NoiseBasis& basis,
                                                   const BrownianPath& path,
                                                   ExtinctionBoundParams params,
                                                   double curve_tol = 1e-4);

}  // namespace signfd
