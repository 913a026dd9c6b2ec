#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "signfd/grid.hpp"
#include "signfd/noise.hpp"
#include "signfd/regularize.hpp"

namespace signfd {

// Configuration of the implicit transformed-equation chain and its monitors.
struct SchemeConfig {
  double dt = 1e-3;
  RegParams reg;
  double newton_tol = 1e-11;      // sup-norm residual target of the implicit solve
  int newton_max_iter = 50;
  int max_newton_backtracks = 20;  // halvings of the Newton update per iteration
  int max_dt_halvings = 5;         // substep bisections before giving up
  double extinction_threshold = -1.0;  // < 0: resolved to 1e-8*max(1, sup|x0|)
  int monitor_stride = 1;          // checkpoint every this many steps
  bool store_snapshots = true;     // keep nodal states at checkpoints
  bool require_nonnegative = true; // reject initial data with negative nodes
  bool drift_enabled = true;       // noise-only stepping when false (diagnostics)
  bool extinction_detection = true;  // stop at threshold crossing + 10-step check
  double monitor_p = 2.0;          // exponent of the recorded weighted-Lp series

  void validate() const;
  double resolve_threshold(double x0_sup) const;
};

struct SolverState {
  double t = 0.0;
  int step = 0;
  GridFunction Y;    // transformed state, zero on the boundary
  GridFunction eta;  // phi_eps(Y), the monitored selection of the sign graph
};

struct Checkpoint {
  int step = 0;
  double t = 0.0;
  GridFunction Y;
};

struct RunResult {
  std::vector<double> times;
  std::vector<double> l1, l2, lp_weighted, hminus1;
  std::vector<double> newton_residual;  // accepted residual at each checkpoint
  std::vector<Checkpoint> snapshots;    // filled when store_snapshots
  std::optional<double> extinction_time;
  bool absorption_violated = false;  // state re-crossed the threshold after detection
  double post_extinction_max_l1 = 0.0;  // largest L1 seen during the 10-step check
  double min_nodal_Y = 0.0;          // global minimum over all steps (positivity)
  SolverState final_state;
  SchemeConfig config;  // resolved configuration actually used
  double horizon = 0.0;
  double threshold = 0.0;  // resolved extinction threshold
  long total_steps = 0;
  long total_newton_iters = 0;
  long dt_retries = 0;
};

// Damped-Newton kernel for the backward-Euler system
//   Z - W - dtheta * S .* (Lap phi(Z) + delta * Lap Z) = 0,   Z = 0 on the boundary,
// shared by the transformed chain (S = e^{mu}) and the direct chain (S = 1).
class ImplicitStepper {
 public:
  ImplicitStepper(GridPtr g, RegParams reg, double newton_tol, int max_iter,
                  int max_backtracks);
  ~ImplicitStepper();
  ImplicitStepper(ImplicitStepper&&) noexcept;

  struct Stats {
    int iters = 0;
    double residual = 0.0;
    bool converged = false;
  };
  // Solves for Z in place (Z is the initial guess on entry). scale may be null
  // (treated as 1). Returns convergence stats; does not throw on stall.
  Stats solve(const GridFunction& W, const GridFunction* scale, double dtheta,
              GridFunction& Z) const;

  const RegParams& reg() const { return reg_; }

 private:
  GridPtr grid_;
  RegParams reg_;
  double tol_;
  int max_iter_;
  int max_backtracks_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// One accepted backward-Euler step of the transformed chain at the path step
// state.step (mu frozen at the left endpoint, the Ito-correction decay applied
// as an exact integrating factor). Throws on Newton stall.
SolverState step_Y(const SolverState& state, const NoiseBasis& basis,
                   const BrownianPath& path, const SchemeConfig& config);

// Full trajectory from x0 to the horizon (or extinction + a 10-step absorption
// check). Substeps with up to max_dt_halvings bisections when Newton stalls;
// throws with a diagnostic when that is exhausted.
RunResult run_Y(const GridFunction& x0, const NoiseBasis& basis,
                const BrownianPath& path, const SchemeConfig& config, double horizon);

// X = e^{-mu} Y, nodal.
GridFunction transform_to_X(const GridFunction& Y, const GridFunction& mu);

// One step of the direct chain: implicit phi-drift (same Newton kernel, S = 1),
// then the explicit Ito factor X <- X * (1 + sum_k f_k dbeta^k), in that order.
SolverState step_X_ito(const SolverState& state, const NoiseBasis& basis,
                       const BrownianPath& path, const SchemeConfig& config);

// Direct-chain trajectory with the same checkpointing as run_Y (no extinction
// detection; used for consistency and martingale diagnostics).
RunResult run_X(const GridFunction& x0, const NoiseBasis& basis,
                const BrownianPath& path, const SchemeConfig& config, double horizon);

// H^{-1} distance between the direct chain and the transformed chain mapped
// back through X = e^{-mu} Y, at every checkpoint.
struct ConsistencyReport {
  std::vector<double> times;
  std::vector<double> discrepancy;
  double max_discrepancy = 0.0;
};
ConsistencyReport consistency_check_transformation(const GridFunction& x0,
                                                   const NoiseBasis& basis,
                                                   const BrownianPath& path,
                                                   const SchemeConfig& config,
                                                   double horizon);

// L1(Y) <= threshold * |O|.
bool detect_extinction(const GridFunction& Y, double threshold);

// Global minimum of the nodal state over the run.
double positivity_monitor(const RunResult& run);

// Smallest C_hat >= 0 with ||Ya_t - Yb_t||_{H^-1}^2 <= e^{C_hat t} ||a-b||_{H^-1}^2
// along two runs driven by the same path.
struct ContractionReport {
  double c_hat = 0.0;
  double initial_distance = 0.0;
  std::vector<double> times;
  std::vector<double> distance;
};
ContractionReport contraction_check(const GridFunction& x0_a, const GridFunction& x0_b,
                                    const NoiseBasis& basis, const BrownianPath& path,
                                    const SchemeConfig& config, double horizon);

// F(t) = int_0^t exp(mu_r + mu_tilde r) dr for spatially constant bases
// (trapezoid on the path grid; t must align with it). Throws if any component
// varies in space.
double time_change_homogeneous(const NoiseBasis& basis, const BrownianPath& path,
                               double t);

// Series CSV (t, norms, newton residual + any attached inequality residuals).
struct ResidualColumn {
  std::string name;                // emitted as residual_<name>
  std::vector<double> values;      // one per checkpoint
};
void write_run_series_csv(const RunResult& run, const std::string& path,
                          const std::vector<ResidualColumn>& extra = {});

}  // namespace signfd
