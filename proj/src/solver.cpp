#include "signfd/solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace signfd {

// --------------------------------------------------------------- SchemeConfig

void SchemeConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SchemeConfig: dt must be > 0");
  reg.validate();
  if (!(newton_tol > 0.0)) throw std::invalid_argument("SchemeConfig: newton_tol must be > 0");
  if (newton_max_iter < 1) throw std::invalid_argument("SchemeConfig: newton_max_iter must be >= 1");
  if (max_newton_backtracks < 0)
    throw std::invalid_argument("SchemeConfig: max_newton_backtracks must be >= 0");
  if (max_dt_halvings < 0) throw std::invalid_argument("SchemeConfig: max_dt_halvings must be >= 0");
  if (monitor_stride < 1) throw std::invalid_argument("SchemeConfig: monitor_stride must be >= 1");
  if (!(monitor_p >= 1.0)) throw std::invalid_argument("SchemeConfig: monitor_p must be >= 1");
}

double SchemeConfig::resolve_threshold(double x0_sup) const {
  if (extinction_threshold >= 0.0) return extinction_threshold;
  return 1e-8 * std::max(1.0, x0_sup);
}

// ------------------------------------------------------------ ImplicitStepper

struct ImplicitStepper::Impl {
  Eigen::SparseMatrix<double> J;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool pattern_ready = false;
  std::function<double(double)> phi;
  std::function<double(double)> dphi;
};

ImplicitStepper::ImplicitStepper(GridPtr g, RegParams reg, double newton_tol,
                                 int max_iter, int max_backtracks)
    : grid_(std::move(g)),
      reg_(reg),
      tol_(newton_tol),
      max_iter_(max_iter),
      max_backtracks_(max_backtracks),
      impl_(new Impl) {
  reg_.validate();
  double eps = reg_.eps, tau = reg_.tau;
  if (tau == 0.0) {
    impl_->phi = [eps](double r) { return phi_eps(r, eps); };
    impl_->dphi = [eps](double r) { return phi_eps_prime(r, eps); };
  } else {
    impl_->phi = mollify_phi(eps, tau);
    // derivative of the mollified phi: (phi' * bump) evaluated in closed form
    impl_->dphi = [eps, tau](double r) {
      if (std::abs(r) >= eps + tau) return 0.0;
      auto P = [](double v) {
        v = std::clamp(v, -1.0, 1.0);
        return 0.5 + (15.0 / 16.0) * (v - (2.0 / 3.0) * v * v * v + v * v * v * v * v / 5.0);
      };
      return (P((r + eps) / tau) - P((r - eps) / tau)) / eps;
    };
  }
  int m = grid_->num_interior();
  impl_->J.resize(m, m);
}

ImplicitStepper::~ImplicitStepper() = default;
ImplicitStepper::ImplicitStepper(ImplicitStepper&&) noexcept = default;

ImplicitStepper::Stats ImplicitStepper::solve(const GridFunction& W,
                                              const GridFunction* scale, double dtheta,
                                              GridFunction& Z) const {
  const auto& g = *grid_;
  const auto& slot = g.interior_slot();
  const auto& interior = g.interior_nodes();
  int m = g.num_interior();
  double ihx2 = 1.0 / (g.spacing(0) * g.spacing(0));
  double ihy2 = g.dim() == 2 ? 1.0 / (g.spacing(1) * g.spacing(1)) : 0.0;
  double delta = reg_.delta;

  // enforce the boundary convention on the iterate
  for (int node = 0; node < g.num_nodes(); ++node)
    if (slot[node] < 0) Z[node] = 0.0;

  auto stencil = [&](const GridFunction& u, int node, const std::array<int, 2>& ij) {
    double acc;
    if (g.dim() == 1) {
      acc = (u[node - 1] - 2.0 * u[node] + u[node + 1]) * ihx2;
    } else {
      acc = (u[g.node_of(ij[0] - 1, ij[1])] - 2.0 * u[node] + u[g.node_of(ij[0] + 1, ij[1])]) * ihx2 +
            (u[g.node_of(ij[0], ij[1] - 1)] - 2.0 * u[node] + u[g.node_of(ij[0], ij[1] + 1)]) * ihy2;
    }
    return acc;
  };

  GridFunction phiZ(Z.grid());
  auto residual = [&](const GridFunction& z, Eigen::VectorXd& R) {
    for (int node = 0; node < g.num_nodes(); ++node) phiZ[node] = impl_->phi(z[node]);
    double nrm = 0.0;
    for (int node : interior) {
      auto ij = g.multi_index(node);
      double s = scale ? (*scale)[node] : 1.0;
      double r = z[node] - W[node] -
                 dtheta * s * (stencil(phiZ, node, ij) + delta * stencil(z, node, ij));
      R[slot[node]] = r;
      nrm = std::max(nrm, std::abs(r));
    }
    return nrm;
  };

  Eigen::VectorXd R(m), Rtry(m);
  double res = residual(Z, R);
  Stats stats;
  stats.residual = res;
  if (res <= tol_) {
    stats.converged = true;
    return stats;
  }

  GridFunction Ztry(Z.grid());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(m) * (g.dim() == 1 ? 3 : 5));

  for (int it = 0; it < max_iter_; ++it) {
    // Jacobian: I - dtheta * S .* Lap o diag(phi'(Z) + delta)
    trip.clear();
    for (int node : interior) {
      int row = slot[node];
      auto ij = g.multi_index(node);
      double s = scale ? (*scale)[node] : 1.0;
      double diag_w = g.dim() == 1 ? 2.0 * ihx2 : 2.0 * (ihx2 + ihy2);
      trip.emplace_back(row, row,
                        1.0 + dtheta * s * diag_w * (impl_->dphi(Z[node]) + delta));
      auto couple = [&](int i, int j, double w) {
        int nb = g.node_of(i, j);
        if (slot[nb] >= 0)
          trip.emplace_back(row, slot[nb], -dtheta * s * w * (impl_->dphi(Z[nb]) + delta));
      };
      couple(ij[0] - 1, ij[1], ihx2);
      couple(ij[0] + 1, ij[1], ihx2);
      if (g.dim() == 2) {
        couple(ij[0], ij[1] - 1, ihy2);
        couple(ij[0], ij[1] + 1, ihy2);
      }
    }
    impl_->J.setFromTriplets(trip.begin(), trip.end());
    if (!impl_->pattern_ready) {
      impl_->lu.analyzePattern(impl_->J);
      impl_->pattern_ready = true;
    }
    impl_->lu.factorize(impl_->J);
    if (impl_->lu.info() != Eigen::Success) {
      stats.iters = it;
      stats.residual = res;
      return stats;  // singular Jacobian: let the caller shrink dt
    }
    Eigen::VectorXd upd = impl_->lu.solve(R);
    ++stats.iters;

    double lambda = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= max_backtracks_; ++bt, lambda *= 0.5) {
      Ztry = Z;
      for (int node : interior) Ztry[node] -= lambda * upd[slot[node]];
      double res_try = residual(Ztry, Rtry);
      if (res_try < res || res_try <= tol_) {
        Z = Ztry;
        R.swap(Rtry);
        res = res_try;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stats.residual = res;
      return stats;  // damping exhausted
    }
    if (res <= tol_) {
      stats.converged = true;
      stats.residual = res;
      return stats;
    }
  }
  stats.residual = res;
  return stats;
}

// ------------------------------------------------------------------- stepping

namespace {

GridFunction exp_field(const GridFunction& a) {
  return a.map([](double x) { return std::exp(x); });
}

void check_alignment(const NoiseBasis& basis, const BrownianPath& path,
                     const SchemeConfig& config) {
  if (basis.count() == 0) return;
  if (path.components() != basis.count())
    throw std::invalid_argument("solver: path component count does not match the basis");
  if (std::abs(path.dt() - config.dt) > 1e-9 * std::max(1.0, config.dt))
    throw std::invalid_argument("solver: path dt does not match the scheme dt");
}

// Advances W by dtheta with the frozen scale field, bisecting on Newton stalls.
struct Advancer {
  const ImplicitStepper& stepper;
  const GridFunction* mu_tilde;  // null for the direct chain
  int max_halvings;
  long* newton_iters;
  long* retries;
  double* last_residual;
  double* min_nodal;
  std::map<double, GridFunction>* decay_cache;

  void apply_decay(GridFunction& Y, double dtheta) const {
    if (!mu_tilde) return;
    auto it = decay_cache->find(dtheta);
    if (it == decay_cache->end()) {
      GridFunction d = mu_tilde->map([dtheta](double m) { return std::exp(-m * dtheta); });
      it = decay_cache->emplace(dtheta, std::move(d)).first;
    }
    const GridFunction& d = it->second;
    for (int i = 0; i < Y.size(); ++i) Y[i] *= d[i];
  }

  void advance(GridFunction& Y, const GridFunction* scale, double dtheta, int depth,
               double t_at) const {
    GridFunction Z = Y;
    auto stats = stepper.solve(Y, scale, dtheta, Z);
    *newton_iters += stats.iters;
    if (stats.converged) {
      apply_decay(Z, dtheta);
      Y = std::move(Z);
      *last_residual = stats.residual;
      double mn = min_value(Y);
      if (mn < *min_nodal) *min_nodal = mn;
      return;
    }
    if (depth >= max_halvings) {
      std::ostringstream os;
      os << "solver: Newton stalled at t=" << t_at << " (residual " << stats.residual
         << " after " << stats.iters << " iterations and " << depth << " dt halvings)";
      throw std::runtime_error(os.str());
    }
    ++*retries;
    advance(Y, scale, dtheta / 2.0, depth + 1, t_at);
    advance(Y, scale, dtheta / 2.0, depth + 1, t_at + dtheta / 2.0);
  }
};

}  // namespace

SolverState step_Y(const SolverState& state, const NoiseBasis& basis,
                   const BrownianPath& path, const SchemeConfig& config) {
  config.validate();
  check_alignment(basis, path, config);
  ImplicitStepper stepper(state.Y.grid(), config.reg, config.newton_tol,
                          config.newton_max_iter, config.max_newton_backtracks);
  GridFunction S = basis.count() > 0 ? exp_field(mu_at(basis, path, state.step))
                                     : GridFunction(state.Y.grid(), 1.0);
  GridFunction Z = state.Y;
  auto stats = stepper.solve(state.Y, &S, config.dt, Z);
  if (!stats.converged) {
    std::ostringstream os;
    os << "step_Y: Newton stalled at t=" << state.t << " (residual " << stats.residual
       << ")";
    throw std::runtime_error(os.str());
  }
  const GridFunction& mt = basis.mu_tilde();
  SolverState next;
  next.t = state.t + config.dt;
  next.step = state.step + 1;
  next.Y = std::move(Z);
  for (int i = 0; i < next.Y.size(); ++i) next.Y[i] *= std::exp(-mt[i] * config.dt);
  auto phi = mollify_phi(config.reg.eps, config.reg.tau);
  next.eta = next.Y.map(phi);
  return next;
}

bool detect_extinction(const GridFunction& Y, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("detect_extinction: threshold must be >= 0");
  return lp_norm(Y, 1.0) <= threshold * Y.grid()->measure();
}

namespace {

// Shared driver for both chains. The `advance_full` callback moves the state
// forward by one parent step n -> n+1.
template <typename AdvanceFn>
RunResult run_chain(const GridFunction& x0, const NoiseBasis& basis,
                    const BrownianPath& path, const SchemeConfig& config, double horizon,
                    bool detect, AdvanceFn&& advance_full) {
  config.validate();
  check_alignment(basis, path, config);
  if (!x0.grid()->same_layout(*basis.grid()))
    throw std::invalid_argument("solver: initial data grid does not match the basis");
  if (!(horizon > 0.0)) throw std::invalid_argument("solver: horizon must be > 0");
  if (config.require_nonnegative && min_value(x0) < 0.0)
    throw std::invalid_argument("solver: initial data has a negative node");
  int nsteps = static_cast<int>(std::floor(horizon / config.dt + 1e-9));
  if (nsteps < 1) throw std::invalid_argument("solver: horizon shorter than dt");
  if (basis.count() > 0 && path.num_steps() < nsteps)
    throw std::invalid_argument("solver: path horizon shorter than the run horizon");

  RunResult run;
  run.config = config;
  run.horizon = nsteps * config.dt;
  run.threshold = config.resolve_threshold(sup_abs(x0));
  run.min_nodal_Y = min_value(x0);

  PoissonSolver ps(x0.grid());
  const GridFunction& mt = basis.mu_tilde();
  double p = config.monitor_p;

  GridFunction Y = x0;
  // boundary convention
  for (int node = 0; node < Y.size(); ++node)
    if (x0.grid()->is_boundary(node)) Y[node] = 0.0;
  double last_residual = 0.0;

  auto record = [&](int step, double t) {
    run.times.push_back(t);
    run.l1.push_back(lp_norm(Y, 1.0));
    run.l2.push_back(lp_norm(Y, 2.0));
    GridFunction w = mt.map([p, t](double m) { return std::exp(p * m * t); });
    run.lp_weighted.push_back(weighted_lp_norm(Y, p, w));
    run.hminus1.push_back(hminus1_norm(Y, ps));
    run.newton_residual.push_back(last_residual);
    if (config.store_snapshots) run.snapshots.push_back({step, t, Y});
  };

  record(0, 0.0);
  int absorption_left = -1;  // >= 0 once extinct: remaining verification steps
  double post_max_l1 = 0.0;
  int n = 0;
  for (; n < nsteps; ++n) {
    double t_next = (n + 1) * config.dt;
    advance_full(Y, n, &last_residual);
    ++run.total_steps;
    double mn = min_value(Y);
    if (mn < run.min_nodal_Y) run.min_nodal_Y = mn;

    bool at_end = (n + 1 == nsteps);
    double l1_now = lp_norm(Y, 1.0);
    if (detect && absorption_left < 0 && l1_now <= run.threshold * x0.grid()->measure()) {
      run.extinction_time = t_next;
      absorption_left = 10;
      record(n + 1, t_next);
      continue;
    }
    if (absorption_left > 0) {
      --absorption_left;
      post_max_l1 = std::max(post_max_l1, l1_now);
      if (l1_now > run.threshold * x0.grid()->measure()) run.absorption_violated = true;
      record(n + 1, t_next);
      if (absorption_left == 0) break;
      continue;
    }
    if ((n + 1) % config.monitor_stride == 0 || at_end) record(n + 1, t_next);
  }
  run.post_extinction_max_l1 = post_max_l1;
  run.final_state.t = run.times.back();
  run.final_state.step = n >= nsteps ? nsteps : n + 1;
  run.final_state.Y = Y;
  auto phi = mollify_phi(config.reg.eps, config.reg.tau);
  run.final_state.eta = Y.map(phi);
  return run;
}

}  // namespace

RunResult run_Y(const GridFunction& x0, const NoiseBasis& basis, const BrownianPath& path,
                const SchemeConfig& config, double horizon) {
  ImplicitStepper stepper(x0.grid(), config.reg, config.newton_tol,
                          config.newton_max_iter, config.max_newton_backtracks);
  std::map<double, GridFunction> decay_cache;
  long newton_iters = 0, retries = 0;
  double min_nodal = std::numeric_limits<double>::infinity();
  const GridFunction& mt = basis.mu_tilde();
  Advancer adv{stepper, &mt, config.max_dt_halvings, &newton_iters, &retries,
               nullptr, &min_nodal, &decay_cache};
  auto advance_full = [&](GridFunction& Y, int n, double* last_residual) {
    GridFunction S = basis.count() > 0 ? exp_field(mu_at(basis, path, n))
                                       : GridFunction(Y.grid(), 1.0);
    adv.last_residual = last_residual;
    adv.advance(Y, &S, config.dt, 0, n * config.dt);
  };
  RunResult run = run_chain(x0, basis, path, config,
                            config.extinction_detection, advance_full);
  run.total_newton_iters = newton_iters;
  run.dt_retries = retries;
  if (min_nodal < run.min_nodal_Y) run.min_nodal_Y = min_nodal;
  return run;
}

GridFunction transform_to_X(const GridFunction& Y, const GridFunction& mu) {
  if (Y.size() != mu.size())
    throw std::invalid_argument("transform_to_X: field sizes do not match");
  GridFunction X(Y.grid());
  for (int i = 0; i < Y.size(); ++i) X[i] = std::exp(-mu[i]) * Y[i];
  return X;
}

SolverState step_X_ito(const SolverState& state, const NoiseBasis& basis,
                       const BrownianPath& path, const SchemeConfig& config) {
  config.validate();
  check_alignment(basis, path, config);
  ImplicitStepper stepper(state.Y.grid(), config.reg, config.newton_tol,
                          config.newton_max_iter, config.max_newton_backtracks);
  GridFunction Z = state.Y;
  if (config.drift_enabled) {
    auto stats = stepper.solve(state.Y, nullptr, config.dt, Z);
    if (!stats.converged) {
      std::ostringstream os;
      os << "step_X_ito: Newton stalled at t=" << state.t << " (residual "
         << stats.residual << ")";
      throw std::runtime_error(os.str());
    }
  }
  // explicit Ito noise factor after the drift, using this step's increments
  SolverState next;
  next.t = state.t + config.dt;
  next.step = state.step + 1;
  next.Y = std::move(Z);
  for (int k = 0; k < basis.count(); ++k) {
    double db = path.value(state.step + 1, k) - path.value(state.step, k);
    const GridFunction& f = basis.component(k);
    for (int i = 0; i < next.Y.size(); ++i) next.Y[i] += f[i] * db * next.Y[i];
  }
  auto phi = mollify_phi(config.reg.eps, config.reg.tau);
  next.eta = next.Y.map(phi);
  return next;
}

RunResult run_X(const GridFunction& x0, const NoiseBasis& basis, const BrownianPath& path,
                const SchemeConfig& config, double horizon) {
  ImplicitStepper stepper(x0.grid(), config.reg, config.newton_tol,
                          config.newton_max_iter, config.max_newton_backtracks);
  long newton_iters = 0;
  auto advance_full = [&](GridFunction& X, int n, double* last_residual) {
    if (config.drift_enabled) {
      GridFunction Z = X;
      auto stats = stepper.solve(X, nullptr, config.dt, Z);
      newton_iters += stats.iters;
      if (!stats.converged) {
        std::ostringstream os;
        os << "run_X: Newton stalled at t=" << n * config.dt << " (residual "
           << stats.residual << ")";
        throw std::runtime_error(os.str());
      }
      *last_residual = stats.residual;
      X = std::move(Z);
    }
    for (int k = 0; k < basis.count(); ++k) {
      double db = path.value(n + 1, k) - path.value(n, k);
      const GridFunction& f = basis.component(k);
      for (int i = 0; i < X.size(); ++i) X[i] += f[i] * db * X[i];
    }
  };
  RunResult run = run_chain(x0, basis, path, config, false, advance_full);
  run.total_newton_iters = newton_iters;
  return run;
}

ConsistencyReport consistency_check_transformation(const GridFunction& x0,
                                                   const NoiseBasis& basis,
                                                   const BrownianPath& path,
                                                   const SchemeConfig& config,
                                                   double horizon) {
  SchemeConfig c = config;
  c.store_snapshots = true;
  c.extinction_detection = false;
  RunResult ry = run_Y(x0, basis, path, c, horizon);
  RunResult rx = run_X(x0, basis, path, c, horizon);
  if (ry.snapshots.size() != rx.snapshots.size())
    throw std::runtime_error("consistency check: checkpoint mismatch between chains");
  PoissonSolver ps(x0.grid());
  ConsistencyReport rep;
  for (size_t i = 0; i < ry.snapshots.size(); ++i) {
    const auto& sy = ry.snapshots[i];
    const auto& sx = rx.snapshots[i];
    GridFunction mu = basis.count() > 0 ? mu_at(basis, path, sy.step)
                                        : GridFunction(x0.grid(), 0.0);
    GridFunction Xy = transform_to_X(sy.Y, mu);
    GridFunction diff(x0.grid());
    for (int n = 0; n < diff.size(); ++n) diff[n] = sx.Y[n] - Xy[n];
    double d = hminus1_norm(diff, ps);
    rep.times.push_back(sy.t);
    rep.discrepancy.push_back(d);
    rep.max_discrepancy = std::max(rep.max_discrepancy, d);
  }
  return rep;
}

double positivity_monitor(const RunResult& run) { return run.min_nodal_Y; }

ContractionReport contraction_check(const GridFunction& x0_a, const GridFunction& x0_b,
                                    const NoiseBasis& basis, const BrownianPath& path,
                                    const SchemeConfig& config, double horizon) {
  SchemeConfig c = config;
  c.store_snapshots = true;
  c.extinction_detection = false;
  c.require_nonnegative = false;
  RunResult ra = run_Y(x0_a, basis, path, c, horizon);
  RunResult rb = run_Y(x0_b, basis, path, c, horizon);
  if (ra.snapshots.size() != rb.snapshots.size())
    throw std::runtime_error("contraction check: checkpoint mismatch between runs");
  PoissonSolver ps(x0_a.grid());
  ContractionReport rep;
  GridFunction d0(x0_a.grid());
  for (int i = 0; i < d0.size(); ++i) d0[i] = x0_a[i] - x0_b[i];
  for (int node = 0; node < d0.size(); ++node)
    if (x0_a.grid()->is_boundary(node)) d0[node] = 0.0;
  rep.initial_distance = hminus1_norm(d0, ps);
  for (size_t i = 0; i < ra.snapshots.size(); ++i) {
    GridFunction diff(x0_a.grid());
    for (int n = 0; n < diff.size(); ++n) diff[n] = ra.snapshots[i].Y[n] - rb.snapshots[i].Y[n];
    rep.times.push_back(ra.snapshots[i].t);
    rep.distance.push_back(hminus1_norm(diff, ps));
  }
  rep.c_hat = 0.0;
  if (rep.initial_distance > 1e-300) {
    for (size_t i = 0; i < rep.times.size(); ++i) {
      double t = rep.times[i];
      if (t <= 0.0 || rep.distance[i] <= 0.0) continue;
      double c = 2.0 * std::log(rep.distance[i] / rep.initial_distance) / t;
      rep.c_hat = std::max(rep.c_hat, c);
    }
  }
  return rep;
}

double time_change_homogeneous(const NoiseBasis& basis, const BrownianPath& path,
                               double t) {
  std::vector<double> c(basis.count());
  for (int k = 0; k < basis.count(); ++k) {
    const GridFunction& f = basis.component(k);
    double lo = f[0], hi = f[0];
    for (int i = 0; i < f.size(); ++i) {
      lo = std::min(lo, f[i]);
      hi = std::max(hi, f[i]);
    }
    if (hi - lo > 1e-12 * std::max(1.0, std::abs(hi)))
      throw std::invalid_argument(
          "time_change_homogeneous: noise component varies in space");
    c[k] = f[0];
  }
  double mt = 0.0;
  for (double ck : c) mt += 0.5 * ck * ck;
  int end = basis.count() > 0 ? path.step_of_time(t)
                              : static_cast<int>(std::lround(t / path.dt()));
  auto integrand = [&](int step) {
    double mu = 0.0;
    for (int k = 0; k < basis.count(); ++k) mu -= c[k] * path.value(step, k);
    return std::exp(mu + mt * step * path.dt());
  };
  double F = 0.0;
  for (int s = 0; s < end; ++s) F += 0.5 * (integrand(s) + integrand(s + 1)) * path.dt();
  return F;
}

void write_run_series_csv(const RunResult& run, const std::string& path,
                          const std::vector<ResidualColumn>& extra) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_run_series_csv: cannot open " + path);
  os << "t,l1,l2,lp_weighted,hminus1,residual_newton";
  for (const auto& col : extra) {
    os << ",residual_" << col.name;
    if (col.values.size() != run.times.size())
      throw std::invalid_argument("write_run_series_csv: residual column '" + col.name +
                                  "' length mismatch");
  }
  os << "\n";
  char buf[64];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (size_t i = 0; i < run.times.size(); ++i) {
    emit(run.times[i]);
    os << ",";
    emit(run.l1[i]);
    os << ",";
    emit(run.l2[i]);
    os << ",";
    emit(run.lp_weighted[i]);
    os << ",";
    emit(run.hminus1[i]);
    os << ",";
    emit(run.newton_residual[i]);
    for (const auto& col : extra) {
      os << ",";
      emit(col.values[i]);
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("write_run_series_csv: write failed for " + path);
}

}  // namespace signfd
