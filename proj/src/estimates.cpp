#include "signfd/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace signfd {

static constexpr double kInf = std::numeric_limits<double>::infinity();

// ----------------------------------------------------- ExtinctionBoundParams

ExtinctionBoundParams ExtinctionBoundParams::make(int d, double p, double C_w,
                                                  double C1_hat, double t0_hat,
                                                  double q_two_dim) {
  if (d < 1) throw std::invalid_argument("ExtinctionBoundParams: d must be >= 1");
  ExtinctionBoundParams out;
  out.d = d;
  out.p = p;
  out.p_tilde = (p + d / 2.0) / 2.0;
  out.tau_exp = p - out.p_tilde;
  if (!(out.tau_exp > 0.0))
    throw std::invalid_argument("ExtinctionBoundParams: need p > d/2");
  if (!(out.p_tilde > 1.0))
    throw std::invalid_argument("ExtinctionBoundParams: need p_tilde > 1 (raise p)");
  out.p_tilde_star = out.p_tilde / (out.p_tilde - 1.0);
  out.q = sobolev_q(d, q_two_dim);
  out.alpha = std::isinf(out.q) ? 0.0 : 2.0 * out.p_tilde_star / out.q;
  if (d >= 2 && !(out.alpha > 0.0 && out.alpha < 1.0)) {
    std::ostringstream os;
    os << "ExtinctionBoundParams: alpha = " << out.alpha
       << " outside (0,1); raise p (d = " << d << ", q = " << out.q << ")";
    throw std::invalid_argument(os.str());
  }
  out.C_w = C_w;
  out.C1_hat = C1_hat;
  out.t0_hat = t0_hat;
  return out;
}

// -------------------------------------------------------------------- h1, h2

double h1(const NoiseBasis& basis, const BrownianPath& path, int step, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("h1: p must be > 0");
  const auto& g = *basis.grid();
  double t = step * path.dt();
  GridFunction mu = basis.count() > 0 ? mu_at(basis, path, step)
                                      : GridFunction(basis.grid(), 0.0);
  const GridFunction& mt = basis.mu_tilde();
  GridFunction E(basis.grid());
  for (int i = 0; i < E.size(); ++i) {
    double arg = mu[i] + p * mt[i] * t;
    if (arg > 700.0) return kInf;
    E[i] = std::exp(arg);
  }
  GridFunction lap = laplacian_apply(E);
  double sup = 0.0;
  for (int node : g.interior_nodes()) sup = std::max(sup, std::abs(lap[node]));
  return sup;
}

double h2(const NoiseBasis& basis, const BrownianPath& path, int step, double p,
          double tau, const RegParams& reg, double x0_norm_pow, double C1, double C_w) {
  if (!(tau > 0.0)) throw std::invalid_argument("h2: tau must be > 0");
  if (x0_norm_pow < 0.0) throw std::invalid_argument("h2: negative initial mass");
  if (step < 0) throw std::invalid_argument("h2: negative step");
  double dt = path.dt();
  double pe = p + tau;
  std::vector<double> h1s(step + 1), cum(step + 1, 0.0);
  for (int s = 0; s <= step; ++s) {
    h1s[s] = h1(basis, path, s, pe);
    if (std::isinf(h1s[s])) return kInf;
    if (s > 0) cum[s] = cum[s - 1] + 0.5 * (h1s[s - 1] + h1s[s]) * dt;
  }
  double measure = basis.grid()->measure();
  double source = 0.0;
  for (int s = 0; s <= step; ++s) {
    double w = (s == 0 || s == step) ? 0.5 : 1.0;  // trapezoid
    if (step == 0) w = 0.0;
    source += w * std::exp(reg.delta * (cum[step] - cum[s])) * h1s[s] * dt;
  }
  double bracket = std::exp(reg.delta * cum[step]) * x0_norm_pow +
                   measure * std::pow(reg.eps, pe - 1.0) * source;
  return C1 * std::pow(C_w, p) * std::pow(bracket, p / pe);
}

double g_rate(const ExtinctionBoundParams& params, const NoiseBasis& basis,
              const BrownianPath& path, int s_step, int r_step, const RegParams& reg,
              double x0_norm_pow, double eta_sup) {
  GridFunction nu(basis.grid(), 0.0);
  if (basis.count() > 0) {
    GridFunction mu_r = mu_at(basis, path, r_step);
    GridFunction mu_s = mu_at(basis, path, s_step);
    for (int i = 0; i < nu.size(); ++i) nu[i] = mu_r[i] - mu_s[i];
  }
  double inf_e = std::exp(min_value(nu));
  if (params.d == 1) return inf_e * eta_sup;
  double env = h2(basis, path, r_step, params.p_tilde, params.tau_exp, reg, x0_norm_pow,
                  params.C1_hat, params.C_w);
  if (std::isinf(env)) return 0.0;
  if (!(env > 0.0)) return kInf;
  double expo = 2.0 * params.p_tilde_star / (params.p_tilde * params.q);
  return inf_e / std::pow(env, expo);
}

// -------------------------------------------------------- flatness threshold

double flatness_threshold(const NoiseBasis& basis, const TorricelliWeight& tw,
                          double margin) {
  if (!(margin > 0.0 && margin < 1.0))
    throw std::invalid_argument("flatness_threshold: margin must be in (0,1)");
  double S = basis.c2_total();
  if (S == 0.0) return kInf;
  auto grad = gradient(tw.w);
  double sup_gw = 0.0;
  for (int i = 0; i < tw.w.size(); ++i) {
    double g2 = 0.0;
    for (const auto& d : grad) g2 += d[i] * d[i];
    sup_gw = std::max(sup_gw, std::sqrt(g2));
  }
  double cw = tw.c_w;
  // worst case over |grad nu| <= x, |Lap nu| <= x
  auto ok = [&](double x) { return -1.0 + 2.0 * x * sup_gw + cw * (x * x + x) <= -margin; };
  if (!ok(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (ok(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e9) return kInf;
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo / S;
}

// ------------------------------------------------------------- bound and ODE

double ExtinctionBound::operator()(double t) const {
  if (t < 0.0) t = 0.0;
  if (A <= 0.0) return 0.0;
  double base = std::pow(A, 1.0 - alpha) - (1.0 - alpha) * g_floor * t;
  if (base <= 0.0) return 0.0;
  return std::pow(base, 1.0 / (1.0 - alpha));
}

ExtinctionBound extinction_upper_bound(const ExtinctionBoundParams& params, double x0_lp,
                                       std::optional<double> g_floor_override) {
  if (x0_lp < 0.0) throw std::invalid_argument("extinction_upper_bound: negative norm");
  ExtinctionBound b;
  b.alpha = params.alpha;
  b.A = params.C1_hat * params.C_w * x0_lp;
  if (g_floor_override) {
    b.g_floor = *g_floor_override;
  } else if (params.d == 1) {
    b.g_floor = 0.5;  // inf e^{mu_r-mu_s} >= e^{-0.38} on an admissible flat interval
  } else {
    b.g_floor = std::pow(1.0 / (2.0 * std::max(1.0, b.A)), params.alpha);
  }
  if (!(b.g_floor > 0.0))
    throw std::invalid_argument("extinction_upper_bound: g_floor must be > 0");
  b.L_star = b.A <= 0.0 ? 0.0 : std::pow(b.A, 1.0 - b.alpha) / ((1.0 - b.alpha) * b.g_floor);
  return b;
}

double ode_h_closed_form(double q0, double alpha, double K,
                         const std::function<double(double)>& g_integral, double t) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("ode_h_closed_form: alpha must be in [0,1)");
  if (K < 0.0 || q0 < K)
    throw std::invalid_argument("ode_h_closed_form: need 0 <= K <= q0");
  double base = std::pow(q0 - K, 1.0 - alpha) - (1.0 - alpha) * g_integral(t);
  if (base <= 0.0) return K;
  return std::pow(base, 1.0 / (1.0 - alpha)) + K;
}

std::vector<double> ode_bound_oracle(double q0, double alpha, double K,
                                     const std::function<double(double)>& g,
                                     double t_end, double dt) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("ode_bound_oracle: alpha must be in [0,1)");
  if (K < 0.0 || q0 < K)
    throw std::invalid_argument("ode_bound_oracle: need 0 <= K <= q0");
  if (!(dt > 0.0) || !(t_end >= 0.0))
    throw std::invalid_argument("ode_bound_oracle: need dt > 0 and t_end >= 0");
  auto rhs = [&](double t, double f) {
    double ex = f - K;
    return ex > 0.0 ? -g(t) * std::pow(ex, alpha) : 0.0;
  };
  int n = static_cast<int>(std::lround(t_end / dt));
  std::vector<double> traj(n + 1);
  double f = q0;
  traj[0] = f;
  for (int i = 0; i < n; ++i) {
    double t = i * dt;
    double k1 = rhs(t, f);
    double k2 = rhs(t + dt / 2.0, f + dt / 2.0 * k1);
    double k3 = rhs(t + dt / 2.0, f + dt / 2.0 * k2);
    double k4 = rhs(t + dt, f + dt * k3);
    f += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (f < K) f = K;
    traj[i + 1] = f;
  }
  return traj;
}

// ------------------------------------------------------------------ monitors

void EnergyReport::finalize() {
  worst_violation = 0.0;
  bool first = true;
  for (double r : residuals) {
    if (first || r > worst_violation) worst_violation = r;
    first = false;
  }
  if (residuals.empty()) worst_violation = 0.0;
  pass = worst_violation <= tolerance;
}

namespace {

const std::vector<Checkpoint>& snapshots_of(const RunResult& run, const char* who) {
  if (run.snapshots.empty())
    throw std::invalid_argument(std::string(who) +
                                ": run has no stored snapshots (enable store_snapshots)");
  return run.snapshots;
}

GridFunction mu_or_zero(const NoiseBasis& basis, const BrownianPath& path, int step) {
  return basis.count() > 0 ? mu_at(basis, path, step)
                           : GridFunction(basis.grid(), 0.0);
}

double quad_abs_pow(const GridFunction& u, double p) {
  const auto& g = *u.grid();
  double s = 0.0;
  for (int i = 0; i < u.size(); ++i)
    s += std::pow(std::abs(u[i]), p) * g.cell_volume(i);
  return s;
}

}  // namespace

EnergyReport monitor_weighted_lp(const RunResult& run, double p, const NoiseBasis& basis,
                                 const BrownianPath& path, double tol) {
  if (!(p >= 1.0)) throw std::invalid_argument("monitor_weighted_lp: p must be >= 1");
  const auto& snaps = snapshots_of(run, "monitor_weighted_lp");
  if (std::abs(snaps.front().t) > 1e-12)
    throw std::invalid_argument("monitor_weighted_lp: first snapshot must be at t = 0");
  EnergyReport rep;
  rep.name = "lp_decay";
  rep.tolerance = tol;
  const auto& g = *snaps.front().Y.grid();
  const GridFunction& mt = basis.mu_tilde();
  double eps = run.config.reg.eps, delta = run.config.reg.delta;
  double x0_pow = quad_abs_pow(snaps.front().Y, p);
  double measure = g.measure();

  double slack_h1 = 0.0, slack_mass = 0.0;
  double prev_h1 = 0.0, prev_mass_h1 = 0.0, prev_t = 0.0;
  for (size_t i = 0; i < snaps.size(); ++i) {
    const auto& s = snaps[i];
    double h1_r = h1(basis, path, s.step, p);
    double mass_r = quad_abs_pow(s.Y, p);
    if (i > 0) {
      double dt = s.t - prev_t;
      slack_h1 += 0.5 * (prev_h1 + h1_r) * dt;
      slack_mass += 0.5 * (prev_mass_h1 + h1_r * mass_r) * dt;
    }
    prev_h1 = h1_r;
    prev_mass_h1 = h1_r * mass_r;
    prev_t = s.t;

    double lhs = 0.0;
    for (int n = 0; n < s.Y.size(); ++n)
      lhs += std::exp(p * mt[n] * s.t) * std::pow(std::abs(s.Y[n]), p) * g.cell_volume(n);
    double slack = std::pow(eps, p - 1.0) * measure * slack_h1 + delta * slack_mass;
    rep.times.push_back(s.t);
    rep.residuals.push_back(lhs - (x0_pow + slack));
  }
  rep.finalize();
  return rep;
}

EnergyReport monitor_energy_L1(const RunResult& run, const NoiseBasis& basis,
                               const BrownianPath& path, const GridFunction& rho,
                               double t_from, double t_to, double tol_rate) {
  const auto& snaps = snapshots_of(run, "monitor_energy_L1");
  if (!(t_to > t_from)) throw std::invalid_argument("monitor_energy_L1: need t_to > t_from");
  auto nearest = [&](double t) {
    size_t best = 0;
    for (size_t i = 1; i < snaps.size(); ++i)
      if (std::abs(snaps[i].t - t) < std::abs(snaps[best].t - t)) best = i;
    return best;
  };
  size_t i0 = nearest(t_from), i1 = nearest(t_to);
  if (i1 <= i0)
    throw std::invalid_argument("monitor_energy_L1: window shorter than the checkpoint stride");

  EnergyReport rep;
  rep.name = "energy_l1";
  const auto& g = *snaps.front().Y.grid();
  double eps = run.config.reg.eps, delta = run.config.reg.delta;
  auto phi = mollify_phi(eps, run.config.reg.tau);

  auto psi_weighted = [&](const GridFunction& Y) {
    double s = 0.0;
    for (int n = 0; n < Y.size(); ++n)
      s += psi_eps(Y[n], eps) * rho[n] * g.cell_volume(n);
    return s;
  };

  // per-checkpoint instantaneous terms
  auto terms_at = [&](const Checkpoint& cp, double* dissipation, double* r1, double* r2) {
    GridFunction mu = mu_or_zero(basis, path, cp.step);
    GridFunction eta = cp.Y.map(phi);
    auto grad_eta = gradient(eta);
    double diss = 0.0;
    for (int n = 0; n < cp.Y.size(); ++n) {
      double g2 = 0.0;
      for (const auto& d : grad_eta) g2 += d[n] * d[n];
      diss += rho[n] * std::exp(mu[n]) * g2 * g.cell_volume(n);
    }
    GridFunction P(cp.Y.grid());
    for (int n = 0; n < P.size(); ++n) P[n] = rho[n] * std::exp(mu[n]);
    GridFunction lapP = laplacian_apply(P);
    double a = 0.0, b = 0.0;
    for (int node : g.interior_nodes()) {
      a += eta[node] * eta[node] * lapP[node] * g.cell_volume(node);
      b += psi_eps(cp.Y[node], eps) * lapP[node] * g.cell_volume(node);
    }
    *dissipation = diss;
    *r1 = a;
    *r2 = b;
  };

  double psi_u = psi_weighted(snaps[i0].Y);
  double diss_cum = 0.0, r1_cum = 0.0, r2_cum = 0.0;
  double d_prev, r1_prev, r2_prev;
  terms_at(snaps[i0], &d_prev, &r1_prev, &r2_prev);
  rep.tolerance = tol_rate * (snaps[i1].t - snaps[i0].t);
  for (size_t i = i0 + 1; i <= i1; ++i) {
    double d_now, r1_now, r2_now;
    terms_at(snaps[i], &d_now, &r1_now, &r2_now);
    double dt = snaps[i].t - snaps[i - 1].t;
    diss_cum += 0.5 * (d_prev + d_now) * dt;
    r1_cum += 0.5 * (r1_prev + r1_now) * dt;
    r2_cum += 0.5 * (r2_prev + r2_now) * dt;
    d_prev = d_now;
    r1_prev = r1_now;
    r2_prev = r2_now;
    double lhs = psi_weighted(snaps[i].Y) + diss_cum;
    double rhs = psi_u + 0.5 * r1_cum + delta * r2_cum;
    rep.times.push_back(snaps[i].t);
    rep.residuals.push_back(lhs - rhs);
  }
  rep.finalize();
  return rep;
}

EnergyReport supersolution_check(const RunResult& run, const NoiseBasis& basis,
                                 const BrownianPath& path, double x0_sup, double tol) {
  const auto& snaps = snapshots_of(run, "supersolution_check");
  EnergyReport rep;
  rep.name = "supersolution";
  rep.tolerance = tol;
  const GridFunction& mt = basis.mu_tilde();
  for (const auto& cp : snaps) {
    GridFunction mu = mu_or_zero(basis, path, cp.step);
    double worst = -kInf;
    for (int n = 0; n < cp.Y.size(); ++n) {
      double x = std::exp(-mu[n]) * cp.Y[n];
      double bound = std::exp(-mu[n] - mt[n] * cp.t) * x0_sup;
      worst = std::max(worst, x - bound);
    }
    rep.times.push_back(cp.t);
    rep.residuals.push_back(worst);
  }
  rep.finalize();
  return rep;
}

// --------------------------------------------------------------- C1 estimate

C1Estimate estimate_c1_t0(const NoiseBasis& basis, const BrownianPath& path,
                          double p_tilde, double tau, const std::vector<double>& t_grid) {
  C1Estimate est;
  if (basis.count() == 0) return est;  // mu == 0: no Hoelder step needed
  if (!(tau > 0.0)) throw std::invalid_argument("estimate_c1_t0: tau must be > 0");
  double p_holder = p_tilde * (p_tilde + tau) / tau;
  auto rep = check_hypothesis_H(basis, path, p_holder, t_grid);
  est.overflow = rep.any_overflow;
  if (est.overflow) {
    est.C1_hat = kInf;
    est.t0_hat = rep.argmax_time;
    return est;
  }
  est.C1_hat = 2.0 * std::pow(rep.max_integral, tau / (p_tilde + tau));
  est.t0_hat = rep.argmax_time;
  return est;
}

// ------------------------------------------------------- predict and verify

ExtinctionPrediction predict_and_verify_extinction(const RunResult& run,
                                                   const NoiseBasis& basis,
                                                   const BrownianPath& path,
                                                   ExtinctionBoundParams params,
                                                   double curve_tol) {
  const auto& snaps = snapshots_of(run, "predict_and_verify_extinction");
  ExtinctionPrediction out;
  GridPtr grid = snaps.front().Y.grid();
  PoissonSolver ps(grid);
  TorricelliWeight tw = torricelli_weight(ps);
  params.C_w = tw.c_w;
  out.eps_star = flatness_threshold(basis, tw);

  if (basis.count() == 0) {
    params.C1_hat = 1.0;  // mu == 0 pathwise
    if (params.t0_hat < 0.0) params.t0_hat = 0.0;
  } else if (params.C1_hat <= 0.0) {
    auto est = estimate_c1_t0(basis, path, params.p_tilde, params.tau_exp, run.times);
    if (est.overflow) {
      out.params = params;
      out.message = "integrability surrogate overflowed; no usable constant";
      return out;  // inconclusive
    }
    params.C1_hat = est.C1_hat;
    params.t0_hat = est.t0_hat;
  }
  out.params = params;

  double x0_lp = lp_norm(snaps.front().Y, params.p);
  out.bound = extinction_upper_bound(
      params, x0_lp,
      basis.count() == 0 ? std::optional<double>(1.0) : std::nullopt);

  double dt = run.config.dt;
  if (basis.count() == 0) {
    FlatInterval fi;
    fi.start_step = static_cast<int>(std::lround(params.t0_hat / dt));
    fi.s = fi.start_step * dt;
    fi.end_step = fi.start_step + static_cast<int>(std::ceil(out.bound.L_star / dt));
    fi.t = fi.end_step * dt;
    fi.eps = out.eps_star;
    out.interval = fi;
  } else {
    if (!(out.eps_star > 0.0) || std::isinf(out.bound.L_star)) {
      out.message = "no admissible flatness threshold or unbounded interval length";
      return out;
    }
    out.interval = find_flat_interval(path, params.t0_hat, out.bound.L_star, out.eps_star);
    if (!out.interval) {
      out.message = "no sufficiently flat interval on the sampled horizon";
      return out;  // inconclusive
    }
  }

  const FlatInterval& fi = *out.interval;
  GridFunction mu_s = basis.count() > 0 && fi.start_step <= path.num_steps()
                          ? mu_at(basis, path, fi.start_step)
                          : GridFunction(grid, 0.0);
  GridFunction ws(grid);  // w * e^{-mu_s}
  double sup_e = 0.0;
  for (int n = 0; n < ws.size(); ++n) {
    double e = std::exp(-mu_s[n]);
    ws[n] = tw.w[n] * e;
    sup_e = std::max(sup_e, e);
  }
  out.K_eps = tw.c_w * sup_e * (run.config.reg.eps / 2.0) * grid->measure();

  out.curve.name = "extinction_bound";
  out.curve.tolerance = curve_tol;
  double eps = run.config.reg.eps;
  for (const auto& cp : snaps) {
    if (cp.t < fi.s - 1e-12) continue;
    double W = 0.0;
    for (int n = 0; n < cp.Y.size(); ++n)
      W += psi_eps(cp.Y[n], eps) * ws[n] * grid->cell_volume(n);
    out.curve.times.push_back(cp.t);
    out.curve.residuals.push_back(W - (out.bound(cp.t - fi.s) + out.K_eps));
  }
  out.curve.finalize();
  out.tau0 = run.extinction_time;

  double deadline = fi.s + out.bound.L_star + 2.0 * dt + 1e-12;
  std::ostringstream msg;
  if (!out.curve.pass) {
    out.verdict = ExtinctionPrediction::Verdict::bound_violated;
    msg << "decay curve exceeded the bound (worst violation " << out.curve.worst_violation
        << ")";
  } else if (out.tau0 && *out.tau0 <= deadline) {
    out.verdict = ExtinctionPrediction::Verdict::confirmed;
    msg << "extinction at t = " << *out.tau0 << " within the predicted window (deadline "
        << deadline << ")";
  } else if (run.times.back() < deadline) {
    out.verdict = ExtinctionPrediction::Verdict::inconclusive;
    msg << "run horizon " << run.times.back() << " ends before the deadline " << deadline;
  } else {
    out.verdict = ExtinctionPrediction::Verdict::bound_violated;
    msg << "no extinction by the deadline " << deadline;
  }
  out.message = msg.str();
  return out;
}

}  // namespace signfd
