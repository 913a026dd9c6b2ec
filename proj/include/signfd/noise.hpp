#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "signfd/grid.hpp"

namespace signfd {

// One standard normal draw from a stateless counter-based generator
// (Philox4x32-10 keyed by the seed, counter = (step, component)). The same
// (seed, component, step) triple always returns the same bits, independent of
// call order or thread, which is what makes ensemble runs splittable.
double gaussian_draw(uint64_t seed, uint64_t component, uint64_t step);

// Spatial noise coefficients f_1..f_N on a grid, with finite-difference C^2
// seminorms (sup |f|, sup |grad f|, sup |Lap f|) cached per component.
struct C2Norms {
  double sup_abs = 0.0;
  double sup_grad = 0.0;
  double sup_lap = 0.0;
  double total() const { return sup_abs + sup_grad + sup_lap; }
};

class NoiseBasis {
 public:
  NoiseBasis(GridPtr g, std::vector<GridFunction> components);

  // Named presets.
  static NoiseBasis none(GridPtr g);                      // N = 0 (deterministic)
  static NoiseBasis constant(GridPtr g, double c);        // f(x) = c
  static NoiseBasis linear(GridPtr g, double scale);      // f(x) = scale * x (axis 0)
  static NoiseBasis sine_product(GridPtr g, double amplitude, int mode_x,
                                 int mode_y = 0);         // prod of sin(k pi (x-lo)/len)
  static NoiseBasis from_csv(GridPtr g, const std::vector<std::string>& files);

  const GridPtr& grid() const { return grid_; }
  int count() const { return static_cast<int>(f_.size()); }
  const GridFunction& component(int k) const { return f_[k]; }
  const C2Norms& c2_norms(int k) const { return c2_[k]; }
  double c2_total() const;  // sum over components of the C^2 seminorm totals
  // mu_tilde(x) = 1/2 sum_k f_k(x)^2 (the Ito correction field)
  const GridFunction& mu_tilde() const { return mu_tilde_; }

 private:
  GridPtr grid_;
  std::vector<GridFunction> f_;
  std::vector<C2Norms> c2_;
  GridFunction mu_tilde_;
};

// Piecewise-linear Brownian path sampled on a uniform time grid, regenerable
// bit-exactly from (seed, dt, horizon, components).
class BrownianPath {
 public:
  static BrownianPath sample(int components, double horizon, double dt, uint64_t seed);
  static BrownianPath from_values(double dt, std::vector<std::vector<double>> values,
                                  uint64_t seed = 0);

  int components() const { return n_components_; }
  double dt() const { return dt_; }
  int num_steps() const { return static_cast<int>(beta_.size()) - 1; }
  double horizon() const { return num_steps() * dt_; }
  uint64_t seed() const { return seed_; }
  // beta^k at time step*dt; step 0 is 0 for sampled paths.
  double value(int step, int k) const;
  double time_of(int step) const { return step * dt_; }
  // Snap a time to the nearest stored step (must be within half a step).
  int step_of_time(double t) const;

  // Freeze the path at its value at `step` from there on (flat-interval fixture).
  BrownianPath frozen_after(int step) const;

  void write_csv(const std::string& path) const;
  static BrownianPath read_csv(const std::string& path);

 private:
  BrownianPath() = default;
  int n_components_ = 0;
  double dt_ = 0.0;
  uint64_t seed_ = 0;
  std::vector<std::vector<double>> beta_;  // beta_[step][k]
};

// Ops on (basis, path) pairs ------------------------------------------------

BrownianPath sample_path(const NoiseBasis& basis, double horizon, double dt,
                         uint64_t seed);

// mu_t(x) = -sum_k f_k(x) * beta^k_t at the given step (throws out_of_range
// beyond the sampled horizon).
GridFunction mu_at(const NoiseBasis& basis, const BrownianPath& path, int step);
const GridFunction& mu_tilde(const NoiseBasis& basis);

// I_p(t) = int_O exp(-p mu_t - p mu_tilde t) dxi on a list of times.
// Exponential overflow is reported as +inf with a flag, not an error.
struct HypothesisHReport {
  double p = 0.0;
  std::vector<double> times;
  std::vector<double> integrals;
  std::vector<bool> overflow;
  double max_integral = 0.0;
  double argmax_time = 0.0;
  bool any_overflow = false;
};
HypothesisHReport check_hypothesis_H(const NoiseBasis& basis, const BrownianPath& path,
                                     double p, const std::vector<double>& t_grid);

// Least-squares fit of log |{0 < mu_tilde <= eps}| against log eps.
struct SublevelDecayReport {
  bool vacuous = false;  // mu_tilde bounded away from 0 (or N = 0): nothing to fit
  double exponent = 0.0;
  std::vector<double> eps;
  std::vector<double> measure;
};
SublevelDecayReport sublevel_decay_exponent(const NoiseBasis& basis,
                                            const std::vector<double>& eps_grid);

// Earliest window [s, s+n] with s >= m (grid-aligned) on which every component
// stays within eps of its value at s:  sup_{r in [s,s+n]} |beta_r - beta_s|_inf < eps.
struct FlatInterval {
  double s = 0.0;
  double t = 0.0;
  int start_step = 0;
  int end_step = 0;
  double eps = 0.0;
};
std::optional<FlatInterval> find_flat_interval(const BrownianPath& path, double m,
                                               double n, double eps);

}  // namespace signfd
