#include "signfd/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace signfd {

// ------------------------------------------------------- counter-based normal

namespace {

constexpr uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

struct Ctr4 {
  uint32_t v[4];
};

inline void mul_hilo(uint32_t a, uint32_t b, uint32_t* hi, uint32_t* lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  *hi = static_cast<uint32_t>(p >> 32);
  *lo = static_cast<uint32_t>(p);
}

inline Ctr4 philox_round(Ctr4 c, uint32_t k0, uint32_t k1) {
  uint32_t hi0, lo0, hi1, lo1;
  mul_hilo(kPhiloxM4x32A, c.v[0], &hi0, &lo0);
  mul_hilo(kPhiloxM4x32B, c.v[2], &hi1, &lo1);
  return {{hi1 ^ c.v[1] ^ k0, lo1, hi0 ^ c.v[3] ^ k1, lo0}};
}

Ctr4 philox4x32_10(Ctr4 c, uint32_t k0, uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    c = philox_round(c, k0, k1);
    k0 += kPhiloxW32A;
    k1 += kPhiloxW32B;
  }
  return c;
}

inline double to_unit(uint32_t hi, uint32_t lo) {
  uint64_t bits = (static_cast<uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace

double gaussian_draw(uint64_t seed, uint64_t component, uint64_t step) {
  Ctr4 ctr = {{static_cast<uint32_t>(step), static_cast<uint32_t>(step >> 32),
               static_cast<uint32_t>(component), static_cast<uint32_t>(component >> 32)}};
  Ctr4 out = philox4x32_10(ctr, static_cast<uint32_t>(seed),
                           static_cast<uint32_t>(seed >> 32));
  double u1 = to_unit(out.v[0], out.v[1]);
  double u2 = to_unit(out.v[2], out.v[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// ----------------------------------------------------------------- NoiseBasis

NoiseBasis::NoiseBasis(GridPtr g, std::vector<GridFunction> components)
    : grid_(std::move(g)), f_(std::move(components)), mu_tilde_(grid_, 0.0) {
  for (const auto& f : f_)
    if (!f.grid()->same_layout(*grid_))
      throw std::invalid_argument("NoiseBasis: component grid mismatch");
  for (const auto& f : f_)
    for (int i = 0; i < f.size(); ++i) mu_tilde_[i] += 0.5 * f[i] * f[i];
  c2_.reserve(f_.size());
  for (const auto& f : f_) {
    C2Norms c2;
    c2.sup_abs = sup_abs(f);
    auto grad = gradient(f);
    for (int i = 0; i < f.size(); ++i) {
      double g2 = 0.0;
      for (const auto& d : grad) g2 += d[i] * d[i];
      c2.sup_grad = std::max(c2.sup_grad, std::sqrt(g2));
    }
    GridFunction lap = laplacian_apply(f);
    for (int node : grid_->interior_nodes())
      c2.sup_lap = std::max(c2.sup_lap, std::abs(lap[node]));
    c2_.push_back(c2);
  }
}

NoiseBasis NoiseBasis::none(GridPtr g) { return NoiseBasis(std::move(g), {}); }

NoiseBasis NoiseBasis::constant(GridPtr g, double c) {
  GridFunction f(g, c);
  return NoiseBasis(std::move(g), {std::move(f)});
}

NoiseBasis NoiseBasis::linear(GridPtr g, double scale) {
  GridFunction f(g);
  for (int i = 0; i < f.size(); ++i) f[i] = scale * g->coord(i, 0);
  return NoiseBasis(std::move(g), {std::move(f)});
}

NoiseBasis NoiseBasis::sine_product(GridPtr g, double amplitude, int mode_x, int mode_y) {
  if (mode_x < 1) throw std::invalid_argument("NoiseBasis::sine_product: mode_x must be >= 1");
  GridFunction f(g);
  double lx = g->hi(0) - g->lo(0);
  double ly = g->dim() == 2 ? g->hi(1) - g->lo(1) : 1.0;
  for (int i = 0; i < f.size(); ++i) {
    double v = amplitude * std::sin(mode_x * M_PI * (g->coord(i, 0) - g->lo(0)) / lx);
    if (g->dim() == 2) {
      if (mode_y < 1)
        throw std::invalid_argument("NoiseBasis::sine_product: mode_y must be >= 1 in 2D");
      v *= std::sin(mode_y * M_PI * (g->coord(i, 1) - g->lo(1)) / ly);
    }
    f[i] = v;
  }
  return NoiseBasis(std::move(g), {std::move(f)});
}

NoiseBasis NoiseBasis::from_csv(GridPtr g, const std::vector<std::string>& files) {
  std::vector<GridFunction> comps;
  comps.reserve(files.size());
  for (const auto& file : files) comps.push_back(read_grid_function_csv(file, g));
  return NoiseBasis(std::move(g), std::move(comps));
}

double NoiseBasis::c2_total() const {
  double s = 0.0;
  for (const auto& c : c2_) s += c.total();
  return s;
}

// --------------------------------------------------------------- BrownianPath

BrownianPath BrownianPath::sample(int components, double horizon, double dt,
                                  uint64_t seed) {
  if (components < 0) throw std::invalid_argument("BrownianPath: components must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("BrownianPath: dt must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("BrownianPath: horizon must be > 0");
  int steps = static_cast<int>(std::floor(horizon / dt + 1e-9));
  if (steps < 1) throw std::invalid_argument("BrownianPath: horizon shorter than dt");
  BrownianPath p;
  p.n_components_ = components;
  p.dt_ = dt;
  p.seed_ = seed;
  p.beta_.assign(steps + 1, std::vector<double>(components, 0.0));
  double root_dt = std::sqrt(dt);
  for (int s = 0; s < steps; ++s)
    for (int k = 0; k < components; ++k)
      p.beta_[s + 1][k] =
          p.beta_[s][k] + root_dt * gaussian_draw(seed, static_cast<uint64_t>(k),
                                                  static_cast<uint64_t>(s));
  return p;
}

BrownianPath BrownianPath::from_values(double dt, std::vector<std::vector<double>> values,
                                       uint64_t seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("BrownianPath: dt must be > 0");
  if (values.empty()) throw std::invalid_argument("BrownianPath: need at least one row");
  size_t n = values.front().size();
  for (const auto& row : values)
    if (row.size() != n) throw std::invalid_argument("BrownianPath: ragged value rows");
  BrownianPath p;
  p.n_components_ = static_cast<int>(n);
  p.dt_ = dt;
  p.seed_ = seed;
  p.beta_ = std::move(values);
  return p;
}

double BrownianPath::value(int step, int k) const {
  if (step < 0 || step >= static_cast<int>(beta_.size()))
    throw std::out_of_range("BrownianPath: step beyond the sampled horizon");
  if (k < 0 || k >= n_components_)
    throw std::out_of_range("BrownianPath: component index out of range");
  return beta_[step][k];
}

int BrownianPath::step_of_time(double t) const {
  long idx = std::lround(t / dt_);
  if (std::abs(t - idx * dt_) > dt_ / 2.0 + 1e-12)
    throw std::out_of_range("BrownianPath: time does not align with the path grid");
  if (idx < 0 || idx > num_steps())
    throw std::out_of_range("BrownianPath: time beyond the sampled horizon");
  return static_cast<int>(idx);
}

BrownianPath BrownianPath::frozen_after(int step) const {
  if (step < 0 || step >= static_cast<int>(beta_.size()))
    throw std::out_of_range("BrownianPath: freeze step beyond the sampled horizon");
  BrownianPath p = *this;
  for (size_t s = step + 1; s < p.beta_.size(); ++s) p.beta_[s] = p.beta_[step];
  return p;
}

void BrownianPath::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("BrownianPath: cannot open " + path);
  os << "t";
  for (int k = 1; k <= n_components_; ++k) os << ",beta_" << k;
  os << "\n";
  char buf[64];
  for (size_t s = 0; s < beta_.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", s * dt_);
    os << buf;
    for (int k = 0; k < n_components_; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", beta_[s][k]);
      os << "," << buf;
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("BrownianPath: write failed for " + path);
}

BrownianPath BrownianPath::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("BrownianPath: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("BrownianPath: empty file " + path);
  std::istringstream header(line);
  std::string cell;
  int cols = 0;
  while (std::getline(header, cell, ',')) ++cols;
  if (cols < 1 || line.rfind("t", 0) != 0)
    throw std::runtime_error("BrownianPath: malformed header in " + path);
  int components = cols - 1;
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<double> vals;
    try {
      while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw std::runtime_error("BrownianPath: malformed row " + std::to_string(lineno) +
                               " in " + path);
    }
    if (static_cast<int>(vals.size()) != cols)
      throw std::runtime_error("BrownianPath: row " + std::to_string(lineno) + " in " +
                               path + " has " + std::to_string(vals.size()) +
                               " columns, expected " + std::to_string(cols));
    times.push_back(vals[0]);
    values.emplace_back(vals.begin() + 1, vals.end());
  }
  if (times.size() < 2) throw std::runtime_error("BrownianPath: need at least 2 rows in " + path);
  double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw std::runtime_error("BrownianPath: non-monotone time in " + path);
  for (size_t s = 1; s < times.size(); ++s) {
    if (!(times[s] > times[s - 1]))
      throw std::runtime_error("BrownianPath: non-monotone time at row " +
                               std::to_string(s + 2) + " in " + path);
    if (std::abs(times[s] - s * dt) > 1e-9 * std::max(1.0, std::abs(times[s])))
      throw std::runtime_error("BrownianPath: non-uniform time grid at row " +
                               std::to_string(s + 2) + " in " + path);
  }
  BrownianPath p = from_values(dt, std::move(values));
  p.n_components_ = components;
  return p;
}

// ----------------------------------------------------------------------- ops

BrownianPath sample_path(const NoiseBasis& basis, double horizon, double dt,
                         uint64_t seed) {
  return BrownianPath::sample(basis.count(), horizon, dt, seed);
}

GridFunction mu_at(const NoiseBasis& basis, const BrownianPath& path, int step) {
  GridFunction mu(basis.grid(), 0.0);
  for (int k = 0; k < basis.count(); ++k) {
    double b = path.value(step, k);
    const GridFunction& f = basis.component(k);
    for (int i = 0; i < mu.size(); ++i) mu[i] -= f[i] * b;
  }
  return mu;
}

const GridFunction& mu_tilde(const NoiseBasis& basis) { return basis.mu_tilde(); }

HypothesisHReport check_hypothesis_H(const NoiseBasis& basis, const BrownianPath& path,
                                     double p, const std::vector<double>& t_grid) {
  if (!(p > 0.0)) throw std::invalid_argument("check_hypothesis_H: p must be > 0");
  HypothesisHReport rep;
  rep.p = p;
  const auto& g = *basis.grid();
  const GridFunction& mt = basis.mu_tilde();
  for (double t : t_grid) {
    GridFunction mu = basis.count() > 0 ? mu_at(basis, path, path.step_of_time(t))
                                        : GridFunction(basis.grid(), 0.0);
    double sum = 0.0;
    bool over = false;
    for (int i = 0; i < g.num_nodes(); ++i) {
      double arg = -p * (mu[i] + mt[i] * t);
      if (arg > 700.0) {
        over = true;
        sum = std::numeric_limits<double>::infinity();
        break;
      }
      sum += std::exp(arg) * g.cell_volume(i);
    }
    rep.times.push_back(t);
    rep.integrals.push_back(sum);
    rep.overflow.push_back(over);
    rep.any_overflow = rep.any_overflow || over;
  }
  rep.max_integral = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < rep.integrals.size(); ++i) {
    if (rep.integrals[i] > rep.max_integral) {
      rep.max_integral = rep.integrals[i];
      rep.argmax_time = rep.times[i];
    }
  }
  return rep;
}

SublevelDecayReport sublevel_decay_exponent(const NoiseBasis& basis,
                                            const std::vector<double>& eps_grid) {
  SublevelDecayReport rep;
  const auto& g = *basis.grid();
  const GridFunction& mt = basis.mu_tilde();
  for (double eps : eps_grid) {
    if (!(eps > 0.0))
      throw std::invalid_argument("sublevel_decay_exponent: eps values must be > 0");
    double m = 0.0;
    for (int i = 0; i < g.num_nodes(); ++i)
      if (mt[i] > 0.0 && mt[i] <= eps) m += g.cell_volume(i);
    rep.eps.push_back(eps);
    rep.measure.push_back(m);
  }
  // least-squares slope of log m against log eps over the nonzero entries
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < rep.eps.size(); ++i) {
    if (rep.measure[i] <= 0.0) continue;
    double x = std::log(rep.eps[i]), y = std::log(rep.measure[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) {
    rep.vacuous = true;
    return rep;
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-14) {
    rep.vacuous = true;
    return rep;
  }
  rep.exponent = (n * sxy - sx * sy) / denom;
  return rep;
}

std::optional<FlatInterval> find_flat_interval(const BrownianPath& path, double m,
                                               double n, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("find_flat_interval: eps must be > 0");
  if (!(n > 0.0)) throw std::invalid_argument("find_flat_interval: length must be > 0");
  if (m < 0.0) throw std::invalid_argument("find_flat_interval: start must be >= 0");
  double dt = path.dt();
  int w = std::max<int>(1, static_cast<int>(std::lround(n / dt)));
  int first = static_cast<int>(std::ceil(m / dt - 1e-9));
  int last_start = path.num_steps() - w;
  if (first > last_start) return std::nullopt;
  int K = path.components();
  // sliding-window max/min per component via monotonic index deques
  std::vector<std::deque<int>> maxq(K), minq(K);
  auto push = [&](int idx) {
    for (int k = 0; k < K; ++k) {
      double v = path.value(idx, k);
      while (!maxq[k].empty() && path.value(maxq[k].back(), k) <= v) maxq[k].pop_back();
      maxq[k].push_back(idx);
      while (!minq[k].empty() && path.value(minq[k].back(), k) >= v) minq[k].pop_back();
      minq[k].push_back(idx);
    }
  };
  for (int idx = first; idx <= first + w; ++idx) push(idx);
  for (int s = first;; ++s) {
    bool flat = true;
    for (int k = 0; k < K && flat; ++k) {
      double base = path.value(s, k);
      if (path.value(maxq[k].front(), k) - base >= eps) flat = false;
      if (base - path.value(minq[k].front(), k) >= eps) flat = false;
    }
    if (flat) {
      FlatInterval out;
      out.start_step = s;
      out.end_step = s + w;
      out.s = s * dt;
      out.t = (s + w) * dt;
      out.eps = eps;
      return out;
    }
    if (s == last_start) break;
    for (int k = 0; k < K; ++k) {
      if (maxq[k].front() == s) maxq[k].pop_front();
      if (minq[k].front() == s) minq[k].pop_front();
    }
    push(s + w + 1);
  }
  return std::nullopt;
}

}  // namespace signfd
