#include "signfd/grid.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace signfd {

// ---------------------------------------------------------------- SpatialGrid

static void check_axis(double lo, double hi, int nodes) {
  if (!(hi > lo)) throw std::invalid_argument("SpatialGrid: extent must satisfy hi > lo");
  if (nodes < 3) throw std::invalid_argument("SpatialGrid: need at least 3 nodes per axis");
}

SpatialGrid::SpatialGrid(double lo, double hi, int nodes) : dim_(1) {
  check_axis(lo, hi, nodes);
  lo_ = {lo, 0.0};
  hi_ = {hi, 0.0};
  n_ = {nodes, 1};
  h_ = {(hi - lo) / (nodes - 1), 0.0};
  total_ = nodes;
  slot_.assign(total_, -1);
  for (int i = 1; i + 1 < nodes; ++i) {
    slot_[i] = static_cast<int>(interior_.size());
    interior_.push_back(i);
  }
}

SpatialGrid::SpatialGrid(std::array<double, 2> lo, std::array<double, 2> hi,
                         std::array<int, 2> nodes)
    : dim_(2) {
  check_axis(lo[0], hi[0], nodes[0]);
  check_axis(lo[1], hi[1], nodes[1]);
  lo_ = lo;
  hi_ = hi;
  n_ = nodes;
  h_ = {(hi[0] - lo[0]) / (nodes[0] - 1), (hi[1] - lo[1]) / (nodes[1] - 1)};
  total_ = nodes[0] * nodes[1];
  slot_.assign(total_, -1);
  for (int j = 1; j + 1 < n_[1]; ++j)
    for (int i = 1; i + 1 < n_[0]; ++i) {
      int node = node_of(i, j);
      slot_[node] = static_cast<int>(interior_.size());
      interior_.push_back(node);
    }
}

double SpatialGrid::measure() const {
  double m = hi_[0] - lo_[0];
  if (dim_ == 2) m *= hi_[1] - lo_[1];
  return m;
}

std::array<int, 2> SpatialGrid::multi_index(int node) const {
  if (dim_ == 1) return {node, 0};
  return {node % n_[0], node / n_[0]};
}

double SpatialGrid::coord(int node, int axis) const {
  auto ij = multi_index(node);
  return lo_[axis] + h_[axis] * ij[axis];
}

bool SpatialGrid::is_boundary(int node) const { return slot_[node] < 0; }

double SpatialGrid::cell_volume(int node) const {
  auto ij = multi_index(node);
  double vol = 1.0;
  for (int a = 0; a < dim_; ++a) {
    bool edge = (ij[a] == 0) || (ij[a] == n_[a] - 1);
    vol *= edge ? h_[a] / 2.0 : h_[a];
  }
  return vol;
}

bool SpatialGrid::same_layout(const SpatialGrid& other) const {
  if (dim_ != other.dim_) return false;
  for (int a = 0; a < dim_; ++a) {
    if (n_[a] != other.n_[a]) return false;
    if (std::abs(lo_[a] - other.lo_[a]) > 1e-12) return false;
    if (std::abs(hi_[a] - other.hi_[a]) > 1e-12) return false;
  }
  return true;
}

// --------------------------------------------------------------- GridFunction

GridFunction::GridFunction(GridPtr g, double fill)
    : grid_(std::move(g)), v_(grid_ ? grid_->num_nodes() : 0, fill) {
  if (!grid_) throw std::invalid_argument("GridFunction: null grid");
}

GridFunction::GridFunction(GridPtr g, std::vector<double> values)
    : grid_(std::move(g)), v_(std::move(values)) {
  if (!grid_) throw std::invalid_argument("GridFunction: null grid");
  if (static_cast<int>(v_.size()) != grid_->num_nodes())
    throw std::invalid_argument("GridFunction: value count does not match the grid");
}

GridFunction GridFunction::from_fn(GridPtr g, const std::function<double(double)>& f) {
  GridFunction u(g);
  if (g->dim() != 1)
    throw std::invalid_argument("GridFunction::from_fn: 1D grid required");
  for (int i = 0; i < g->num_nodes(); ++i) u[i] = f(g->coord(i, 0));
  return u;
}

GridFunction GridFunction::from_fn2(GridPtr g,
                                    const std::function<double(double, double)>& f) {
  GridFunction u(g);
  if (g->dim() != 2)
    throw std::invalid_argument("GridFunction::from_fn2: 2D grid required");
  for (int i = 0; i < g->num_nodes(); ++i) u[i] = f(g->coord(i, 0), g->coord(i, 1));
  return u;
}

GridFunction GridFunction::map(const std::function<double(double)>& f) const {
  GridFunction out(grid_);
  for (int i = 0; i < size(); ++i) out[i] = f(v_[i]);
  return out;
}

// ------------------------------------------------------------------ operators

GridFunction laplacian_apply(const GridFunction& u) {
  const auto& g = *u.grid();
  GridFunction out(u.grid());
  if (g.dim() == 1) {
    double ih2 = 1.0 / (g.spacing(0) * g.spacing(0));
    int n = g.nodes_along(0);
    out[0] = u[0];
    out[n - 1] = u[n - 1];
    for (int i = 1; i + 1 < n; ++i)
      out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * ih2;
    return out;
  }
  double ihx2 = 1.0 / (g.spacing(0) * g.spacing(0));
  double ihy2 = 1.0 / (g.spacing(1) * g.spacing(1));
  int nx = g.nodes_along(0), ny = g.nodes_along(1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int node = g.node_of(i, j);
      if (g.is_boundary(node)) {
        out[node] = u[node];
      } else {
        out[node] = (u[g.node_of(i - 1, j)] - 2.0 * u[node] + u[g.node_of(i + 1, j)]) * ihx2 +
                    (u[g.node_of(i, j - 1)] - 2.0 * u[node] + u[g.node_of(i, j + 1)]) * ihy2;
      }
    }
  return out;
}

double integral(const GridFunction& u) {
  const auto& g = *u.grid();
  double s = 0.0;
  for (int i = 0; i < u.size(); ++i) s += u[i] * g.cell_volume(i);
  return s;
}

double lp_norm(const GridFunction& u, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  const auto& g = *u.grid();
  double s = 0.0;
  for (int i = 0; i < u.size(); ++i)
    s += std::pow(std::abs(u[i]), p) * g.cell_volume(i);
  return std::pow(s, 1.0 / p);
}

double weighted_lp_norm(const GridFunction& u, double p, const GridFunction& weight) {
  if (!(p >= 1.0)) throw std::invalid_argument("weighted_lp_norm: p must be >= 1");
  if (weight.size() != u.size())
    throw std::invalid_argument("weighted_lp_norm: weight does not match the grid");
  const auto& g = *u.grid();
  double s = 0.0;
  for (int i = 0; i < u.size(); ++i) {
    double w = weight[i];
    if (w < 0.0) throw std::invalid_argument("weighted_lp_norm: negative weight");
    s += std::pow(std::abs(u[i]), p) * w * g.cell_volume(i);
  }
  return std::pow(s, 1.0 / p);
}

double sup_abs(const GridFunction& u) {
  double m = 0.0;
  for (int i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u[i]));
  return m;
}

double min_value(const GridFunction& u) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < u.size(); ++i) m = std::min(m, u[i]);
  return m;
}

std::vector<GridFunction> gradient(const GridFunction& u) {
  const auto& g = *u.grid();
  std::vector<GridFunction> out;
  for (int a = 0; a < g.dim(); ++a) {
    GridFunction d(u.grid());
    double ih = 1.0 / (2.0 * g.spacing(a));
    int na = g.nodes_along(a);
    for (int node = 0; node < g.num_nodes(); ++node) {
      auto ij = g.multi_index(node);
      int k = ij[a];
      auto at = [&](int kk) {
        auto m = ij;
        m[a] = kk;
        return u[g.node_of(m[0], m[1])];
      };
      if (k == 0)
        d[node] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) * ih;
      else if (k == na - 1)
        d[node] = (3.0 * at(na - 1) - 4.0 * at(na - 2) + at(na - 3)) * ih;
      else
        d[node] = (at(k + 1) - at(k - 1)) * ih;
    }
    out.push_back(std::move(d));
  }
  return out;
}

// -------------------------------------------------------------- PoissonSolver

struct PoissonSolver::Impl {
  Eigen::SparseMatrix<double> A;  // -Lap on interior nodes (SPD M-matrix)
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> direct;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
  bool use_direct = true;
  mutable std::mutex cg_mutex;
};

static constexpr int kDirectLimit = 150000;  // interior nodes; beyond this use CG

PoissonSolver::PoissonSolver(GridPtr g) : grid_(std::move(g)), impl_(new Impl) {
  const auto& gr = *grid_;
  int m = gr.num_interior();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(m) * (gr.dim() == 1 ? 3 : 5));
  double ihx2 = 1.0 / (gr.spacing(0) * gr.spacing(0));
  double ihy2 = gr.dim() == 2 ? 1.0 / (gr.spacing(1) * gr.spacing(1)) : 0.0;
  double diag = gr.dim() == 1 ? 2.0 * ihx2 : 2.0 * ihx2 + 2.0 * ihy2;
  const auto& slot = gr.interior_slot();
  for (int node : gr.interior_nodes()) {
    int row = slot[node];
    auto ij = gr.multi_index(node);
    trip.emplace_back(row, row, diag);
    auto couple = [&](int i, int j, double w) {
      int nb = gr.node_of(i, j);
      if (slot[nb] >= 0) trip.emplace_back(row, slot[nb], -w);
    };
    couple(ij[0] - 1, ij[1], ihx2);
    couple(ij[0] + 1, ij[1], ihx2);
    if (gr.dim() == 2) {
      couple(ij[0], ij[1] - 1, ihy2);
      couple(ij[0], ij[1] + 1, ihy2);
    }
  }
  impl_->A.resize(m, m);
  impl_->A.setFromTriplets(trip.begin(), trip.end());
  impl_->use_direct = m <= kDirectLimit;
  if (impl_->use_direct) {
    impl_->direct.compute(impl_->A);
    if (impl_->direct.info() != Eigen::Success)
      throw std::runtime_error("PoissonSolver: sparse factorization failed");
  } else {
    impl_->cg.setTolerance(1e-10);
    impl_->cg.setMaxIterations(10l * m);
    impl_->cg.compute(impl_->A);
    if (impl_->cg.info() != Eigen::Success)
      throw std::runtime_error("PoissonSolver: preconditioner setup failed");
  }
}

PoissonSolver::~PoissonSolver() = default;
PoissonSolver::PoissonSolver(PoissonSolver&&) noexcept = default;
PoissonSolver& PoissonSolver::operator=(PoissonSolver&&) noexcept = default;

GridFunction PoissonSolver::solve(const GridFunction& rhs, double bc) const {
  GridFunction b(grid_, bc);
  return solve(rhs, b);
}

GridFunction PoissonSolver::solve(const GridFunction& rhs, const GridFunction& bc) const {
  const auto& gr = *grid_;
  if (rhs.grid().get() != grid_.get() && !gr.same_layout(*rhs.grid()))
    throw std::invalid_argument("PoissonSolver: rhs lives on a different grid");
  int m = gr.num_interior();
  Eigen::VectorXd b(m);
  const auto& slot = gr.interior_slot();
  double ihx2 = 1.0 / (gr.spacing(0) * gr.spacing(0));
  double ihy2 = gr.dim() == 2 ? 1.0 / (gr.spacing(1) * gr.spacing(1)) : 0.0;
  for (int node : gr.interior_nodes()) {
    int row = slot[node];
    auto ij = gr.multi_index(node);
    // Lap u = rhs  =>  (-Lap) u = -rhs; known boundary values move to the rhs.
    double val = -rhs[node];
    auto bdry = [&](int i, int j, double w) {
      int nb = gr.node_of(i, j);
      if (slot[nb] < 0) val += bc[nb] * w;
    };
    bdry(ij[0] - 1, ij[1], ihx2);
    bdry(ij[0] + 1, ij[1], ihx2);
    if (gr.dim() == 2) {
      bdry(ij[0], ij[1] - 1, ihy2);
      bdry(ij[0], ij[1] + 1, ihy2);
    }
    b[row] = val;
  }
  Eigen::VectorXd x;
  if (impl_->use_direct) {
    x = impl_->direct.solve(b);
    if (impl_->direct.info() != Eigen::Success)
      throw std::runtime_error("PoissonSolver: direct solve failed");
  } else {
    std::lock_guard<std::mutex> lock(impl_->cg_mutex);
    x = impl_->cg.solve(b);
    if (impl_->cg.info() != Eigen::Success) {
      std::ostringstream os;
      os << "PoissonSolver: CG failed to reach 1e-10 relative residual ("
         << impl_->cg.iterations() << " iterations, error " << impl_->cg.error() << ")";
      throw std::runtime_error(os.str());
    }
  }
  GridFunction u(grid_);
  for (int node = 0; node < gr.num_nodes(); ++node)
    u[node] = slot[node] >= 0 ? x[slot[node]] : bc[node];
  return u;
}

GridFunction solve_poisson(const PoissonSolver& ps, const GridFunction& rhs, double bc) {
  return ps.solve(rhs, bc);
}

TorricelliWeight torricelli_weight(const PoissonSolver& ps) {
  GridFunction rhs(ps.grid(), -1.0);
  TorricelliWeight tw;
  tw.w = ps.solve(rhs, 1.0);
  tw.c_w = 0.0;
  for (int i = 0; i < tw.w.size(); ++i) tw.c_w = std::max(tw.c_w, tw.w[i]);
  return tw;
}

double hminus1_norm(const GridFunction& u, const PoissonSolver& ps) {
  // (-Lap) v = u with v = 0 on the boundary, then ||u||^2 = <v, u>_quadrature.
  GridFunction neg = u.map([](double x) { return -x; });
  GridFunction v = ps.solve(neg, 0.0);
  double s = 0.0;
  const auto& g = *u.grid();
  for (int i = 0; i < u.size(); ++i) s += v[i] * u[i] * g.cell_volume(i);
  return std::sqrt(std::max(0.0, s));
}

double sobolev_q(int dim, double q_two_dim) {
  if (dim == 1) return std::numeric_limits<double>::infinity();
  if (dim == 2) {
    if (!(q_two_dim > 2.0 && std::isfinite(q_two_dim)))
      throw std::invalid_argument("sobolev_q: 2D exponent must be finite and > 2");
    return q_two_dim;
  }
  if (dim >= 3) return 2.0 * dim / (dim - 2.0);
  throw std::invalid_argument("sobolev_q: dim must be >= 1");
}

// ------------------------------------------------------------------------ CSV

void write_grid_function_csv(const GridFunction& u, const std::string& path) {
  const auto& g = *u.grid();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_grid_function_csv: cannot open " + path);
  char buf[64];
  os << "# dim=" << g.dim() << "\n";
  for (int a = 0; a < g.dim(); ++a) {
    std::snprintf(buf, sizeof buf, "%.17g", g.lo(a));
    os << "# axis" << a << " lo=" << buf;
    std::snprintf(buf, sizeof buf, "%.17g", g.hi(a));
    os << " hi=" << buf << " nodes=" << g.nodes_along(a);
    std::snprintf(buf, sizeof buf, "%.17g", g.spacing(a));
    os << " spacing=" << buf << "\n";
  }
  os << (g.dim() == 1 ? "i,value" : "i,j,value") << "\n";
  for (int node = 0; node < g.num_nodes(); ++node) {
    auto ij = g.multi_index(node);
    std::snprintf(buf, sizeof buf, "%.17g", u[node]);
    if (g.dim() == 1)
      os << ij[0] << "," << buf << "\n";
    else
      os << ij[0] << "," << ij[1] << "," << buf << "\n";
  }
  if (!os) throw std::runtime_error("write_grid_function_csv: write failed for " + path);
}

namespace {

double meta_value(const std::string& line, const std::string& key, const std::string& path) {
  auto pos = line.find(key + "=");
  if (pos == std::string::npos)
    throw std::runtime_error("read_grid_function_csv: missing " + key + " in header of " + path);
  return std::stod(line.substr(pos + key.size() + 1));
}

}  // namespace

GridFunction read_grid_function_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_grid_function_csv: cannot open " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(is, line)) throw std::runtime_error("read_grid_function_csv: empty file " + path);
  ++lineno;
  if (line.rfind("# dim=", 0) != 0)
    throw std::runtime_error("read_grid_function_csv: missing dim header in " + path);
  int dim = std::stoi(line.substr(6));
  if (dim != 1 && dim != 2)
    throw std::runtime_error("read_grid_function_csv: unsupported dim in " + path);
  std::array<double, 2> lo{}, hi{};
  std::array<int, 2> n{1, 1};
  for (int a = 0; a < dim; ++a) {
    if (!std::getline(is, line))
      throw std::runtime_error("read_grid_function_csv: truncated header in " + path);
    ++lineno;
    lo[a] = meta_value(line, "lo", path);
    hi[a] = meta_value(line, "hi", path);
    n[a] = static_cast<int>(meta_value(line, "nodes", path));
  }
  if (!std::getline(is, line))
    throw std::runtime_error("read_grid_function_csv: missing column header in " + path);
  ++lineno;
  GridPtr g = dim == 1 ? std::make_shared<SpatialGrid>(lo[0], hi[0], n[0])
                       : std::make_shared<SpatialGrid>(lo, hi, n);
  GridFunction u(g);
  std::vector<bool> seen(g->num_nodes(), false);
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::array<int, 2> ij{0, 0};
    try {
      for (int a = 0; a < dim; ++a) {
        if (!std::getline(row, cell, ',')) throw std::runtime_error("short row");
        ij[a] = std::stoi(cell);
      }
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short row");
      double val = std::stod(cell);
      if (ij[0] < 0 || ij[0] >= n[0] || ij[1] < 0 || ij[1] >= n[1])
        throw std::runtime_error("index out of range");
      int node = g->node_of(ij[0], ij[1]);
      u[node] = val;
      seen[node] = true;
    } catch (const std::exception& e) {
      throw std::runtime_error("read_grid_function_csv: malformed row " +
                               std::to_string(lineno) + " in " + path + " (" + e.what() + ")");
    }
  }
  for (int node = 0; node < g->num_nodes(); ++node)
    if (!seen[node])
      throw std::runtime_error("read_grid_function_csv: node " + std::to_string(node) +
                               " missing in " + path);
  return u;
}

GridFunction read_grid_function_csv(const std::string& path, const GridPtr& expect) {
  GridFunction u = read_grid_function_csv(path);
  if (!u.grid()->same_layout(*expect))
    throw std::runtime_error("read_grid_function_csv: grid metadata in " + path +
                             " does not match the expected grid");
  return GridFunction(expect, u.values());
}

}  // namespace signfd
