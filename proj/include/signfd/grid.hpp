#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace signfd {

// Uniform tensor grid over an open interval (1D) or axis-aligned open rectangle
// (2D). Nodes include the boundary; the flattened index is row-major with axis 0
// fastest. Quadrature is node-centered-cell: interior nodes own a full cell
// (h resp. hx*hy), boundary nodes own the clipped half cell per axis, so cell
// volumes sum exactly to the domain measure.
class SpatialGrid {
 public:
  SpatialGrid(double lo, double hi, int nodes);  // 1D
  SpatialGrid(std::array<double, 2> lo, std::array<double, 2> hi,
              std::array<int, 2> nodes);  // 2D

  int dim() const { return dim_; }
  int num_nodes() const { return total_; }
  int num_interior() const { return static_cast<int>(interior_.size()); }
  int nodes_along(int axis) const { return n_[axis]; }
  double lo(int axis) const { return lo_[axis]; }
  double hi(int axis) const { return hi_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  double measure() const;  // |O|

  int node_of(int i, int j = 0) const { return dim_ == 1 ? i : i + n_[0] * j; }
  std::array<int, 2> multi_index(int node) const;
  double coord(int node, int axis) const;
  bool is_boundary(int node) const;
  double cell_volume(int node) const;

  // interior node list and node -> interior slot (-1 on the boundary)
  const std::vector<int>& interior_nodes() const { return interior_; }
  const std::vector<int>& interior_slot() const { return slot_; }

  bool same_layout(const SpatialGrid& other) const;

 private:
  int dim_;
  std::array<double, 2> lo_{}, hi_{};
  std::array<int, 2> n_{};
  std::array<double, 2> h_{};
  int total_;
  std::vector<int> interior_;
  std::vector<int> slot_;
};

using GridPtr = std::shared_ptr<const SpatialGrid>;

// Nodal values on a SpatialGrid.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(GridPtr g, double fill = 0.0);
  GridFunction(GridPtr g, std::vector<double> values);
  static GridFunction from_fn(GridPtr g, const std::function<double(double)>& f);
  static GridFunction from_fn2(GridPtr g,
                               const std::function<double(double, double)>& f);

  const GridPtr& grid() const { return grid_; }
  int size() const { return static_cast<int>(v_.size()); }
  double operator[](int node) const { return v_[node]; }
  double& operator[](int node) { return v_[node]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  GridFunction map(const std::function<double(double)>& f) const;

 private:
  GridPtr grid_;
  std::vector<double> v_;
};

// 3-point / 5-point Dirichlet Laplacian. Interior rows apply the stencil using
// neighbor nodal values; boundary rows are the identity. Exact on affine
// functions at interior nodes; symmetric on zero-boundary functions.
GridFunction laplacian_apply(const GridFunction& u);

// Node-centered-cell quadrature of |u|^p (and its weighted variant).
// Requires p >= 1; weight must be nonnegative.
double lp_norm(const GridFunction& u, double p);
double weighted_lp_norm(const GridFunction& u, double p, const GridFunction& weight);
double integral(const GridFunction& u);  // plain quadrature of u
double sup_abs(const GridFunction& u);
double min_value(const GridFunction& u);

// First derivatives along each axis: second-order centered differences at
// interior nodes, second-order one-sided at the boundary.
std::vector<GridFunction> gradient(const GridFunction& u);

// Zero-boundary Poisson operator -Lap u = rhs with a cached factorization:
// direct sparse Cholesky on small problems, conjugate gradient at 1e-10
// relative residual on large ones. Thread-safe for concurrent solves.
class PoissonSolver {
 public:
  explicit PoissonSolver(GridPtr g);
  ~PoissonSolver();
  PoissonSolver(PoissonSolver&&) noexcept;
  PoissonSolver& operator=(PoissonSolver&&) noexcept;

  const GridPtr& grid() const { return grid_; }
  // Solve Lap u = rhs at interior nodes, u = bc on the boundary.
  GridFunction solve(const GridFunction& rhs, double bc = 0.0) const;
  GridFunction solve(const GridFunction& rhs, const GridFunction& bc) const;

 private:
  GridPtr grid_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

GridFunction solve_poisson(const PoissonSolver& ps, const GridFunction& rhs,
                           double bc = 0.0);

// Torricelli weight: Lap w = -1 in O, w = 1 on the boundary. 1 <= w <= C_w.
struct TorricelliWeight {
  GridFunction w;
  double c_w = 0.0;  // sup w
};
TorricelliWeight torricelli_weight(const PoissonSolver& ps);

// H^{-1} norm via the quadratic form of (-Lap)^{-1} with zero boundary:
// ||u||^2 = <(-Lap)^{-1} u, u> in the grid quadrature.
double hminus1_norm(const GridFunction& u, const PoissonSolver& ps);

// Sobolev embedding exponent for H^1_0: +inf for d=1, a configurable finite
// value (default 6) for d=2, 2d/(d-2) for d >= 3.
double sobolev_q(int dim, double q_two_dim = 6.0);

// CSV persistence: header comments carry the grid metadata, then one row per
// node with the index axes followed by the value.
void write_grid_function_csv(const GridFunction& u, const std::string& path);
GridFunction read_grid_function_csv(const std::string& path);
// Validating variant: the file's grid metadata must match `expect`.
GridFunction read_grid_function_csv(const std::string& path, const GridPtr& expect);

}  // namespace signfd
