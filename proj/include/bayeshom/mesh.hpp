#ifndef BAYESHOM_MESH_HPP
#define BAYESHOM_MESH_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "bayeshom/common.hpp"

namespace bayeshom {

/// Uniform grid on [0,1]^dim with n cells per side. Unknowns live on the
/// (n-1)^dim interior nodes; boundary nodes are eliminated (u = 0 there).
///
/// Interior nodes are ordered lexicographically by coordinate, x first:
/// node (ix, iy) with ix, iy in [1, n-1] has index (ix-1)*(n-1) + (iy-1).
/// Cells are indexed the same way by their lower-left corner, c = cx*n + cy.
class Mesh {
 public:
  Mesh(int dim, int n);

  int dim() const noexcept { return dim_; }
  int cells_per_side() const noexcept { return n_; }
  double spacing() const noexcept { return h_; }
  Index num_nodes() const noexcept { return static_cast<Index>(nodes_.size()); }
  Index num_cells() const noexcept;

  /// Mass-lumped quadrature weight of every interior node, h^dim.
  double weight() const noexcept { return weight_; }
  const Vector& weights() const noexcept { return weights_; }
  const std::vector<Point>& nodes() const noexcept { return nodes_; }
  const Point& node(Index k) const { return nodes_.at(static_cast<std::size_t>(k)); }

  /// Index of the interior node with grid coordinates (ix, iy), or -1 for a boundary node.
  Index node_index(int ix, int iy = 0) const noexcept;
  Index cell_index(int cx, int cy = 0) const noexcept;
  Point cell_center(Index cell) const;

  /// Nearest interior node; ties go to the lowest node index.
  Index nearest_node(const Point& p) const;

  /// Every grid point including the boundary, (n+1)^dim of them.
  std::vector<Point> closed_grid() const;

  /// Discrete L2 product sum_k w_k u_k v_k.
  double l2_inner(const Vector& u, const Vector& v) const;
  double l2_norm(const Vector& u) const;

  double distance(const Point& a, const Point& b) const noexcept;

 private:
  int dim_;
  int n_;
  double h_;
  double weight_;
  Vector weights_;
  std::vector<Point> nodes_;
};

Mesh build_mesh(int dim, int n);

/// Symmetric dim x dim coefficient on one cell. a12 and a22 are unused in 1D.
struct CellTensor {
  double a11 = 1.0;
  double a12 = 0.0;
  double a22 = 1.0;
};

struct CoefficientField {
  int dim = 1;
  std::vector<CellTensor> values;  // one per cell
  double lambda_min = 1.0;
  double lambda_max = 1.0;
};

enum class CoefficientKind { Constant, Layered, Checkerboard, LognormalRough };

struct CoefficientSpec {
  CoefficientKind kind = CoefficientKind::Constant;
  double value = 1.0;     // constant
  double contrast = 1.0;  // layered / checkerboard / lognormal_rough
  int layers = 8;         // layered: stripes along x
  int block = 1;          // checkerboard: cells per tile side
  std::uint64_t seed = 0; // lognormal_rough

  static CoefficientSpec constant(double c);
  static CoefficientSpec layered(double contrast, int layers = 8);
  static CoefficientSpec checkerboard(double contrast, int block = 1);
  static CoefficientSpec lognormal_rough(std::uint64_t seed, double contrast);
};

CoefficientField make_coefficient(const Mesh& mesh, const CoefficientSpec& spec);

/// Builds a field from explicit cell tensors, computing and checking its ellipticity bounds.
CoefficientField coefficient_from_cells(int dim, std::vector<CellTensor> cells);

/// Eigenvalue range of one cell tensor.
std::pair<double, double> cell_eigenvalues(const CellTensor& t, int dim);

/// Fill distance H = max over the closed grid of min_i max_{y in S_i} |x - y|.
/// With singleton supports this is the usual sup_x min_i |x - x_i|.
double mesh_norm(const Mesh& grid, std::span<const std::vector<Point>> supports);

}  // namespace bayeshom

#endif  // BAYESHOM_MESH_HPP
