#ifndef BAYESHOM_MEASURE_HPP
#define BAYESHOM_MEASURE_HPP

#include <iosfwd>
#include <vector>

#include "bayeshom/common.hpp"
#include "bayeshom/mesh.hpp"

namespace bayeshom {

enum class MeasurementKind { Dirac, VoronoiIndicator, Density };

const char* to_string(MeasurementKind kind) noexcept;

/// N linear functionals psi_i, each stored as a nodal dual vector p_i so that
/// <psi_i, u> = p_i^T W u.
class MeasurementSet {
 public:
  MeasurementSet(const Mesh& mesh, MeasurementKind kind, Matrix dual,
                 std::vector<Point> anchors = {});

  MeasurementKind kind() const noexcept { return kind_; }
  Index size() const noexcept { return dual_.cols(); }
  Index num_nodes() const noexcept { return dual_.rows(); }
  const Matrix& dual_vectors() const noexcept { return dual_; }
  /// N x M matrix with rows p_i^T W.
  const Matrix& constraint_matrix() const noexcept { return constraints_; }
  /// Snapped Dirac points or Voronoi centers; empty for densities.
  const std::vector<Point>& anchors() const noexcept { return anchors_; }
  /// Node indices where p_i is nonzero.
  const std::vector<std::vector<Index>>& supports() const noexcept { return supports_; }
  /// Node coordinates of each support.
  std::vector<std::vector<Point>> support_points(const Mesh& mesh) const;
  /// Dirac node of measurement i (Dirac kind only).
  Index dirac_node(Index i) const;

  Vector observe(const Vector& u) const;
  /// Columns are observations of the columns of `u`.
  Matrix observe_all(const Matrix& u) const;

 private:
  MeasurementKind kind_;
  Matrix dual_;
  Matrix constraints_;
  std::vector<Point> anchors_;
  std::vector<std::vector<Index>> supports_;
  std::vector<Index> dirac_nodes_;
};

/// Diracs snapped to the nearest interior node; duplicate snaps are rejected.
MeasurementSet make_dirac(const Mesh& mesh, const std::vector<Point>& points);

/// Normalized indicators of the discrete Voronoi cells of `centers`. Each
/// interior node joins the nearest center, ties going to the lower center index.
MeasurementSet make_voronoi(const Mesh& mesh, const std::vector<Point>& centers);

/// Nodal probability densities (columns of `densities`): nonnegative with unit
/// discrete mass. Rank deficiency is rejected.
MeasurementSet make_density(const Mesh& mesh, const Matrix& densities);

/// Tent densities max(0, 1 - |x - c|/radius) (product form in 2D), normalized to unit mass.
Matrix hat_densities(const Mesh& mesh, const std::vector<Point>& centers, double radius);

/// Regular lattice {i/(m+1)}^dim, i = 1..m.
std::vector<Point> lattice_points(int dim, int per_side);

Vector observe(const MeasurementSet& ms, const Vector& u);

/// CSV rows "index,kind,..." with the Dirac/center coordinates, or for
/// densities the list of "node:value" pairs.
void write_measurements_csv(std::ostream& os, const Mesh& mesh, const MeasurementSet& ms);

}  // namespace bayeshom

#endif  // BAYESHOM_MEASURE_HPP
