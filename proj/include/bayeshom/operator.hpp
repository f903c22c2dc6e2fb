#ifndef BAYESHOM_OPERATOR_HPP
#define BAYESHOM_OPERATOR_HPP

#include <iosfwd>
#include <memory>
#include <optional>

#include "bayeshom/common.hpp"
#include "bayeshom/mesh.hpp"

namespace bayeshom {

/// Square operator on interior nodal vectors with a cached direct factorization.
///
/// `solve` is the discrete Green's action: for a nodal source density f it
/// returns u with matrix * u = f, the analogue of u(x) = int G(x,y) f(y) dy.
/// Homogeneous Dirichlet data is implicit: boundary nodes are not unknowns.
class DiscreteOperator {
 public:
  /// Factorizes `matrix`; throws SolverError if it is singular.
  DiscreteOperator(const Mesh& mesh, SparseMatrix matrix);

  const Mesh& mesh() const noexcept { return mesh_; }
  const SparseMatrix& matrix() const noexcept { return matrix_; }
  Index size() const noexcept { return matrix_.rows(); }
  bool symmetric() const noexcept { return symmetric_; }

  Vector apply(const Vector& v) const;
  Vector solve(const Vector& f) const;
  /// Green's action of the adjoint with respect to the discrete L2 product.
  Vector solve_adjoint(const Vector& f) const;

 private:
  struct Factorization;

  Mesh mesh_;
  SparseMatrix matrix_;
  bool symmetric_ = false;
  std::shared_ptr<const Factorization> factor_;
};

/// Vertex-centred finite-volume discretization of -div(a grad u) with u = 0 on
/// the boundary. In 1D the flux between neighbouring nodes uses the cell between
/// them; in 2D it uses the harmonic mean of the two cells sharing the link.
DiscreteOperator assemble_elliptic(const Mesh& mesh, const CoefficientField& a);

/// Dirichlet Laplacian, i.e. assemble_elliptic with a = 1.
DiscreteOperator assemble_laplacian(const Mesh& mesh);

Vector apply(const DiscreteOperator& op, const Vector& v);
Vector greens_apply(const DiscreteOperator& op, const Vector& f);
Vector adjoint_greens_apply(const DiscreteOperator& op, const Vector& f);

/// Source-noise model. White noise has discrete covariance W^{-1}; the
/// regularized kind is xi = L_reg^{-1} xi' with xi' white and L_reg = A_lap^k,
/// A_lap the nodal Dirichlet Laplacian.
class NoiseModel {
 public:
  static NoiseModel white();
  static NoiseModel regularized(const Mesh& mesh, int power);

  bool is_white() const noexcept { return power_ == 0; }
  int power() const noexcept { return power_; }
  const DiscreteOperator* laplacian() const noexcept { return laplacian_ ? &*laplacian_ : nullptr; }

  /// L_reg v (identity for white noise).
  Vector regularize(const Vector& v) const;
  /// L_reg^{-1} v.
  Vector solve(const Vector& v) const;
  /// L_reg^{-T} v.
  Vector solve_transpose(const Vector& v) const;

 private:
  int power_ = 0;
  std::optional<DiscreteOperator> laplacian_;
};

/// Applies the inverse noise covariance: W f for white noise,
/// L_reg^T W L_reg f for regularized noise, so that f . result is the squared
/// Lambda^{-1} norm of f.
Vector noise_apply_inverse_covariance(const NoiseModel& nm, const Mesh& mesh, const Vector& f);

/// Writes "row col value" lines, 0-based, one per stored nonzero.
void write_triplets(std::ostream& os, const SparseMatrix& m);

}  // namespace bayeshom

#endif  // BAYESHOM_OPERATOR_HPP
