#ifndef BAYESHOM_VARIATIONAL_HPP
#define BAYESHOM_VARIATIONAL_HPP

#include <string>
#include <vector>

#include "bayeshom/common.hpp"
#include "bayeshom/measure.hpp"
#include "bayeshom/operator.hpp"
#include "bayeshom/posterior.hpp"

namespace bayeshom {

/// The energy product <u, v> = (L_reg A u)^T W (L_reg A v); with white noise
/// L_reg is the identity and this is int (Lu)(Lv) dx.
class VProduct {
 public:
  VProduct(DiscreteOperator op, NoiseModel noise);

  const DiscreteOperator& op() const noexcept { return op_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  const Mesh& mesh() const noexcept { return op_.mesh(); }

  double inner(const Vector& u, const Vector& v) const;
  double norm(const Vector& v) const;
  /// L_reg A v.
  Vector energy_field(const Vector& v) const;
  /// Q = (L_reg A)^T W (L_reg A), the matrix of the product.
  const SparseMatrix& quadratic_form() const noexcept { return Q_; }
  /// J = W^{1/2} L_reg A, so Q = J^T J.
  const SparseMatrix& weighted_energy_matrix() const noexcept { return J_; }

 private:
  DiscreteOperator op_;
  NoiseModel noise_;
  SparseMatrix B_;  // L_reg A
  SparseMatrix J_;
  SparseMatrix Q_;
};

double v_inner(const VProduct& vp, const Vector& u, const Vector& v);

struct VariationalBasis {
  BasisSet basis;
  Matrix chi;          // M x N, A phi_i
  Matrix multipliers;  // N x N, column i is c with L^* chi_i = sum_j c_j psi_j
  double constraint_residual = 0.0;  // max_i |observe(phi_i) - e_i|_inf
};

/// Minimizes <phi, phi> subject to <psi_j, phi> = delta_ij for every i. The
/// saddle point system [Q C^T; C 0] is solved in augmented least-squares form
/// (in terms of J with Q = J^T J) because Q itself is too ill-conditioned once
/// the noise is regularized.
VariationalBasis basis_by_minimization(const VProduct& vp, const MeasurementSet& ms);

/// v_Psi = sum_i <psi_i, v> phi_i.
Vector project_optimal_recovery(const VProduct& vp, const BasisSet& basis, const Vector& v, const MeasurementSet& ms);

/// |<v, Gamma(., x_node)> - v(x_node)|.
double rkhs_reproduce_check(const VProduct& vp, const GammaOperator& g, const Vector& v, Index node);

struct LocalizedBasis {
  BasisSet basis;
  std::vector<Index> patch_sizes;
  std::vector<Index> fallbacks;  // measurements solved globally because their patch was inadmissible
  std::vector<std::string> warnings;
};

/// Same minimization with phi_i forced to vanish outside the ball of `radius`
/// around the support of psi_i, keeping only constraints whose support meets
/// the patch. A patch is admissible when its local constraints have full rank
/// and it has more nodes than constraints; otherwise phi_i falls back to the
/// global minimizer and a warning is recorded.
LocalizedBasis basis_by_localized_minimization(const VProduct& vp, const MeasurementSet& ms, double radius);

}  // namespace bayeshom

#endif  // BAYESHOM_VARIATIONAL_HPP
