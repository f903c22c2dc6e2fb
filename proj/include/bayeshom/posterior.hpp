#ifndef BAYESHOM_POSTERIOR_HPP
#define BAYESHOM_POSTERIOR_HPP

#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "bayeshom/common.hpp"
#include "bayeshom/measure.hpp"
#include "bayeshom/operator.hpp"

namespace bayeshom {

/// Covariance of the solution of A u = xi. In nodal coordinates
///   Gamma = A^{-1} Lambda A^{-T},  Lambda = L_reg^{-1} W^{-1} L_reg^{-T},
/// so Gamma(x_j, x_k) is entry (j,k). Only its action is ever formed.
class GammaOperator {
 public:
  GammaOperator(DiscreteOperator op, NoiseModel noise);

  const DiscreteOperator& op() const noexcept { return op_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  const Mesh& mesh() const noexcept { return op_.mesh(); }
  Index size() const noexcept { return op_.size(); }

  /// Nodal values of int Gamma(x, y) f(y) dy.
  Vector apply(const Vector& f) const;
  /// Gamma(., x_k), i.e. apply() of the discrete Dirac at node k.
  Vector column(Index node) const;
  /// Gamma(x_k, x_k), taken from column(node).
  double diagonal_at(Index node) const;

 private:
  DiscreteOperator op_;
  NoiseModel noise_;
};

Vector gamma_apply(const GammaOperator& g, const Vector& f);

/// Gram matrix Theta_ij = <psi_i, Gamma psi_j> with its Cholesky factor and
/// the vectors theta_j = Gamma psi_j it was assembled from.
struct ThetaMatrix {
  Matrix values;   // symmetrized
  Matrix columns;  // M x N, theta_j
  double asymmetry = 0.0;  // max |Theta - Theta^T| / max |Theta| before symmetrization
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  Eigen::LLT<Matrix> chol;

  Index size() const noexcept { return values.rows(); }
  Matrix inverse() const;
  Vector solve(const Vector& b) const { return chol.solve(b); }
};

/// N applications of Gamma, one per measurement.
ThetaMatrix assemble_theta(const GammaOperator& g, const MeasurementSet& ms);

/// Factorizes an explicit Theta. Throws VerificationError("theta_spd") with the
/// minimum eigenvalue when it is not positive definite.
ThetaMatrix theta_from_values(Matrix raw, Matrix columns);

struct BasisSet {
  Matrix phi;    // M x N, column i is phi_i
  Matrix theta;  // M x N, Gamma psi_i (empty when the basis came from minimization)

  Index size() const noexcept { return phi.cols(); }
};

/// phi_i = sum_j Theta^{-1}_ij theta_j.
BasisSet basis_by_conditioning(const GammaOperator& g, const MeasurementSet& ms, const ThetaMatrix& th);

/// E[u | Psi = obs] = sum_i obs_i phi_i.
Vector posterior_mean(const BasisSet& basis, const Vector& obs);

struct VarianceField {
  std::vector<Index> nodes;
  Vector sigma2;  // clamped at zero
  Vector prior;   // Gamma(x, x)
  double min_raw = 0.0;  // smallest sigma2 / Gamma(x,x) before clamping

  /// sigma2 for every node of the mesh (nodes must then be 0..M-1).
  double at(Index node) const;
};

/// sigma^2(x) = Gamma(x,x) - theta(x)^T Theta^{-1} theta(x) at `nodes` (all nodes
/// when empty). Values below -1e-10 Gamma(x,x) throw VerificationError.
VarianceField posterior_variance(const GammaOperator& g, const MeasurementSet& ms, const ThetaMatrix& th,
                                 std::vector<Index> nodes = {});

/// Everything conditioning produces for one (operator, noise, measurements) triple.
struct Posterior {
  GammaOperator gamma;
  MeasurementSet measurements;
  ThetaMatrix theta;
  BasisSet basis;
};

Posterior build_posterior(const DiscreteOperator& op, const NoiseModel& noise, const MeasurementSet& ms);

}  // namespace bayeshom

#endif  // BAYESHOM_POSTERIOR_HPP
