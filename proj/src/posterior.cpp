#include "bayeshom/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "bayeshom/parallel.hpp"

namespace bayeshom {

GammaOperator::GammaOperator(DiscreteOperator op, NoiseModel noise) : op_(std::move(op)), noise_(std::move(noise)) {
  if (!noise_.is_white())
    require(noise_.laplacian() != nullptr && noise_.laplacian()->size() == op_.size(),
            "gamma: noise model was built on a different mesh");
}

Vector GammaOperator::apply(const Vector& f) const {
  require(f.size() == size(), "gamma_apply: vector length does not match operator size");
  const double w = mesh().weight();
  Vector t = op_.solve_adjoint(w * f);
  t = noise_.solve_transpose(t);
  t /= w;
  t = noise_.solve(t);
  return op_.solve(t);
}

Vector GammaOperator::column(Index node) const {
  require(node >= 0 && node < size(), "gamma: node index out of range");
  Vector dirac = Vector::Zero(size());
  dirac(node) = 1.0 / mesh().weight();
  return apply(dirac);
}

double GammaOperator::diagonal_at(Index node) const { return column(node)(node); }

Vector gamma_apply(const GammaOperator& g, const Vector& f) { return g.apply(f); }

Matrix ThetaMatrix::inverse() const { return chol.solve(Matrix::Identity(size(), size())); }

ThetaMatrix theta_from_values(Matrix raw, Matrix columns) {
  require(raw.rows() == raw.cols() && raw.rows() >= 1, "theta: matrix must be square and nonempty");
  ThetaMatrix th;
  const double scale = raw.cwiseAbs().maxCoeff();
  th.asymmetry = scale > 0.0 ? (raw - raw.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
  th.values = 0.5 * (raw + raw.transpose());
  th.columns = std::move(columns);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(th.values, Eigen::EigenvaluesOnly);
  th.min_eigenvalue = eig.eigenvalues().minCoeff();
  th.max_eigenvalue = eig.eigenvalues().maxCoeff();
  th.chol.compute(th.values);
  if (th.chol.info() != Eigen::Success || !(th.min_eigenvalue > 0.0)) {
    std::ostringstream msg;
    msg << "Theta is not positive definite (min eigenvalue " << th.min_eigenvalue
        << "); the measurements are rank deficient or a solve failed";
    throw VerificationError("theta_spd", msg.str());
  }
  return th;
}

ThetaMatrix assemble_theta(const GammaOperator& g, const MeasurementSet& ms) {
  require(ms.num_nodes() == g.size(), "assemble_theta: measurements built on a different mesh");
  const Index N = ms.size();
  Matrix columns(g.size(), N);
  parallel_for(N, [&](Index j) { columns.col(j) = g.apply(ms.dual_vectors().col(j)); });
  // Theta_ij = <psi_i, theta_j>.
  Matrix raw = ms.observe_all(columns);
  return theta_from_values(std::move(raw), std::move(columns));
}

BasisSet basis_by_conditioning(const GammaOperator& g, const MeasurementSet& ms, const ThetaMatrix& th) {
  require(th.size() == ms.size(), "basis_by_conditioning: Theta size does not match measurement count");
  require(th.columns.rows() == g.size() && th.columns.cols() == ms.size(),
          "basis_by_conditioning: Theta was assembled without its theta vectors");
  BasisSet basis;
  basis.theta = th.columns;
  basis.phi = th.chol.solve(th.columns.transpose()).transpose();
  return basis;
}

Vector posterior_mean(const BasisSet& basis, const Vector& obs) {
  require(obs.size() == basis.size(), "posterior_mean: observation length does not match basis size");
  return basis.phi * obs;
}

double VarianceField::at(Index node) const {
  require(static_cast<Index>(nodes.size()) > node && nodes[static_cast<std::size_t>(node)] == node,
          "VarianceField::at: variance was not evaluated on every node");
  return sigma2(node);
}

VarianceField posterior_variance(const GammaOperator& g, const MeasurementSet& ms, const ThetaMatrix& th,
                                 std::vector<Index> nodes) {
  require(th.columns.rows() == g.size() && th.columns.cols() == ms.size(),
          "posterior_variance: Theta was assembled without its theta vectors");
  if (nodes.empty()) {
    nodes.resize(static_cast<std::size_t>(g.size()));
    std::iota(nodes.begin(), nodes.end(), Index{0});
  }
  VarianceField var;
  const Index K = static_cast<Index>(nodes.size());
  var.sigma2.resize(K);
  var.prior.resize(K);
  Vector raw(K);
  const auto L = th.chol.matrixL();
  parallel_for(K, [&](Index i) {
    const Index node = nodes[static_cast<std::size_t>(i)];
    require(node >= 0 && node < g.size(), "posterior_variance: node index out of range");
    const double prior = g.diagonal_at(node);
    const Vector s = L.solve(th.columns.row(node).transpose());
    var.prior(i) = prior;
    raw(i) = prior - s.squaredNorm();
  });
  var.min_raw = 0.0;
  for (Index i = 0; i < K; ++i) {
    const double rel = var.prior(i) > 0.0 ? raw(i) / var.prior(i) : raw(i);
    var.min_raw = std::min(var.min_raw, rel);
    if (rel < -1e-10) {
      std::ostringstream msg;
      msg << "posterior variance " << raw(i) << " at node " << nodes[static_cast<std::size_t>(i)]
          << " is negative beyond round-off (prior " << var.prior(i) << ")";
      throw VerificationError("variance_nonnegative", msg.str());
    }
    var.sigma2(i) = std::max(0.0, raw(i));
  }
  var.nodes = std::move(nodes);
  return var;
}

Posterior build_posterior(const DiscreteOperator& op, const NoiseModel& noise, const MeasurementSet& ms) {
  GammaOperator gamma(op, noise);
  ThetaMatrix theta = assemble_theta(gamma, ms);
  BasisSet basis = basis_by_conditioning(gamma, ms, theta);
  return Posterior{std::move(gamma), ms, std::move(theta), std::move(basis)};
}

}  // namespace bayeshom
