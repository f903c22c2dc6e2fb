#include "bayeshom/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SparseLU>

namespace bayeshom {

namespace {

struct KktResult {
  Matrix phi;          // p x k
  Matrix multipliers;  // r x k, c = -lambda
};

double max_abs(const SparseMatrix& m) {
  double out = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) out = std::max(out, std::abs(it.value()));
  return out;
}

// Minimizes |J phi|^2 subject to C phi = targets (column by column) through
// the augmented system
//   [ a I   -J    0  ] [y  ]   [ 0      ]
//   [ -J^T   0  -s C^T] [phi] = [ 0      ]
//   [ 0    -s C   0  ] [nu ]   [ -s t   ]
// whose conditioning follows cond(J) rather than cond(J^T J); with J^T J = Q
// this is the same stationarity condition as [Q C^T; C 0]. Sparse LU with two
// steps of iterative refinement.
KktResult solve_kkt(const SparseMatrix& J, const Matrix& C, const Matrix& targets) {
  const Index m = J.rows();
  const Index p = J.cols();
  const Index r = C.rows();
  const double a = max_abs(J);
  const double cmax = C.cwiseAbs().maxCoeff();
  require(a > 0.0 && cmax > 0.0, "KKT: empty energy or constraint matrix");
  const double s = a / cmax;

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(m + 2 * J.nonZeros()) + 2 * static_cast<std::size_t>(r * p));
  for (Index i = 0; i < m; ++i) trip.emplace_back(i, i, a);
  for (int k = 0; k < J.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(J, k); it; ++it) {
      trip.emplace_back(it.row(), m + it.col(), -it.value());
      trip.emplace_back(m + it.col(), it.row(), -it.value());
    }
  }
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < p; ++j) {
      const double v = C(i, j);
      if (v == 0.0) continue;
      trip.emplace_back(m + p + i, m + j, -s * v);
      trip.emplace_back(m + j, m + p + i, -s * v);
    }
  }
  const Index dim = m + p + r;
  SparseMatrix K(dim, dim);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();

  Matrix rhs = Matrix::Zero(dim, targets.cols());
  rhs.bottomRows(r) = -s * targets;

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success)
    throw SolverError("KKT factorization failed (rank-deficient constraints?): " + lu.lastErrorMessage());
  Matrix x = lu.solve(rhs);
  for (int step = 0; step < 2; ++step) x += Matrix(lu.solve(rhs - K * x));
  if (!x.allFinite()) throw SolverError("KKT system is singular: the constraints are rank deficient");
  // J^T J phi + a s C^T nu = 0, so lambda = a s nu and c = -lambda.
  return {x.middleRows(m, p), -a * s * x.bottomRows(r)};
}

// Columns `keep` of J, dropping rows that become empty.
SparseMatrix column_restriction(const SparseMatrix& J, const std::vector<Index>& keep) {
  std::vector<Index> row_map(static_cast<std::size_t>(J.rows()), -1);
  Index rows = 0;
  std::vector<Triplet> trip;
  for (std::size_t c = 0; c < keep.size(); ++c) {
    for (SparseMatrix::InnerIterator it(J, keep[c]); it; ++it) {
      Index& rr = row_map[static_cast<std::size_t>(it.row())];
      if (rr < 0) rr = rows++;
      trip.emplace_back(rr, static_cast<Index>(c), it.value());
    }
  }
  SparseMatrix sub(rows, static_cast<Index>(keep.size()));
  sub.setFromTriplets(trip.begin(), trip.end());
  sub.makeCompressed();
  return sub;
}

}  // namespace

VProduct::VProduct(DiscreteOperator op, NoiseModel noise) : op_(std::move(op)), noise_(std::move(noise)) {
  B_ = op_.matrix();
  if (!noise_.is_white()) {
    require(noise_.laplacian() != nullptr && noise_.laplacian()->size() == op_.size(),
            "VProduct: noise model was built on a different mesh");
    for (int k = 0; k < noise_.power(); ++k) B_ = SparseMatrix(noise_.laplacian()->matrix() * B_);
  }
  J_ = B_ * std::sqrt(mesh().weight());
  J_.makeCompressed();
  Q_ = SparseMatrix(J_.transpose() * J_);
  Q_.makeCompressed();
}

Vector VProduct::energy_field(const Vector& v) const {
  require(v.size() == op_.size(), "v_inner: vector length does not match operator size");
  return noise_.regularize(op_.apply(v));
}

double VProduct::inner(const Vector& u, const Vector& v) const {
  return mesh().weight() * energy_field(u).dot(energy_field(v));
}

double VProduct::norm(const Vector& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

double v_inner(const VProduct& vp, const Vector& u, const Vector& v) { return vp.inner(u, v); }

VariationalBasis basis_by_minimization(const VProduct& vp, const MeasurementSet& ms) {
  require(ms.num_nodes() == vp.op().size(), "basis_by_minimization: measurements built on a different mesh");
  const Index N = ms.size();
  KktResult kkt = solve_kkt(vp.weighted_energy_matrix(), ms.constraint_matrix(), Matrix::Identity(N, N));

  VariationalBasis out;
  out.basis.phi = std::move(kkt.phi);
  out.multipliers = std::move(kkt.multipliers);
  out.chi = vp.op().matrix() * out.basis.phi;
  const Matrix obs = ms.observe_all(out.basis.phi);
  out.constraint_residual = (obs - Matrix::Identity(N, N)).cwiseAbs().maxCoeff();
  if (!(out.constraint_residual <= 1e-8)) {
    std::ostringstream msg;
    msg << "constraint residual " << out.constraint_residual << " exceeds 1e-8";
    throw VerificationError("kkt_constraints", msg.str());
  }
  return out;
}

Vector project_optimal_recovery(const VProduct& vp, const BasisSet& basis, const Vector& v, const MeasurementSet& ms) {
  require(v.size() == vp.op().size() && basis.phi.rows() == v.size(), "project_optimal_recovery: size mismatch");
  require(basis.size() == ms.size(), "project_optimal_recovery: basis and measurements disagree on N");
  require(v.allFinite(), "project_optimal_recovery: non-finite input");
  return basis.phi * ms.observe(v);
}

double rkhs_reproduce_check(const VProduct& vp, const GammaOperator& g, const Vector& v, Index node) {
  require(node >= 0 && node < v.size(), "rkhs_reproduce_check: node out of range");
  return std::abs(vp.inner(v, g.column(node)) - v(node));
}

LocalizedBasis basis_by_localized_minimization(const VProduct& vp, const MeasurementSet& ms, double radius) {
  require(radius > 0.0, "localized minimization: radius must be positive");
  const Mesh& mesh = vp.mesh();
  const Index M = mesh.num_nodes();
  const Index N = ms.size();
  require(ms.num_nodes() == M, "localized minimization: measurements built on a different mesh");

  LocalizedBasis out;
  out.basis.phi = Matrix::Zero(M, N);
  out.patch_sizes.assign(static_cast<std::size_t>(N), 0);
  std::optional<Matrix> global;

  const auto& supports = ms.supports();
  for (Index i = 0; i < N; ++i) {
    const auto& support = supports[static_cast<std::size_t>(i)];
    std::vector<Index> patch;
    std::vector<char> in_patch(static_cast<std::size_t>(M), 0);
    for (Index k = 0; k < M; ++k) {
      double d = std::numeric_limits<double>::infinity();
      for (Index s : support) d = std::min(d, mesh.distance(mesh.node(k), mesh.node(s)));
      if (d <= radius) {
        patch.push_back(k);
        in_patch[static_cast<std::size_t>(k)] = 1;
      }
    }
    std::vector<Index> local_constraints;
    Index local_i = -1;
    for (Index j = 0; j < N; ++j) {
      const auto& sj = supports[static_cast<std::size_t>(j)];
      if (std::any_of(sj.begin(), sj.end(), [&](Index k) { return in_patch[static_cast<std::size_t>(k)] != 0; })) {
        if (j == i) local_i = static_cast<Index>(local_constraints.size());
        local_constraints.push_back(j);
      }
    }
    out.patch_sizes[static_cast<std::size_t>(i)] = static_cast<Index>(patch.size());

    const Index p = static_cast<Index>(patch.size());
    const Index r = static_cast<Index>(local_constraints.size());
    Matrix C(r, p);
    for (Index a = 0; a < r; ++a)
      for (Index b = 0; b < p; ++b)
        C(a, b) = ms.constraint_matrix()(local_constraints[static_cast<std::size_t>(a)], patch[static_cast<std::size_t>(b)]);

    bool admissible = local_i >= 0 && p > r;
    if (admissible) {
      Eigen::ColPivHouseholderQR<Matrix> qr(C.transpose());
      admissible = qr.rank() == r;
    }
    if (!admissible) {
      std::ostringstream msg;
      msg << "measurement " << i << ": patch of radius " << radius << " (" << p << " nodes, " << r
          << " constraints) cannot support a local minimizer; using the global basis function";
      out.warnings.push_back(msg.str());
      out.fallbacks.push_back(i);
      if (!global) global = basis_by_minimization(vp, ms).basis.phi;
      out.basis.phi.col(i) = global->col(i);
      continue;
    }

    const SparseMatrix Jp = column_restriction(vp.weighted_energy_matrix(), patch);
    Matrix target = Matrix::Zero(r, 1);
    target(local_i, 0) = 1.0;
    const KktResult kkt = solve_kkt(Jp, C, target);
    for (Index b = 0; b < p; ++b) out.basis.phi(patch[static_cast<std::size_t>(b)], i) = kkt.phi(b, 0);
  }
  return out;
}

}  // namespace bayeshom
