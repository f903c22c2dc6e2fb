#include "bayeshom/operator.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace bayeshom {

struct DiscreteOperator::Factorization {
  // Exactly one of the two branches is populated.
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_transpose;
  bool use_ldlt = false;
};

namespace {

bool is_structurally_symmetric(const SparseMatrix& m) {
  if (m.rows() != m.cols()) return false;
  const SparseMatrix t = m.transpose();
  const SparseMatrix diff = m - t;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it)
      if (it.value() != 0.0) return false;
  return true;
}

void check_size(const DiscreteOperator& op, const Vector& v, const char* what) {
  require(v.size() == op.size(), std::string(what) + ": vector length " + std::to_string(v.size()) +
                                     " does not match operator size " + std::to_string(op.size()));
}

}  // namespace

DiscreteOperator::DiscreteOperator(const Mesh& mesh, SparseMatrix matrix)
    : mesh_(mesh), matrix_(std::move(matrix)) {
  require(matrix_.rows() == matrix_.cols(), "operator: matrix must be square");
  require(matrix_.rows() == mesh_.num_nodes(), "operator: matrix size does not match mesh");
  matrix_.makeCompressed();
  symmetric_ = is_structurally_symmetric(matrix_);

  auto f = std::make_shared<Factorization>();
  if (symmetric_) {
    f->use_ldlt = true;
    f->ldlt.compute(matrix_);
    if (f->ldlt.info() != Eigen::Success) throw SolverError("operator: LDLT factorization failed");
    const double dmin = f->ldlt.vectorD().cwiseAbs().minCoeff();
    if (!(dmin > 0.0)) throw SolverError("operator: matrix is singular (zero pivot)");
  } else {
    f->lu.compute(matrix_);
    if (f->lu.info() != Eigen::Success) throw SolverError("operator: LU factorization failed: " + f->lu.lastErrorMessage());
    SparseMatrix t = matrix_.transpose();
    t.makeCompressed();
    f->lu_transpose.compute(t);
    if (f->lu_transpose.info() != Eigen::Success) throw SolverError("operator: transpose LU factorization failed");
  }
  factor_ = std::move(f);
}

Vector DiscreteOperator::apply(const Vector& v) const {
  check_size(*this, v, "apply");
  return matrix_ * v;
}

Vector DiscreteOperator::solve(const Vector& f) const {
  check_size(*this, f, "greens_apply");
  Vector u = factor_->use_ldlt ? Vector(factor_->ldlt.solve(f)) : Vector(factor_->lu.solve(f));
  if (!u.allFinite()) throw SolverError("greens_apply: solve produced non-finite values");
  return u;
}

Vector DiscreteOperator::solve_adjoint(const Vector& f) const {
  check_size(*this, f, "adjoint_greens_apply");
  // The L2 adjoint of A^{-1} is W^{-1} A^{-T} W; with uniform weights the two
  // weight factors cancel.
  if (factor_->use_ldlt) return solve(f);
  Vector u = factor_->lu_transpose.solve(f);
  if (!u.allFinite()) throw SolverError("adjoint_greens_apply: solve produced non-finite values");
  return u;
}

DiscreteOperator assemble_elliptic(const Mesh& mesh, const CoefficientField& a) {
  require(a.dim == mesh.dim(), "assemble_elliptic: coefficient dimension does not match mesh");
  require(static_cast<Index>(a.values.size()) == mesh.num_cells(),
          "assemble_elliptic: coefficient has " + std::to_string(a.values.size()) + " cells, mesh has " +
              std::to_string(mesh.num_cells()));
  const int n = mesh.cells_per_side();
  const double inv_h2 = 1.0 / (mesh.spacing() * mesh.spacing());
  const Index M = mesh.num_nodes();

  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(M) * (mesh.dim() == 1 ? 3 : 5));

  auto cell = [&](int cx, int cy) -> const CellTensor& {
    return a.values[static_cast<std::size_t>(mesh.cell_index(cx, cy))];
  };

  if (mesh.dim() == 1) {
    for (int ix = 1; ix < n; ++ix) {
      const Index row = mesh.node_index(ix);
      const double left = cell(ix - 1, 0).a11 * inv_h2;
      const double right = cell(ix, 0).a11 * inv_h2;
      trip.emplace_back(row, row, left + right);
      if (const Index l = mesh.node_index(ix - 1); l >= 0) trip.emplace_back(row, l, -left);
      if (const Index r = mesh.node_index(ix + 1); r >= 0) trip.emplace_back(row, r, -right);
    }
  } else {
    for (const auto& t : a.values)
      require(t.a12 == 0.0, "assemble_elliptic: the 5-point stencil needs a diagonal coefficient (a12 = 0)");
    auto harmonic = [](double p, double q) { return 2.0 * p * q / (p + q); };
    for (int ix = 1; ix < n; ++ix) {
      for (int iy = 1; iy < n; ++iy) {
        const Index row = mesh.node_index(ix, iy);
        const double east = harmonic(cell(ix, iy - 1).a11, cell(ix, iy).a11) * inv_h2;
        const double west = harmonic(cell(ix - 1, iy - 1).a11, cell(ix - 1, iy).a11) * inv_h2;
        const double north = harmonic(cell(ix - 1, iy).a22, cell(ix, iy).a22) * inv_h2;
        const double south = harmonic(cell(ix - 1, iy - 1).a22, cell(ix, iy - 1).a22) * inv_h2;
        trip.emplace_back(row, row, east + west + north + south);
        if (const Index k = mesh.node_index(ix + 1, iy); k >= 0) trip.emplace_back(row, k, -east);
        if (const Index k = mesh.node_index(ix - 1, iy); k >= 0) trip.emplace_back(row, k, -west);
        if (const Index k = mesh.node_index(ix, iy + 1); k >= 0) trip.emplace_back(row, k, -north);
        if (const Index k = mesh.node_index(ix, iy - 1); k >= 0) trip.emplace_back(row, k, -south);
      }
    }
  }
  SparseMatrix A(M, M);
  A.setFromTriplets(trip.begin(), trip.end());
  return DiscreteOperator(mesh, std::move(A));
}

DiscreteOperator assemble_laplacian(const Mesh& mesh) {
  return assemble_elliptic(mesh, make_coefficient(mesh, CoefficientSpec::constant(1.0)));
}

Vector apply(const DiscreteOperator& op, const Vector& v) { return op.apply(v); }
Vector greens_apply(const DiscreteOperator& op, const Vector& f) { return op.solve(f); }
Vector adjoint_greens_apply(const DiscreteOperator& op, const Vector& f) { return op.solve_adjoint(f); }

NoiseModel NoiseModel::white() { return NoiseModel{}; }

NoiseModel NoiseModel::regularized(const Mesh& mesh, int power) {
  require(power >= 1, "noise: regularization power must be >= 1");
  NoiseModel nm;
  nm.power_ = power;
  nm.laplacian_.emplace(assemble_laplacian(mesh));
  return nm;
}

Vector NoiseModel::regularize(const Vector& v) const {
  Vector out = v;
  for (int k = 0; k < power_; ++k) out = laplacian_->apply(out);
  return out;
}

Vector NoiseModel::solve(const Vector& v) const {
  Vector out = v;
  for (int k = 0; k < power_; ++k) out = laplacian_->solve(out);
  return out;
}

Vector NoiseModel::solve_transpose(const Vector& v) const {
  Vector out = v;
  for (int k = 0; k < power_; ++k) out = laplacian_->solve_adjoint(out);
  return out;
}

Vector noise_apply_inverse_covariance(const NoiseModel& nm, const Mesh& mesh, const Vector& f) {
  require(f.size() == mesh.num_nodes(), "noise_apply_inverse_covariance: size mismatch");
  if (nm.is_white()) return mesh.weights().cwiseProduct(f);
  require(nm.laplacian() != nullptr, "noise_apply_inverse_covariance: regularized noise without a Laplacian");
  require(nm.laplacian()->size() == mesh.num_nodes(), "noise_apply_inverse_covariance: noise built on another mesh");
  Vector r = mesh.weights().cwiseProduct(nm.regularize(f));
  // L_reg^T r; the Laplacian is symmetric.
  for (int k = 0; k < nm.power(); ++k) r = nm.laplacian()->matrix().transpose() * r;
  return r;
}

void write_triplets(std::ostream& os, const SparseMatrix& m) {
  char buf[64];
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      os << it.row() << ' ' << it.col() << ' ';
      auto res = std::to_chars(buf, buf + sizeof(buf), it.value());
      os.write(buf, res.ptr - buf);
      os << '\n';
    }
  }
}

}  // namespace bayeshom
