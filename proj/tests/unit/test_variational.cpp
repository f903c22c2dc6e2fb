#include <doctest.h>

#include <random>

#include <bayeshom/analysis.hpp>
#include <bayeshom/posterior.hpp>
#include <bayeshom/variational.hpp>

#include "helpers.hpp"

using namespace bayeshom;
using testing::random_vector;

namespace {

struct Case {
  Posterior post;
  VProduct vp;
};

Case make_case(int dim, int n, int power, MeasurementKind kind, int per_side, double contrast = 10.0) {
  const Mesh m = build_mesh(dim, n);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::checkerboard(contrast, 2)));
  const NoiseModel nm = power ? NoiseModel::regularized(m, power) : NoiseModel::white();
  const auto pts = lattice_points(dim, per_side);
  const MeasurementSet ms = kind == MeasurementKind::Dirac            ? make_dirac(m, pts)
                            : kind == MeasurementKind::VoronoiIndicator ? make_voronoi(m, pts)
                                                                        : make_density(m, hat_densities(m, pts, 0.2));
  return {build_posterior(op, nm, ms), VProduct(op, nm)};
}

Vector random_v(const Case& c, std::mt19937_64& rng) {
  return c.post.gamma.op().solve(random_vector(rng, c.post.gamma.size()));
}

}  // namespace

TEST_CASE("energy product of the quadratic bubble") {
  const Mesh m = build_mesh(1, 32);
  const VProduct vp(assemble_laplacian(m), NoiseModel::white());
  Vector u(m.num_nodes());
  for (Index k = 0; k < u.size(); ++k) u(k) = m.node(k)[0] * (1 - m.node(k)[0]) / 2;
  // L u = 1 at every interior node, so <u,u> is the interior quadrature of 1
  CHECK(v_inner(vp, u, u) == doctest::Approx(1.0 - m.spacing()).epsilon(1e-12));
  CHECK(v_inner(vp, u, Vector::Zero(u.size())) == 0.0);
  CHECK_THROWS_AS(v_inner(vp, u, Vector::Zero(3)), InvalidArgument);
}

TEST_CASE("the energy product is definite") {
  const Case c = make_case(2, 8, 1, MeasurementKind::Dirac, 2);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Vector v = random_vector(rng, 49);
    CHECK(c.vp.norm(v) > 0.0);
  }
  CHECK(c.vp.norm(Vector::Zero(49)) == 0.0);
}

TEST_CASE("minimization and conditioning give the same basis") {
  for (int power : {0, 1}) {
    for (MeasurementKind k : {MeasurementKind::Dirac, MeasurementKind::VoronoiIndicator, MeasurementKind::Density}) {
      for (int dim : {1, 2}) {
        const Case c = make_case(dim, dim == 1 ? 48 : 12, power, k, dim == 1 ? 5 : 3);
        const VariationalBasis vb = basis_by_minimization(c.vp, c.post.measurements);
        CHECK(testing::rel_inf(vb.basis.phi, c.post.basis.phi) <= 1e-8);
        CHECK(vb.constraint_residual <= 1e-8);
        // multipliers are the rows of Theta^{-1}
        CHECK(testing::rel_fro(vb.multipliers, c.post.theta.inverse()) <= 1e-6);
      }
    }
  }
}

TEST_CASE("squared-Laplacian noise at moderate resolution") {
  const Case c = make_case(1, 12, 2, MeasurementKind::Dirac, 3);
  const VariationalBasis vb = basis_by_minimization(c.vp, c.post.measurements);
  CHECK(testing::rel_inf(vb.basis.phi, c.post.basis.phi) <= 1e-8);
}

TEST_CASE("nested equations: L phi = chi and the adjoint of chi is a combination of the psi") {
  const Case c = make_case(1, 40, 0, MeasurementKind::VoronoiIndicator, 4);
  const VariationalBasis vb = basis_by_minimization(c.vp, c.post.measurements);
  const DiscreteOperator& op = c.post.gamma.op();
  const double w = op.mesh().weight();
  CHECK((vb.chi - Matrix(op.matrix()) * vb.basis.phi).norm() == 0.0);
  // A^T (w chi_i) = C^T c_i, i.e. L* chi_i = sum_j c_ij psi_j in the weighted product
  const Matrix lhs = Matrix(op.matrix()).transpose() * (w * vb.chi);
  const Matrix rhs = c.post.measurements.constraint_matrix().transpose() * vb.multipliers;
  CHECK(testing::rel_inf(lhs, rhs) <= 1e-8);
}

TEST_CASE("the minimizer beats every feasible perturbation") {
  const Case c = make_case(1, 40, 0, MeasurementKind::Dirac, 5);
  const VariationalBasis vb = basis_by_minimization(c.vp, c.post.measurements);
  std::mt19937_64 rng(2);
  for (Index i = 0; i < 5; ++i) {
    const Vector phi = vb.basis.phi.col(i);
    const double e0 = c.vp.inner(phi, phi);
    for (int t = 0; t < 5; ++t) {
      const Vector v = random_v(c, rng);
      const Vector z = v - project_optimal_recovery(c.vp, vb.basis, v, c.post.measurements);
      CHECK(c.post.measurements.observe(z).cwiseAbs().maxCoeff() <= 1e-10 * z.cwiseAbs().maxCoeff());
      for (double s : {-1.0, -0.1, 0.1, 1.0}) {
        const Vector q = phi + s * z / c.vp.norm(z) * c.vp.norm(phi);
        CHECK(c.vp.inner(q, q) >= e0);
      }
    }
  }
}

TEST_CASE("optimal recovery identities") {
  for (int power : {0, 1}) {
    const Case c = make_case(1, 32, power, MeasurementKind::Density, 4);
    const auto& ms = c.post.measurements;
    const BasisSet& basis = c.post.basis;
    const Index N = basis.size();

    Matrix gram(N, N);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < N; ++j) gram(i, j) = c.vp.inner(basis.phi.col(i), basis.phi.col(j));
    CHECK(testing::rel_fro(gram, c.post.theta.inverse()) <= 1e-6);

    for (Index k = 0; k < N; ++k) {
      const Vector pk = project_optimal_recovery(c.vp, basis, basis.phi.col(k), ms);
      CHECK((pk - basis.phi.col(k)).cwiseAbs().maxCoeff() <= 1e-8 * basis.phi.col(k).cwiseAbs().maxCoeff());
    }

    std::mt19937_64 rng(3 + power);
    const Matrix theta_inv = c.post.theta.inverse();
    for (int t = 0; t < 50; ++t) {
      const Vector v = random_v(c, rng);
      const Vector vpsi = project_optimal_recovery(c.vp, basis, v, ms);
      const Vector r = v - vpsi;
      const double vv = c.vp.inner(v, v);
      CHECK(std::abs(vv - c.vp.inner(vpsi, vpsi) - c.vp.inner(r, r)) <= 1e-8 * vv);
      const Vector rep = theta_inv * ms.observe(v);
      for (Index i = 0; i < N; ++i) {
        const Vector phi = basis.phi.col(i);
        const double scale = c.vp.norm(phi) * c.vp.norm(v);
        CHECK(std::abs(c.vp.inner(phi, r)) <= 1e-8 * scale);
        CHECK(std::abs(c.vp.inner(phi, v) - rep(i)) <= 1e-8 * scale);
      }
    }
  }
}

TEST_CASE("strict convexity along a feasible segment") {
  const Case c = make_case(1, 32, 0, MeasurementKind::Dirac, 3);
  std::mt19937_64 rng(4);
  const Vector phi = c.post.basis.phi.col(1);
  const Vector v = random_v(c, rng);
  const Vector w = phi + v - project_optimal_recovery(c.vp, c.post.basis, v, c.post.measurements);
  auto f = [&](double lam) {
    const Vector x = phi + lam * (w - phi);
    return c.vp.inner(x, x);
  };
  for (double lam : {-1.0, 0.0, 0.5, 2.0}) CHECK(f(lam + 0.1) - 2 * f(lam) + f(lam - 0.1) > 0.0);
}

TEST_CASE("reproducing kernel property") {
  for (int power : {0, 1}) {
    const Case c = make_case(2, 10, power, MeasurementKind::Dirac, 2);
    const GammaOperator& g = c.post.gamma;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<Index> pick(0, g.size() - 1);
    for (int t = 0; t < 20; ++t) {
      const Vector v = random_v(c, rng);
      const Index x = pick(rng);
      CHECK(rkhs_reproduce_check(c.vp, g, v, x) <= 1e-8 * std::sqrt(g.diagonal_at(x)) * c.vp.norm(v));
      CHECK(std::abs(v(x)) <= std::sqrt(g.diagonal_at(x)) * c.vp.norm(v) * (1 + 1e-10));
    }
    CHECK(rkhs_reproduce_check(c.vp, g, Vector::Zero(g.size()), 3) == 0.0);
    const Vector k = g.column(7);
    CHECK(c.vp.inner(k, k) == doctest::Approx(g.diagonal_at(7)).epsilon(1e-8));
  }
}

TEST_CASE("localization with a huge radius is the global minimizer") {
  const Case c = make_case(1, 48, 0, MeasurementKind::Dirac, 5);
  const LocalizedBasis loc = basis_by_localized_minimization(c.vp, c.post.measurements, 2.0);
  CHECK(loc.fallbacks.empty());
  const VariationalBasis global = basis_by_minimization(c.vp, c.post.measurements);
  CHECK(testing::rel_inf(loc.basis.phi, global.basis.phi) <= 1e-10);
}

TEST_CASE("localized basis functions vanish outside their patch and meet their own constraints") {
  const Case c = make_case(1, 64, 0, MeasurementKind::Dirac, 7);
  const auto& ms = c.post.measurements;
  const double radius = 0.3;
  const LocalizedBasis loc = basis_by_localized_minimization(c.vp, ms, radius);
  CHECK(loc.fallbacks.empty());
  const Mesh& m = c.vp.mesh();
  for (Index i = 0; i < ms.size(); ++i) {
    const Point& xi = m.node(ms.dirac_node(i));
    for (Index k = 0; k < m.num_nodes(); ++k)
      if (m.distance(m.node(k), xi) > radius) CHECK(loc.basis.phi(k, i) == 0.0);
    const Vector obs = ms.observe(loc.basis.phi.col(i));
    for (Index j = 0; j < ms.size(); ++j)
      if (m.distance(m.node(ms.dirac_node(j)), xi) <= radius) CHECK(std::abs(obs(j) - (i == j ? 1.0 : 0.0)) <= 1e-8);
  }
}

TEST_CASE("too small a patch falls back to the global basis with a warning") {
  const Case c = make_case(1, 64, 0, MeasurementKind::Dirac, 3);
  const LocalizedBasis loc = basis_by_localized_minimization(c.vp, c.post.measurements, 0.01);
  CHECK(loc.fallbacks.size() == 3);
  CHECK(loc.warnings.size() == 3);
  CHECK(testing::rel_inf(loc.basis.phi, c.post.basis.phi) <= 1e-8);
  CHECK_THROWS_AS(basis_by_localized_minimization(c.vp, c.post.measurements, 0.0), InvalidArgument);
}
