#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include <bayeshom/posterior.hpp>
#include <bayeshom/variational.hpp>

#include "helpers.hpp"

using namespace bayeshom;
using testing::random_vector;

namespace {

DiscreteOperator unit_line(int n) {
  const Mesh m = build_mesh(1, n);
  return assemble_laplacian(m);
}

Posterior rough_posterior(int dim, int n, int noise_power, MeasurementKind kind, int per_side) {
  const Mesh m = build_mesh(dim, n);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::checkerboard(10.0, 2)));
  const NoiseModel nm = noise_power ? NoiseModel::regularized(m, noise_power) : NoiseModel::white();
  const auto pts = lattice_points(dim, per_side);
  const MeasurementSet ms = kind == MeasurementKind::Dirac            ? make_dirac(m, pts)
                            : kind == MeasurementKind::VoronoiIndicator ? make_voronoi(m, pts)
                                                                        : make_density(m, hat_densities(m, pts, 0.2));
  return build_posterior(op, nm, ms);
}

}  // namespace

TEST_CASE("Gamma of a constant source at the midpoint is 5/384") {
  const DiscreteOperator op = unit_line(64);
  const GammaOperator g(op, NoiseModel::white());
  const Vector u = gamma_apply(g, Vector::Ones(op.size()));
  const double h = op.mesh().spacing();
  CHECK(std::abs(u(op.mesh().nearest_node({0.5, 0})) - 5.0 / 384.0) <= 2 * h * h);
  CHECK(gamma_apply(g, Vector::Zero(op.size())).isZero(0.0));
}

TEST_CASE("Gamma is symmetric and positive semidefinite") {
  for (int power : {0, 1, 2}) {
    const Mesh m = build_mesh(2, 8);
    const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::lognormal_rough(4, 50.0)));
    const GammaOperator g(op, power ? NoiseModel::regularized(m, power) : NoiseModel::white());
    std::mt19937_64 rng(power);
    for (int t = 0; t < 10; ++t) {
      const Vector f = random_vector(rng, m.num_nodes());
      const Vector q = random_vector(rng, m.num_nodes());
      const double a = m.l2_inner(g.apply(f), q);
      const double b = m.l2_inner(f, g.apply(q));
      CHECK(std::abs(a - b) <= 1e-10 * std::max(std::abs(a), std::abs(b)));
      CHECK(m.l2_inner(g.apply(f), f) >= -1e-12);
    }
  }
}

TEST_CASE("Gamma against a dense white-noise covariance") {
  const Mesh m = build_mesh(1, 12);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::layered(5.0, 3)));
  const GammaOperator g(op, NoiseModel::white());
  const Matrix Ainv = Matrix(op.matrix()).inverse();
  const Matrix dense = Ainv * Ainv.transpose() / m.weight();
  for (Index k = 0; k < m.num_nodes(); ++k) {
    CHECK((g.column(k) - dense.col(k)).norm() <= 1e-12 * dense.col(k).norm());
    CHECK(g.diagonal_at(k) == doctest::Approx(dense(k, k)).epsilon(1e-12));
  }
}

TEST_CASE("single Dirac at the midpoint: Theta_11 tends to 1/48") {
  for (int n : {16, 32, 64}) {
    const DiscreteOperator op = unit_line(n);
    const GammaOperator g(op, NoiseModel::white());
    const ThetaMatrix th = assemble_theta(g, make_dirac(op.mesh(), {{0.5, 0}}));
    const double h = op.mesh().spacing();
    CHECK(std::abs(th.values(0, 0) - 1.0 / 48.0) <= 5 * h * h);
  }
}

TEST_CASE("Theta is symmetric to round-off") {
  for (MeasurementKind k : {MeasurementKind::Dirac, MeasurementKind::VoronoiIndicator, MeasurementKind::Density}) {
    const Posterior p = rough_posterior(2, 12, 1, k, 3);
    CHECK(p.theta.asymmetry <= 1e-12);
    CHECK((p.theta.values - p.theta.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.theta.min_eigenvalue > 0.0);
  }
}

TEST_CASE("quadratic form of Theta equals the norm of an adjoint solution") {
  const Mesh m = build_mesh(1, 40);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::checkerboard(30.0)));
  const MeasurementSet ms = make_voronoi(m, lattice_points(1, 5));
  const ThetaMatrix th = assemble_theta(GammaOperator(op, NoiseModel::white()), ms);
  // L* v = sum_j l_j psi_j solved with a dense transpose; ||v||^2 in the discrete L2 product
  const Matrix AT = Matrix(op.matrix()).transpose();
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const Vector l = random_vector(rng, ms.size());
    const Vector v = AT.partialPivLu().solve(ms.dual_vectors() * l);
    const double expected = m.weight() * v.squaredNorm();
    CHECK(l.dot(th.values * l) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("an indefinite Theta is reported as theta_spd") {
  Matrix bad(2, 2);
  bad << -1.0, 0.0, 0.0, 1.0;
  try {
    theta_from_values(bad, Matrix::Zero(3, 2));
    FAIL("expected an exception");
  } catch (const VerificationError& e) {
    CHECK(e.invariant() == "theta_spd");
  }
}

TEST_CASE("conditioning basis is biorthogonal") {
  for (int power : {0, 1}) {
    for (MeasurementKind k : {MeasurementKind::Dirac, MeasurementKind::VoronoiIndicator, MeasurementKind::Density}) {
      const Posterior p = rough_posterior(1, 48, power, k, 5);
      const Matrix obs = p.measurements.observe_all(p.basis.phi);
      CHECK((obs - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("one measurement: phi is theta over Theta_11") {
  const Posterior p = rough_posterior(1, 32, 0, MeasurementKind::Dirac, 1);
  const Vector expected = p.theta.columns.col(0) / p.theta.values(0, 0);
  CHECK((p.basis.phi.col(0) - expected).norm() <= 1e-14 * expected.norm());
}

TEST_CASE("posterior mean") {
  const Posterior p = rough_posterior(2, 10, 0, MeasurementKind::Dirac, 3);
  const Index N = p.measurements.size();
  CHECK(posterior_mean(p.basis, Vector::Unit(N, 4)) == p.basis.phi.col(4));
  CHECK(posterior_mean(p.basis, Vector::Zero(N)).isZero(0.0));
  std::mt19937_64 rng(7);
  const Vector u = p.gamma.op().solve(random_vector(rng, p.gamma.size()));
  const Vector mean = posterior_mean(p.basis, p.measurements.observe(u));
  for (Index i = 0; i < N; ++i) {
    const Index k = p.measurements.dirac_node(i);
    CHECK(std::abs(mean(k) - u(k)) <= 1e-10 * u.cwiseAbs().maxCoeff());
  }
  CHECK_THROWS_AS(posterior_mean(p.basis, Vector::Zero(N + 1)), InvalidArgument);
}

TEST_CASE("variance vanishes at Dirac nodes") {
  for (int power : {0, 1, 2}) {
    const Posterior p = rough_posterior(1, 24, power, MeasurementKind::Dirac, 3);
    const VarianceField v = posterior_variance(p.gamma, p.measurements, p.theta);
    for (Index i = 0; i < p.measurements.size(); ++i) {
      const Index k = p.measurements.dirac_node(i);
      CHECK(v.at(k) <= 1e-10 * v.prior(k));
    }
    CHECK((v.sigma2.array() >= 0.0).all());
    CHECK((v.sigma2.array() <= v.prior.array()).all());
  }
  const Posterior one = rough_posterior(1, 32, 0, MeasurementKind::Dirac, 1);
  const Index mid = one.measurements.dirac_node(0);
  const VarianceField single = posterior_variance(one.gamma, one.measurements, one.theta, {mid});
  CHECK(single.sigma2(0) <= 1e-10 * single.prior(0));
}

TEST_CASE("adding a measurement never increases the variance") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 6; ++trial) {
    const int dim = trial % 2 + 1;
    const Mesh m = build_mesh(dim, dim == 1 ? 40 : 10);
    const DiscreteOperator op =
        assemble_elliptic(m, make_coefficient(m, CoefficientSpec::lognormal_rough(static_cast<std::uint64_t>(trial), 20.0)));
    const GammaOperator g(op, NoiseModel::white());
    std::vector<Point> pts;
    std::vector<Index> used;
    auto fresh_point = [&] {
      while (true) {
        const Point p{u(rng), dim == 2 ? u(rng) : 0.0};
        const Index k = m.nearest_node(p);
        if (std::find(used.begin(), used.end(), k) == used.end()) {
          used.push_back(k);
          return p;
        }
      }
    };
    for (int i = 0; i < 3; ++i) pts.push_back(fresh_point());
    const MeasurementSet small = make_dirac(m, pts);
    pts.push_back(fresh_point());
    const MeasurementSet big = make_dirac(m, pts);
    const VarianceField a = posterior_variance(g, small, assemble_theta(g, small));
    const VarianceField b = posterior_variance(g, big, assemble_theta(g, big));
    CHECK(((b.sigma2 - a.sigma2).array() <= 1e-12 * a.prior.array()).all());
  }
}

TEST_CASE("conditioning coefficients minimize the mean squared error") {
  const Posterior p = rough_posterior(1, 30, 0, MeasurementKind::VoronoiIndicator, 4);
  const VarianceField var = posterior_variance(p.gamma, p.measurements, p.theta);
  std::mt19937_64 rng(9);
  for (Index x : {Index{2}, Index{11}, Index{20}}) {
    const Vector theta_x = p.theta.columns.row(x).transpose();
    const double gxx = p.gamma.diagonal_at(x);
    auto objective = [&](const Vector& c) { return gxx - 2 * c.dot(theta_x) + c.dot(p.theta.values * c); };
    const Vector cstar = p.theta.solve(theta_x);
    const double best = objective(cstar);
    CHECK(std::abs(best - var.sigma2(x)) <= 1e-10 * gxx);
    CHECK((cstar - p.basis.phi.row(x).transpose()).norm() <= 1e-10 * cstar.norm());
    for (int t = 0; t < 20; ++t) {
      const Vector d = 1e-3 * random_vector(rng, cstar.size());
      CHECK(objective(cstar + d) > best);
    }
  }
}

TEST_CASE("Theta is the energy Gram matrix of the theta vectors") {
  for (int power : {0, 1}) {
    const Posterior p = rough_posterior(1, 32, power, MeasurementKind::Density, 4);
    const VProduct vp(p.gamma.op(), p.gamma.noise());
    const Index N = p.theta.size();
    Matrix gram(N, N);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < N; ++j) gram(i, j) = vp.inner(p.theta.columns.col(i), p.theta.columns.col(j));
    CHECK(testing::rel_fro(gram, p.theta.values) <= 1e-8);
  }
}
