#include <doctest.h>

#include <random>
#include <sstream>

#include <Eigen/LU>

#include <bayeshom/measure.hpp>

#include "helpers.hpp"

using namespace bayeshom;
using testing::random_vector;

TEST_CASE("discrete Diracs on the 8-cell line") {
  const Mesh m = build_mesh(1, 8);
  const MeasurementSet ms = make_dirac(m, {{0.25, 0}, {0.5, 0}, {0.75, 0}});
  REQUIRE(ms.size() == 3);
  // grid points 2, 4, 6 of the closed grid
  const Index expected[] = {m.node_index(2), m.node_index(4), m.node_index(6)};
  for (Index i = 0; i < 3; ++i) {
    CHECK(ms.dirac_node(i) == expected[i]);
    const Vector p = ms.dual_vectors().col(i);
    CHECK(p(expected[i]) == doctest::Approx(8.0));
    CHECK(p.cwiseAbs().sum() == doctest::Approx(8.0));
  }
}

TEST_CASE("Voronoi indicators of two half cells") {
  const Mesh m = build_mesh(1, 8);
  const MeasurementSet ms = make_voronoi(m, {{0.25, 0}, {0.75, 0}});
  const Vector p1 = ms.dual_vectors().col(0);
  const Vector p2 = ms.dual_vectors().col(1);
  for (Index k = 0; k < m.num_nodes(); ++k) {
    const double x = m.node(k)[0];
    // the tie at x = 1/2 goes to the lower center
    CHECK(p1(k) == (x <= 0.5 ? 2.0 : 0.0));
    CHECK(p2(k) == (x > 0.5 ? doctest::Approx(1.0 / (3.0 / 8.0)) : doctest::Approx(0.0)));
  }
}

TEST_CASE("overlapping hat densities have rank two") {
  const Mesh m = build_mesh(1, 32);
  const Matrix d = hat_densities(m, {{0.4, 0}, {0.5, 0}}, 0.2);
  Eigen::FullPivLU<Matrix> lu(d);
  CHECK(lu.rank() == 2);
  const MeasurementSet ms = make_density(m, d);
  CHECK(ms.size() == 2);
  for (Index i = 0; i < 2; ++i) {
    CHECK((d.col(i).array() >= 0.0).all());
    CHECK(m.weights().dot(d.col(i)) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("invalid measurement sets are rejected") {
  const Mesh m = build_mesh(1, 8);
  CHECK_THROWS_AS(make_dirac(m, {{0.25, 0}, {0.26, 0}}), InvalidArgument);
  CHECK_THROWS_AS(make_dirac(m, {{1.5, 0}}), InvalidArgument);
  CHECK_THROWS_AS(make_dirac(m, {}), InvalidArgument);
  Matrix twice = hat_densities(m, {{0.5, 0}}, 0.3);
  Matrix dup(twice.rows(), 2);
  dup << twice, twice;
  CHECK_THROWS_AS(make_density(m, dup), InvalidArgument);
  Matrix neg = twice;
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(make_density(m, neg), InvalidArgument);
}

TEST_CASE("observations") {
  const Mesh m = build_mesh(1, 16);
  std::mt19937_64 rng(1);
  const Vector u = random_vector(rng, m.num_nodes());

  const MeasurementSet dirac = make_dirac(m, lattice_points(1, 3));
  const Vector obs = observe(dirac, u);
  for (Index i = 0; i < 3; ++i) CHECK(obs(i) == doctest::Approx(u(dirac.dirac_node(i))).epsilon(1e-15));

  const MeasurementSet dens = make_density(m, hat_densities(m, lattice_points(1, 4), 0.15));
  CHECK((observe(dens, Vector::Constant(m.num_nodes(), 3.5)).array() - 3.5).abs().maxCoeff() < 1e-13);

  const std::vector<Point> centers{{0.2, 0}, {0.55, 0}, {0.9, 0}};
  const MeasurementSet vor = make_voronoi(m, centers);
  Vector x(m.num_nodes());
  for (Index k = 0; k < x.size(); ++k) x(k) = m.node(k)[0];
  const Vector cell_avg = observe(vor, x);
  for (Index i = 0; i < 3; ++i) {
    double sum = 0.0;
    int count = 0;
    for (Index k = 0; k < x.size(); ++k) {
      Index best = 0;
      for (Index c = 1; c < 3; ++c)
        if (std::abs(x(k) - centers[c][0]) < std::abs(x(k) - centers[best][0])) best = c;
      if (best == i) {
        sum += x(k);
        ++count;
      }
    }
    CHECK(cell_avg(i) == doctest::Approx(sum / count).epsilon(1e-14));
  }
}

TEST_CASE("observe is linear") {
  const Mesh m = build_mesh(2, 10);
  const MeasurementSet ms = make_voronoi(m, lattice_points(2, 3));
  std::mt19937_64 rng(2);
  const Vector u = random_vector(rng, m.num_nodes());
  const Vector v = random_vector(rng, m.num_nodes());
  const Vector lhs = ms.observe(2.0 * u - 0.5 * v);
  const Vector rhs = 2.0 * ms.observe(u) - 0.5 * ms.observe(v);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-13 * rhs.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(ms.observe(Vector::Zero(4)), InvalidArgument);
}

TEST_CASE("Dirac anchors give the same fill distance as the points") {
  const Mesh m = build_mesh(1, 64);
  const MeasurementSet ms = make_dirac(m, lattice_points(1, 7));
  const auto supports = ms.support_points(m);
  std::vector<std::vector<Point>> pts;
  for (const Point& p : ms.anchors()) pts.push_back({p});
  CHECK(mesh_norm(m, supports) == mesh_norm(m, pts));
  CHECK(mesh_norm(m, pts) == doctest::Approx(0.125));
}

TEST_CASE("measurement CSV lists one row per functional") {
  const Mesh m = build_mesh(1, 8);
  std::ostringstream os;
  write_measurements_csv(os, m, make_dirac(m, {{0.25, 0}, {0.75, 0}}));
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#' && line.rfind("index", 0) != 0) ++rows;
  CHECK(rows == 2);
  CHECK(os.str().find("dirac") != std::string::npos);
}
