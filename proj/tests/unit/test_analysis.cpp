#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include <bayeshom/analysis.hpp>

#include "helpers.hpp"

using namespace bayeshom;
using testing::random_vector;

namespace {

struct Case {
  Posterior post;
  VProduct vp;
};

Case dirac_case(int dim, int n, const CoefficientSpec& coef, int per_side, int power = 0) {
  const Mesh m = build_mesh(dim, n);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, coef));
  const NoiseModel nm = power ? NoiseModel::regularized(m, power) : NoiseModel::white();
  return {build_posterior(op, nm, make_dirac(m, lattice_points(dim, per_side))), VProduct(op, nm)};
}

}  // namespace

TEST_CASE("H1 seminorm of a sine") {
  const Mesh m = build_mesh(1, 200);
  Vector v(m.num_nodes());
  for (Index k = 0; k < v.size(); ++k) v(k) = std::sin(std::numbers::pi * m.node(k)[0]);
  const double pi = std::numbers::pi;
  CHECK(h1_seminorm(m, v) == doctest::Approx(std::sqrt(pi * pi / 2)).epsilon(1e-4));
}

TEST_CASE("basis functions are recovered exactly") {
  const Case c = dirac_case(1, 64, CoefficientSpec::checkerboard(100.0), 7);
  const VarianceField var = posterior_variance(c.post.gamma, c.post.measurements, c.post.theta);
  for (Index k = 0; k < 7; ++k) {
    const PointwiseRatio r = pointwise_ratio(c.post, c.vp, var, c.post.basis.phi.col(k));
    CHECK(r.max_ratio <= 1e-6);
  }
}

TEST_CASE("pointwise bound, 100 trials on a checkerboard with seven Diracs") {
  const Case c = dirac_case(1, 64, CoefficientSpec::checkerboard(100.0), 7);
  const ErrorReport rep = check_pointwise_bound(c.post, c.vp, 100, 17);
  CHECK(rep.pointwise_max_ratio <= 1 + kPointwiseTolerance);
  CHECK(rep.pointwise_max_ratio > 0.05);
}

TEST_CASE("pointwise bound with regularized noise") {
  const Case c = dirac_case(2, 12, CoefficientSpec::lognormal_rough(2, 50.0), 3, 1);
  CHECK(check_pointwise_bound(c.post, c.vp, 30, 3).pointwise_max_ratio <= 1 + kPointwiseTolerance);
}

TEST_CASE("posterior standard deviation never exceeds the prior one") {
  const Case c = dirac_case(2, 12, CoefficientSpec::checkerboard(10.0), 3);
  const VarianceField var = posterior_variance(c.post.gamma, c.post.measurements, c.post.theta);
  CHECK((var.sigma2.array() <= var.prior.array()).all());
}

TEST_CASE("rho is zero when every node is measured") {
  const Mesh m = build_mesh(1, 6);
  std::vector<Point> pts;
  for (Index k = 0; k < m.num_nodes(); ++k) pts.push_back(m.node(k));
  const VProduct vp(assemble_laplacian(m), NoiseModel::white());
  CHECK(estimate_rho_v0(vp, make_dirac(m, pts)).rho == 0.0);
}

TEST_CASE("rho bounds the energy error and is attained") {
  for (int power : {0, 1}) {
    const Case c = dirac_case(1, 48, CoefficientSpec::layered(10.0, 4), 5, power);
    const RhoEstimate est = estimate_rho_v0(c.vp, c.post.measurements);
    REQUIRE(est.rho > 0.0);
    const Mesh& m = c.vp.mesh();
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
      const Vector v = c.post.gamma.op().solve(random_vector(rng, m.num_nodes()));
      const Vector r = v - c.post.basis.phi * c.post.measurements.observe(v);
      CHECK(h1_seminorm(m, r) <= est.rho * c.vp.norm(v) * (1 + 1e-8));
    }
    const Vector z = est.extremal;
    CHECK(c.post.measurements.observe(z).cwiseAbs().maxCoeff() <= 1e-8 * z.cwiseAbs().maxCoeff());
    CHECK(h1_seminorm(m, z) / c.vp.norm(z) >= 0.99 * est.rho);
  }
}

TEST_CASE("dense and Lanczos estimates agree") {
  const Case c = dirac_case(2, 16, CoefficientSpec::checkerboard(10.0, 2), 3);
  const RhoEstimate dense = estimate_rho_v0(c.vp, c.post.measurements, RhoMethod::Dense);
  const RhoEstimate lanczos = estimate_rho_v0(c.vp, c.post.measurements, RhoMethod::Lanczos);
  CHECK(lanczos.method == RhoMethod::Lanczos);
  CHECK(lanczos.rho == doctest::Approx(dense.rho).epsilon(1e-5));
}

TEST_CASE("rho is grid converged for Diracs at the quarter points") {
  std::vector<double> rho;
  for (int n : {32, 64, 128}) {
    const Mesh m = build_mesh(1, n);
    const VProduct vp(assemble_laplacian(m), NoiseModel::white());
    rho.push_back(estimate_rho_v0(vp, make_dirac(m, {{0.25, 0}, {0.5, 0}, {0.75, 0}})).rho);
  }
  CHECK(std::abs(rho[1] - rho[0]) <= 0.02 * rho[1]);
  CHECK(std::abs(rho[2] - rho[1]) <= 0.02 * rho[2]);
}

TEST_CASE("log-log slope of an exact power law") {
  CHECK(loglog_slope({0.1, 0.2, 0.4}, {3e-3, 6e-3, 1.2e-2}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(loglog_slope({1, 2, 4, 8}, {1, 0.25, 0.0625, 0.015625}) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), InvalidArgument);
  CHECK_THROWS_AS(loglog_slope({1, 2}, {1, 0}), InvalidArgument);
}

TEST_CASE("small scaling study reports one level per lattice") {
  ScalingConfig cfg;
  cfg.n = 64;
  cfg.per_side = {1, 3, 7};
  const ScalingResult res = scaling_study(cfg);
  REQUIRE(res.levels.size() == 3);
  CHECK(res.levels[0].H > res.levels[1].H);
  CHECK(res.levels[1].H > res.levels[2].H);
  CHECK(res.slope > 0.8);
  CHECK(res.slope < 1.2);
  cfg.per_side = {3, 7};
  CHECK_THROWS_AS(scaling_study(cfg), InvalidArgument);
}

TEST_CASE("energy error does not grow when measurements are added") {
  const Mesh m = build_mesh(1, 64);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::checkerboard(10.0)));
  const VProduct vp(op, NoiseModel::white());
  std::mt19937_64 rng(9);
  const Vector u = op.solve(random_vector(rng, m.num_nodes()));
  double last = 1e300;
  // nested lattices: 3 points inside 7 inside 15
  for (int per_side : {3, 7, 15}) {
    const MeasurementSet ms = make_dirac(m, lattice_points(1, per_side));
    const Posterior p = build_posterior(op, NoiseModel::white(), ms);
    const double err = h1_seminorm(m, u - p.basis.phi * ms.observe(u));
    const double sup = estimate_rho_v0(vp, ms).rho;
    CHECK(err <= last);
    CHECK(sup > 0.0);
    last = err;
  }
}

TEST_CASE("certificates") {
  const Case c = dirac_case(1, 64, CoefficientSpec::constant(1.0), 7);
  const VarianceField var = posterior_variance(c.post.gamma, c.post.measurements, c.post.theta);
  const double rho = estimate_rho_v0(c.vp, c.post.measurements).rho;
  const Index M = c.vp.mesh().num_nodes();

  const Certificate zero = certify_solution(c.post, c.vp, var, rho, Vector::Zero(M));
  CHECK(zero.approx.isZero(0.0));
  CHECK(zero.pointwise_cert.isZero(0.0));
  CHECK(zero.energy_cert == 0.0);

  const Certificate one = certify_solution(c.post, c.vp, var, rho, Vector::Ones(M));
  CHECK(((one.solution - one.approx).cwiseAbs().array() <= one.pointwise_cert.array() * (1 + 1e-6) + 1e-14).all());
  CHECK(one.energy_error <= one.energy_cert);
  CHECK(one.max_error_ratio <= 1 + 1e-6);
}

TEST_CASE("regularized certificate is valid and smaller for smooth data") {
  const Mesh m = build_mesh(1, 64);
  const DiscreteOperator op = assemble_elliptic(m, make_coefficient(m, CoefficientSpec::checkerboard(10.0)));
  const MeasurementSet ms = make_dirac(m, lattice_points(1, 7));
  const Posterior white = build_posterior(op, NoiseModel::white(), ms);
  const NoiseModel reg_noise = NoiseModel::regularized(m, 1);
  const Posterior reg = build_posterior(op, reg_noise, ms);
  const VProduct vw(op, NoiseModel::white());
  const VProduct vr(op, reg_noise);
  const VarianceField var_w = posterior_variance(white.gamma, ms, white.theta);
  const VarianceField var_r = posterior_variance(reg.gamma, ms, reg.theta);
  const double rho_w = estimate_rho_v0(vw, ms).rho;
  const double rho_r = estimate_rho_v0(vr, ms).rho;

  Vector g(m.num_nodes());
  for (Index k = 0; k < g.size(); ++k) g(k) = std::sin(std::numbers::pi * m.node(k)[0]);
  const Certificate cw = certify_solution(white, vw, var_w, rho_w, g);
  const Certificate cr = certify_solution(reg, vr, var_r, rho_r, g);
  CHECK(cw.max_error_ratio <= 1 + 1e-6);
  CHECK(cr.max_error_ratio <= 1 + 1e-6);
  CHECK(cr.pointwise_cert.maxCoeff() < cw.pointwise_cert.maxCoeff());
}

TEST_CASE("error report JSON keys") {
  ErrorReport r;
  r.pointwise_max_ratio = 0.5;
  r.levels.push_back({0.25, 0.01, 0.02, 3});
  const auto j = nlohmann::json::parse(to_json(r));
  for (const char* key : {"pointwise_max_ratio", "rho_v0", "mesh_H", "energy_error", "slope", "levels"})
    CHECK(j.contains(key));
  CHECK(j["slope"].is_null());
  CHECK(j["levels"][0]["H"] == 0.25);
}
