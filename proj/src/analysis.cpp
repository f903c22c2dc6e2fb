#include "bayeshom/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

#include "bayeshom/random.hpp"

namespace bayeshom {

namespace {

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

}  // namespace

std::string to_json(const ErrorReport& report) {
  nlohmann::json j;
  j["pointwise_max_ratio"] = number_or_null(report.pointwise_max_ratio);
  j["rho_v0"] = number_or_null(report.rho_v0);
  j["mesh_H"] = number_or_null(report.mesh_H);
  j["energy_error"] = number_or_null(report.energy_error);
  j["slope"] = number_or_null(report.slope);
  j["levels"] = nlohmann::json::array();
  for (const auto& l : report.levels)
    j["levels"].push_back({{"H", number_or_null(l.H)}, {"rho", number_or_null(l.rho)},
                           {"energy_error", number_or_null(l.energy_error)}});
  return j.dump(2);
}

SparseMatrix h1_gram(const Mesh& mesh) {
  SparseMatrix S = assemble_laplacian(mesh).matrix() * mesh.weight();
  S.makeCompressed();
  return S;
}

double h1_seminorm(const Mesh& mesh, const Vector& v) {
  const SparseMatrix S = h1_gram(mesh);
  return std::sqrt(std::max(0.0, v.dot(S * v)));
}

PointwiseRatio pointwise_ratio(const Posterior& post, const VProduct& vp, const VarianceField& var, const Vector& v) {
  const Index M = vp.op().size();
  require(static_cast<Index>(var.nodes.size()) == M, "pointwise_ratio: variance must cover every node");
  const double vnorm = vp.norm(v);
  const Vector err = (v - post.basis.phi * post.measurements.observe(v)).cwiseAbs();
  PointwiseRatio out;
  for (Index k = 0; k < M; ++k) {
    const double denom =
        std::max(std::sqrt(var.sigma2(k)) * vnorm, kSigmaFloor * std::sqrt(std::max(0.0, var.prior(k))) * vnorm);
    double r = 0.0;
    if (denom > 0.0)
      r = err(k) / denom;
    else if (err(k) > 0.0)
      r = std::numeric_limits<double>::infinity();
    if (r > out.max_ratio || out.node < 0) {
      out.max_ratio = r;
      out.node = k;
    }
  }
  return out;
}

Vector random_rhs(const NoiseModel& noise, const Mesh& mesh, std::uint64_t seed, std::uint64_t trial) {
  auto rng = make_stream(seed, trial);
  Vector g = standard_normal(rng, mesh.num_nodes());
  if (!noise.is_white()) g = noise.solve(g);
  return g;
}

ErrorReport check_pointwise_bound(const Posterior& post, const VProduct& vp, int trials, std::uint64_t seed,
                                  bool throw_on_violation) {
  require(trials >= 1, "check_pointwise_bound: trials must be >= 1");
  const VarianceField var = posterior_variance(post.gamma, post.measurements, post.theta);
  ErrorReport report;
  report.worst_seed = seed;
  for (int t = 0; t < trials; ++t) {
    const Vector g = random_rhs(vp.noise(), vp.mesh(), seed, static_cast<std::uint64_t>(t));
    const Vector v = vp.op().solve(g);
    const PointwiseRatio r = pointwise_ratio(post, vp, var, v);
    if (r.max_ratio > report.pointwise_max_ratio || report.worst_trial < 0) {
      report.pointwise_max_ratio = r.max_ratio;
      report.worst_trial = t;
      report.worst_node = r.node;
    }
  }
  if (throw_on_violation && !(report.pointwise_max_ratio <= 1.0 + kPointwiseTolerance)) {
    std::ostringstream msg;
    msg << "ratio " << report.pointwise_max_ratio << " exceeds 1 + 1e-6 (seed " << seed << ", trial "
        << report.worst_trial << ", node " << report.worst_node << ")";
    throw VerificationError("pointwise_bound", msg.str());
  }
  return report;
}

namespace {

RhoEstimate rho_dense(const VProduct& vp, const MeasurementSet& ms) {
  const Index M = ms.num_nodes();
  const Index N = ms.size();
  Eigen::HouseholderQR<Matrix> qr(ms.constraint_matrix().transpose());
  const Matrix Qfull = qr.householderQ();
  const Matrix Z = Qfull.rightCols(M - N);
  const Matrix QZ = vp.quadratic_form() * Z;
  const Matrix SZ = h1_gram(vp.mesh()) * Z;
  Matrix A = Z.transpose() * QZ;
  Matrix B = Z.transpose() * SZ;
  A = 0.5 * (A + A.transpose()).eval();
  B = 0.5 * (B + B.transpose()).eval();
  // Q x = nu S x; the smallest nu is 1 / rho^2. S is well conditioned, so it
  // takes the Cholesky role.
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(A, B, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) throw SolverError("rho(V0): generalized eigensolver failed");
  const double nu = eig.eigenvalues()(0);
  if (!(nu > 0.0)) throw SolverError("rho(V0): V-product is not positive definite on V0");
  RhoEstimate out;
  out.rho = 1.0 / std::sqrt(nu);
  out.extremal = Z * eig.eigenvectors().col(0);
  out.method = RhoMethod::Dense;
  return out;
}

// Lanczos in the V-product for T = Pi Q^{-1} S, self-adjoint on V0 with
// largest eigenvalue rho^2. Q^{-1} W f is gamma_apply(f) and Pi is the
// V-orthogonal projector v -> v - Phi observe(v).
RhoEstimate rho_lanczos(const VProduct& vp, const MeasurementSet& ms) {
  const Index M = ms.num_nodes();
  const Index dimV0 = M - ms.size();
  const Posterior post = build_posterior(vp.op(), vp.noise(), ms);
  const SparseMatrix& Q = vp.quadratic_form();
  const SparseMatrix lap = assemble_laplacian(vp.mesh()).matrix();
  auto project = [&](const Vector& x) -> Vector { return x - post.basis.phi * ms.observe(x); };
  auto op = [&](const Vector& x) -> Vector { return project(post.gamma.apply(lap * x)); };
  auto qdot = [&](const Vector& a, const Vector& b) { return a.dot(Q * b); };

  const int max_iter = static_cast<int>(std::min<Index>(400, dimV0));
  constexpr double tol = 1e-6;
  auto rng = make_stream(0x5eed, 0);
  Vector r = project(standard_normal(rng, M));
  double beta = std::sqrt(qdot(r, r));
  require(beta > 0.0, "rho(V0): Lanczos start vector vanished");

  Matrix V(M, max_iter);
  std::vector<double> alpha, betas;
  double theta = 0.0;
  Vector ritz;
  int k = 0;
  for (; k < max_iter; ++k) {
    V.col(k) = r / beta;
    Vector w = op(V.col(k));
    const double a = qdot(V.col(k), w);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= k; ++i) w -= qdot(V.col(i), w) * V.col(i);
    beta = std::sqrt(std::max(0.0, qdot(w, w)));

    const int m = k + 1;
    Matrix T = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      T(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = betas[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(T);
    theta = eig.eigenvalues()(m - 1);
    ritz = eig.eigenvectors().col(m - 1);
    const double residual = beta * std::abs(ritz(m - 1));
    if (residual <= tol * std::abs(theta) || beta <= 1e-14 * std::abs(theta) || m == max_iter) {
      k = m;
      break;
    }
    betas.push_back(beta);
    r = w;
  }
  if (!(theta > 0.0)) throw SolverError("rho(V0): Lanczos produced a nonpositive Ritz value");
  RhoEstimate out;
  out.rho = std::sqrt(theta);
  out.extremal = V.leftCols(k) * ritz;
  out.method = RhoMethod::Lanczos;
  out.iterations = k;
  return out;
}

}  // namespace

RhoEstimate estimate_rho_v0(const VProduct& vp, const MeasurementSet& ms, RhoMethod method) {
  require(ms.num_nodes() == vp.op().size(), "estimate_rho_v0: measurements built on a different mesh");
  if (ms.size() >= ms.num_nodes()) return RhoEstimate{};
  if (method == RhoMethod::Auto) method = ms.num_nodes() <= 2000 ? RhoMethod::Dense : RhoMethod::Lanczos;
  return method == RhoMethod::Dense ? rho_dense(vp, ms) : rho_lanczos(vp, ms);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  require(sxx > 0.0, "loglog_slope: x values are all equal");
  return sxy / sxx;
}

ScalingResult scaling_study(const ScalingConfig& config) {
  require(config.per_side.size() >= 3, "scaling_study: at least 3 levels are required");
  const Mesh mesh = build_mesh(config.dim, config.n);
  const CoefficientField a = make_coefficient(mesh, config.coefficient);
  const DiscreteOperator op = assemble_elliptic(mesh, a);
  const NoiseModel noise = config.noise_power == 0 ? NoiseModel::white() : NoiseModel::regularized(mesh, config.noise_power);
  const VProduct vp(op, noise);
  const Vector u = op.solve(random_rhs(noise, mesh, config.seed, 0));

  ScalingResult out;
  std::vector<double> Hs, rhos, energies;
  for (int m : config.per_side) {
    const auto points = lattice_points(config.dim, m);
    std::optional<MeasurementSet> ms;
    switch (config.measurement) {
      case StudyMeasurement::Dirac: ms.emplace(make_dirac(mesh, points)); break;
      case StudyMeasurement::Voronoi: ms.emplace(make_voronoi(mesh, points)); break;
      case StudyMeasurement::Density: ms.emplace(make_density(mesh, hat_densities(mesh, points, 1.0 / (m + 1)))); break;
    }
    const auto supports = ms->support_points(mesh);
    LevelResult level;
    level.H = mesh_norm(mesh, supports);
    level.measurements = ms->size();
    level.rho = estimate_rho_v0(vp, *ms, config.rho_method).rho;
    const Posterior post = build_posterior(op, noise, *ms);
    level.energy_error = h1_seminorm(mesh, u - post.basis.phi * ms->observe(u));
    out.levels.push_back(level);
    Hs.push_back(level.H);
    rhos.push_back(level.rho);
    energies.push_back(level.energy_error);
  }
  out.slope = loglog_slope(Hs, rhos);
  out.energy_slope = loglog_slope(Hs, energies);
  for (const auto& l : out.levels) out.constant += l.rho / l.H;
  out.constant /= static_cast<double>(out.levels.size());
  out.normalized_constant = out.constant * a.lambda_min;
  return out;
}

Certificate certify_solution(const Posterior& post, const VProduct& vp, const VarianceField& var, double rho,
                             const Vector& g) {
  const Index M = vp.op().size();
  require(g.size() == M, "certify_solution: g has the wrong length");
  require(g.allFinite(), "certify_solution: g must be finite");
  require(static_cast<Index>(var.nodes.size()) == M, "certify_solution: variance must cover every node");
  require(rho >= 0.0, "certify_solution: rho must be nonnegative");

  Certificate c;
  c.solution = vp.op().solve(g);
  c.approx = post.basis.phi * post.measurements.observe(c.solution);
  // ||u||_V equals ||g||_{L2} for white noise and ||L_reg g||_{L2} otherwise.
  const double gnorm = vp.norm(c.solution);
  c.pointwise_cert = var.sigma2.cwiseSqrt() * gnorm;
  c.energy_cert = rho * gnorm;
  const Vector err = c.solution - c.approx;
  c.energy_error = h1_seminorm(vp.mesh(), err);

  for (Index k = 0; k < M; ++k) {
    const double denom = std::max(c.pointwise_cert(k), kSigmaFloor * std::sqrt(std::max(0.0, var.prior(k))) * gnorm);
    const double r = denom > 0.0 ? std::abs(err(k)) / denom : (err(k) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    c.max_error_ratio = std::max(c.max_error_ratio, r);
  }
  if (!(c.max_error_ratio <= 1.0 + kPointwiseTolerance)) {
    std::ostringstream msg;
    msg << "pointwise error exceeds sigma(x)||g|| by ratio " << c.max_error_ratio;
    throw VerificationError("certificate", msg.str());
  }
  if (!(c.energy_error <= (1.0 + kPointwiseTolerance) * c.energy_cert + 1e-14 * gnorm)) {
    std::ostringstream msg;
    msg << "energy error " << c.energy_error << " exceeds rho ||g|| = " << c.energy_cert;
    throw VerificationError("certificate", msg.str());
  }
  return c;
}

}  // namespace bayeshom
