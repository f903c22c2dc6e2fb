#include "bayeshom/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "bayeshom/parallel.hpp"
#include "bayeshom/random.hpp"

namespace bayeshom {

namespace {

Vector noise_sample(const NoiseModel& nm, const Mesh& mesh, std::uint64_t seed, Index s) {
  auto rng = make_stream(seed, static_cast<std::uint64_t>(s));
  Vector xi = standard_normal(rng, mesh.num_nodes()) / std::sqrt(mesh.weight());
  if (!nm.is_white()) xi = nm.solve(xi);
  return xi;
}

}  // namespace

Matrix sample_noise(const NoiseModel& nm, const Mesh& mesh, std::uint64_t seed, Index count) {
  require(count >= 1, "sample_noise: count must be >= 1");
  Matrix out(mesh.num_nodes(), count);
  parallel_for(count, [&](Index s) { out.col(s) = noise_sample(nm, mesh, seed, s); });
  return out;
}

SampleBatch sample_solution(const DiscreteOperator& op, const NoiseModel& nm, const MeasurementSet& ms,
                            std::uint64_t seed, Index count, std::vector<Index> nodes) {
  require(count >= 1, "sample_solution: count must be >= 1");
  require(ms.num_nodes() == op.size(), "sample_solution: measurements built on a different mesh");
  if (nodes.empty()) {
    nodes.resize(static_cast<std::size_t>(op.size()));
    std::iota(nodes.begin(), nodes.end(), Index{0});
  }
  for (Index k : nodes) require(k >= 0 && k < op.size(), "sample_solution: node index out of range");

  SampleBatch batch;
  batch.seed = seed;
  batch.count = count;
  batch.fields.resize(static_cast<Index>(nodes.size()), count);
  batch.observations.resize(count, ms.size());
  parallel_for(count, [&](Index s) {
    const Vector u = op.solve(noise_sample(nm, op.mesh(), seed, s));
    for (std::size_t r = 0; r < nodes.size(); ++r) batch.fields(static_cast<Index>(r), s) = u(nodes[r]);
    batch.observations.row(s) = ms.observe(u).transpose();
  });
  batch.nodes = std::move(nodes);
  return batch;
}

RegressionResult regression_conditional_mean(const SampleBatch& batch, Index row) {
  require(row >= 0 && row < batch.fields.rows(), "regression: row out of range");
  const Index S = batch.count;
  const Index N = batch.observations.cols();
  require(S > N, "regression: need more samples than measurements");
  const Matrix& X = batch.observations;
  const Vector y = batch.fields.row(row).transpose();

  const Matrix xtx = X.transpose() * X;
  Eigen::LLT<Matrix> llt(xtx);
  const double scale = xtx.diagonal().maxCoeff();
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-12 * std::sqrt(scale)))
    throw SolverError("regression: design matrix is rank deficient (degenerate measurements)");

  RegressionResult out;
  out.coefficients = llt.solve(X.transpose() * y);
  const Vector resid = y - X * out.coefficients;
  const double s2 = resid.squaredNorm() / static_cast<double>(S - N);
  const Matrix inv = llt.solve(Matrix::Identity(N, N));
  out.standard_errors = (s2 * inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  out.residual_variance = s2;
  out.residual_variance_se = s2 * std::sqrt(2.0 / static_cast<double>(S - N));
  return out;
}

Matrix empirical_theta(const SampleBatch& batch) {
  return batch.observations.transpose() * batch.observations / static_cast<double>(batch.count);
}

OracleSummary run_oracle(const Posterior& post, std::uint64_t seed, Index count, std::vector<Index> nodes) {
  const Index M = post.gamma.size();
  if (nodes.empty()) {
    // every node when small, otherwise 64 evenly spaced ones
    const Index K = std::min<Index>(M, 64);
    for (Index i = 0; i < K; ++i) nodes.push_back(K == M ? i : (i * (M - 1)) / (K - 1));
  }
  const SampleBatch batch = sample_solution(post.gamma.op(), post.gamma.noise(), post.measurements, seed, count, nodes);
  const VarianceField var = posterior_variance(post.gamma, post.measurements, post.theta, batch.nodes);

  OracleSummary out;
  out.seed = seed;
  out.count = count;
  out.generator = kGeneratorName;
  out.theta_frobenius_relerr = (empirical_theta(batch) - post.theta.values).norm() / post.theta.values.norm();

  Index pass = 0, total = 0, var_pass = 0;
  for (Index r = 0; r < static_cast<Index>(batch.nodes.size()); ++r) {
    const RegressionResult reg = regression_conditional_mean(batch, r);
    const Index node = batch.nodes[static_cast<std::size_t>(r)];
    const double scale = post.basis.phi.row(node).cwiseAbs().maxCoeff() + 1.0;
    for (Index i = 0; i < reg.coefficients.size(); ++i) {
      const double diff = std::abs(reg.coefficients(i) - post.basis.phi(node, i));
      if (diff <= 3.0 * reg.standard_errors(i) + kOracleAbsTolerance * scale) ++pass;
      ++total;
    }
    const double vdiff = std::abs(reg.residual_variance - var.sigma2(r));
    if (vdiff <= 3.0 * reg.residual_variance_se + kOracleAbsTolerance * var.prior(r)) ++var_pass;
  }
  out.pairs_tested = total;
  out.regression_pass_fraction = total ? static_cast<double>(pass) / static_cast<double>(total) : 0.0;
  out.variance_pass_fraction = static_cast<double>(var_pass) / static_cast<double>(batch.nodes.size());
  return out;
}

std::string to_json(const OracleSummary& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["count"] = s.count;
  j["generator"] = s.generator;
  j["theta_frobenius_relerr"] = s.theta_frobenius_relerr;
  j["regression_pass_fraction"] = s.regression_pass_fraction;
  j["variance_pass_fraction"] = s.variance_pass_fraction;
  j["pairs_tested"] = s.pairs_tested;
  return j.dump(2);
}

}  // namespace bayeshom
