#ifndef BAYESHOM_ORACLE_HPP
#define BAYESHOM_ORACLE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bayeshom/common.hpp"
#include "bayeshom/measure.hpp"
#include "bayeshom/operator.hpp"
#include "bayeshom/posterior.hpp"

namespace bayeshom {

/// count samples of xi as columns (M x count). White: N(0, 1/w) per node;
/// regularized: L_reg^{-1} applied to a white sample. Sample s depends only
/// on (seed, s).
Matrix sample_noise(const NoiseModel& nm, const Mesh& mesh, std::uint64_t seed, Index count);

struct SampleBatch {
  std::uint64_t seed = 0;
  Index count = 0;
  std::vector<Index> nodes;  // rows kept in `fields`
  Matrix fields;             // nodes.size() x S, u_s at the kept nodes
  Matrix observations;       // S x N, Psi(u_s)
};

/// Samples u_s = A^{-1} xi_s and their observations. Only the rows listed in
/// `nodes` are stored (all nodes when empty) so large S stays affordable.
SampleBatch sample_solution(const DiscreteOperator& op, const NoiseModel& nm, const MeasurementSet& ms,
                            std::uint64_t seed, Index count, std::vector<Index> nodes = {});

struct RegressionResult {
  Vector coefficients;
  Vector standard_errors;
  double residual_variance = 0.0;
  double residual_variance_se = 0.0;
};

/// OLS without intercept of u_s(nodes[row]) on Psi_s.
RegressionResult regression_conditional_mean(const SampleBatch& batch, Index row);

/// Psi^T Psi / S (the field is centered, so no mean is subtracted).
Matrix empirical_theta(const SampleBatch& batch);

struct OracleSummary {
  std::uint64_t seed = 0;
  Index count = 0;
  std::string generator;
  double theta_frobenius_relerr = 0.0;
  double regression_pass_fraction = 0.0;
  double variance_pass_fraction = 0.0;
  Index pairs_tested = 0;
};

/// Absolute slack added to the 3-SE test. At measured nodes both the
/// regression and the analytic answer are exact and the SE collapses to zero.
inline constexpr double kOracleAbsTolerance = 1e-8;

/// Samples S fields and compares regression coefficients with phi_i(node),
/// residual variances with sigma^2(node) and the empirical Theta with Theta.
OracleSummary run_oracle(const Posterior& post, std::uint64_t seed, Index count, std::vector<Index> nodes = {});

std::string to_json(const OracleSummary& summary);

}  // namespace bayeshom

#endif  // BAYESHOM_ORACLE_HPP
