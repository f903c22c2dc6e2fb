#ifndef BAYESHOM_ANALYSIS_HPP
#define BAYESHOM_ANALYSIS_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bayeshom/common.hpp"
#include "bayeshom/measure.hpp"
#include "bayeshom/mesh.hpp"
#include "bayeshom/operator.hpp"
#include "bayeshom/posterior.hpp"
#include "bayeshom/variational.hpp"

namespace bayeshom {

struct LevelResult {
  double H = 0.0;
  double rho = 0.0;
  double energy_error = 0.0;
  Index measurements = 0;
};

struct ErrorReport {
  double pointwise_max_ratio = 0.0;
  double rho_v0 = 0.0;
  double mesh_H = 0.0;
  double energy_error = 0.0;
  double slope = std::numeric_limits<double>::quiet_NaN();
  std::vector<LevelResult> levels;

  // where the worst pointwise ratio was seen
  std::uint64_t worst_seed = 0;
  int worst_trial = -1;
  Index worst_node = -1;
};

std::string to_json(const ErrorReport& report);

/// Dirichlet energy matrix vᵀ S v = int |grad v|^2, i.e. w times the a = 1 operator.
SparseMatrix h1_gram(const Mesh& mesh);
double h1_seminorm(const Mesh& mesh, const Vector& v);

/// Floor used for the denominator of the pointwise ratio: where sigma is at
/// round-off level (measured nodes) the ratio is taken against
/// kSigmaFloor * sqrt(Gamma(x,x)) instead.
inline constexpr double kSigmaFloor = 1e-8;
inline constexpr double kPointwiseTolerance = 1e-6;

struct PointwiseRatio {
  double max_ratio = 0.0;
  Index node = -1;
};

/// max_x |v(x) - v_Psi(x)| / (sigma(x) ||v||_V) for one v.
PointwiseRatio pointwise_ratio(const Posterior& post, const VProduct& vp, const VarianceField& var, const Vector& v);

/// Random right-hand side for trial `trial`: i.i.d. nodal normals for white
/// noise, L_reg^{-1} of them for regularized noise (so g is smooth).
Vector random_rhs(const NoiseModel& noise, const Mesh& mesh, std::uint64_t seed, std::uint64_t trial);

/// Runs `trials` random v = A^{-1} g against the pointwise bound. Throws
/// VerificationError("pointwise_bound") naming seed, trial and node when the
/// ratio exceeds 1 + 1e-6 and `throw_on_violation` is set.
ErrorReport check_pointwise_bound(const Posterior& post, const VProduct& vp, int trials, std::uint64_t seed,
                                  bool throw_on_violation = true);

enum class RhoMethod { Auto, Dense, Lanczos };

struct RhoEstimate {
  double rho = 0.0;
  Vector extremal;  // maximizer of ||v||_H / ||v||_V over V_0 (empty when rho = 0)
  RhoMethod method = RhoMethod::Dense;
  int iterations = 0;
};

/// rho(V_0) = sup over v with all measurements zero of ||v||_{H^1_0} / ||v||_V.
/// Dense generalized eigensolve on a null-space basis for M <= 2000, Lanczos
/// in the V-product otherwise (tolerance 1e-6).
RhoEstimate estimate_rho_v0(const VProduct& vp, const MeasurementSet& ms, RhoMethod method = RhoMethod::Auto);

enum class StudyMeasurement { Dirac, Voronoi, Density };

struct ScalingConfig {
  int dim = 1;
  int n = 256;
  CoefficientSpec coefficient;
  int noise_power = 0;
  StudyMeasurement measurement = StudyMeasurement::Dirac;
  std::vector<int> per_side{3, 7, 15};  // lattice points per axis, H ~ 1/(m+1)
  std::uint64_t seed = 0;                // for the fixed g of the energy errors
  RhoMethod rho_method = RhoMethod::Auto;
};

struct ScalingResult {
  std::vector<LevelResult> levels;
  double slope = 0.0;         // d log rho / d log H
  double energy_slope = 0.0;  // d log energy_error / d log H
  double constant = 0.0;      // mean rho / H
  double normalized_constant = 0.0;  // constant * lambda_min(a)
};

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

ScalingResult scaling_study(const ScalingConfig& config);

struct Certificate {
  Vector solution;
  Vector approx;
  Vector pointwise_cert;  // sigma(x) ||g||, with g measured in the V-norm of the prior
  double energy_cert = 0.0;
  double energy_error = 0.0;
  double max_error_ratio = 0.0;
};

/// u = A^{-1} g, its interpolant and both certified bounds; throws
/// VerificationError("certificate") if the actual error violates either.
Certificate certify_solution(const Posterior& post, const VProduct& vp, const VarianceField& var, double rho,
                             const Vector& g);

}  // namespace bayeshom

#endif  // BAYESHOM_ANALYSIS_HPP
