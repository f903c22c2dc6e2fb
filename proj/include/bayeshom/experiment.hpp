#ifndef BAYESHOM_EXPERIMENT_HPP
#define BAYESHOM_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bayeshom/analysis.hpp"
#include "bayeshom/common.hpp"
#include "bayeshom/measure.hpp"
#include "bayeshom/mesh.hpp"
#include "bayeshom/operator.hpp"

namespace bayeshom {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

void set_log_level(LogLevel level);
LogLevel parse_log_level(const std::string& text);
void log_message(LogLevel level, const std::string& message);

/// Invalid configuration; field() is the dotted path of the offending entry.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidArgument("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct MeasurementConfig {
  MeasurementKind kind = MeasurementKind::Dirac;
  std::vector<Point> points;  // Dirac points or Voronoi / density centers
  double radius = 0.0;        // hat radius for densities (0: lattice spacing)
};

enum class MethodKind { Conditioning, Variational, Localized };
enum class StudyKind { None, Pointwise, Scaling, Oracle };

struct StudyConfig {
  StudyKind kind = StudyKind::None;
  int trials = 100;
  std::uint64_t seed = 0;
  std::vector<int> levels;  // lattice points per axis
  Index samples = 10000;
};

struct ExperimentConfig {
  int dim = 1;
  int n = 64;
  CoefficientSpec coefficient;
  int noise_power = 0;  // 0: white
  MeasurementConfig measurements;
  MethodKind method = MethodKind::Conditioning;
  double localization_radius = 0.0;
  StudyConfig study;
  std::string fault_injection;  // "" or "theta"
  std::string output_dir;       // used when --out is not given

  std::string canonical;  // canonical JSON dump of the input
  std::string hash;       // FNV-1a of `canonical`
};

/// Parses and validates a JSON config. Every violation of a downstream
/// precondition that can be checked without solving is reported as a
/// ConfigError naming the field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Setup {
  Mesh mesh;
  CoefficientField coefficient;
  DiscreteOperator op;
  NoiseModel noise;
  std::optional<MeasurementSet> measurements;
};

/// Builds mesh, coefficient, operator, noise and (when the config lists them)
/// measurements, translating precondition failures into ConfigError.
Setup build_setup(const ExperimentConfig& config);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
};

struct VerifyReport {
  ErrorReport errors;
  std::vector<CheckResult> checks;
  std::optional<std::string> oracle_json;
  bool passed() const;
  std::vector<std::string> failed() const;
};

/// Property suites used by `verify`. Runs every check and records the outcome
/// instead of stopping at the first failure.
VerifyReport run_verify_suites(const ExperimentConfig& config, const Setup& setup);

/// Exit codes shared by the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerification = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInternal = 3;

/// Each command writes into `out_dir` and returns an exit code; configuration,
/// verification and solver problems surface as exceptions.
int cmd_build_basis(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_verify(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_study(const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace bayeshom

#endif  // BAYESHOM_EXPERIMENT_HPP
