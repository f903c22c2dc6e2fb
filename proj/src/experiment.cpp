#include "bayeshom/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bayeshom/io.hpp"
#include "bayeshom/oracle.hpp"
#include "bayeshom/posterior.hpp"
#include "bayeshom/random.hpp"
#include "bayeshom/variational.hpp"

namespace bayeshom {

using nlohmann::json;

// ---------------------------------------------------------------- logging

namespace {
std::atomic<int> g_log_level{static_cast<int>(LogLevel::Warn)};
std::mutex g_log_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_log_level = static_cast<int>(level); }

LogLevel parse_log_level(const std::string& text) {
  if (text == "error") return LogLevel::Error;
  if (text == "warn" || text == "warning") return LogLevel::Warn;
  if (text == "info") return LogLevel::Info;
  if (text == "debug") return LogLevel::Debug;
  throw InvalidArgument("unknown log level '" + text + "' (expected error, warn, info or debug)");
}

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > g_log_level.load()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[bayeshom " << names[static_cast<int>(level)] << "] " << message << '\n';
}

// ---------------------------------------------------------------- config

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(join(path, item.key()), "unknown key");
  }
}

const json& require_object(const json& parent, const std::string& key, const std::string& path) {
  if (!parent.contains(key)) throw ConfigError(join(path, key), "is required");
  const json& v = parent.at(key);
  if (!v.is_object()) throw ConfigError(join(path, key), "must be an object");
  return v;
}

std::string get_string(const json& obj, const std::string& key, const std::string& path,
                       std::optional<std::string> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "is required");
  }
  if (!obj.at(key).is_string()) throw ConfigError(join(path, key), "must be a string");
  return obj.at(key).get<std::string>();
}

double get_number(const json& obj, const std::string& key, const std::string& path,
                  std::optional<double> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "is required");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key), "must be finite");
  return x;
}

std::int64_t get_integer(const json& obj, const std::string& key, const std::string& path,
                         std::optional<std::int64_t> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "is required");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& path) {
  const std::int64_t s = get_integer(obj, "seed", path, 0);
  if (s < 0) throw ConfigError(join(path, "seed"), "must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

CoefficientSpec parse_coefficient(const json& c) {
  const std::string path = "coefficient";
  const std::string kind = get_string(c, "kind", path);
  CoefficientSpec spec;
  if (kind == "constant") {
    check_keys(c, path, {"kind", "value"});
    spec = CoefficientSpec::constant(get_number(c, "value", path, 1.0));
    if (!(spec.value > 0.0)) throw ConfigError("coefficient.value", "must be positive");
  } else if (kind == "layered") {
    check_keys(c, path, {"kind", "contrast", "layers"});
    spec = CoefficientSpec::layered(get_number(c, "contrast", path), static_cast<int>(get_integer(c, "layers", path, 8)));
    if (spec.layers < 1) throw ConfigError("coefficient.layers", "must be >= 1");
  } else if (kind == "checkerboard") {
    check_keys(c, path, {"kind", "contrast", "block"});
    spec = CoefficientSpec::checkerboard(get_number(c, "contrast", path), static_cast<int>(get_integer(c, "block", path, 1)));
    if (spec.block < 1) throw ConfigError("coefficient.block", "must be >= 1");
  } else if (kind == "lognormal_rough") {
    check_keys(c, path, {"kind", "contrast", "seed"});
    spec = CoefficientSpec::lognormal_rough(get_seed(c, path), get_number(c, "contrast", path));
  } else {
    throw ConfigError("coefficient.kind", "must be one of constant, layered, checkerboard, lognormal_rough (got '" + kind + "')");
  }
  if (spec.kind != CoefficientKind::Constant && !(spec.contrast >= 1.0))
    throw ConfigError("coefficient.contrast", "must be >= 1");
  return spec;
}

std::vector<Point> parse_points(const json& arr, const std::string& path, int dim) {
  if (!arr.is_array() || arr.empty()) throw ConfigError(path, "must be a nonempty array of points");
  std::vector<Point> pts;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string field = path + "[" + std::to_string(i) + "]";
    const json& p = arr[i];
    Point pt{0.0, 0.0};
    if (p.is_number() && dim == 1) {
      pt[0] = p.get<double>();
    } else if (p.is_array() && static_cast<int>(p.size()) == dim &&
               std::all_of(p.begin(), p.end(), [](const json& x) { return x.is_number(); })) {
      for (int d = 0; d < dim; ++d) pt[static_cast<std::size_t>(d)] = p[static_cast<std::size_t>(d)].get<double>();
    } else {
      throw ConfigError(field, "must be an array of " + std::to_string(dim) + " numbers");
    }
    for (int d = 0; d < dim; ++d) {
      const double x = pt[static_cast<std::size_t>(d)];
      if (!(x > 0.0 && x < 1.0)) throw ConfigError(field, "coordinates must lie strictly inside (0, 1)");
    }
    pts.push_back(pt);
  }
  return pts;
}

MeasurementConfig parse_measurements(const json& m, int dim, bool points_optional) {
  const std::string path = "measurements";
  MeasurementConfig mc;
  const std::string kind = get_string(m, "kind", path);
  const char* list_key = "points";
  if (kind == "dirac") {
    mc.kind = MeasurementKind::Dirac;
    check_keys(m, path, {"kind", "points", "grid"});
  } else if (kind == "voronoi" || kind == "voronoi_indicator") {
    mc.kind = MeasurementKind::VoronoiIndicator;
    list_key = "centers";
    check_keys(m, path, {"kind", "centers", "grid"});
  } else if (kind == "density") {
    mc.kind = MeasurementKind::Density;
    list_key = "centers";
    check_keys(m, path, {"kind", "centers", "grid", "radius"});
  } else {
    throw ConfigError("measurements.kind", "must be one of dirac, voronoi, density (got '" + kind + "')");
  }
  const bool has_list = m.contains(list_key);
  const bool has_grid = m.contains("grid");
  if (has_list && has_grid) throw ConfigError(path, std::string("give either '") + list_key + "' or 'grid', not both");
  if (has_list) {
    mc.points = parse_points(m.at(list_key), join(path, list_key), dim);
  } else if (has_grid) {
    const std::int64_t g = get_integer(m, "grid", path);
    if (g < 1 || g > 64) throw ConfigError("measurements.grid", "must be between 1 and 64");
    mc.points = lattice_points(dim, static_cast<int>(g));
    mc.radius = 1.0 / static_cast<double>(g + 1);
  } else if (!points_optional) {
    throw ConfigError(join(path, list_key), std::string("is required (or give 'grid')"));
  }
  if (mc.kind == MeasurementKind::Density) {
    if (m.contains("radius")) mc.radius = get_number(m, "radius", path);
    if (has_list && !m.contains("radius")) throw ConfigError("measurements.radius", "is required with explicit centers");
    if (!mc.points.empty() && !(mc.radius > 0.0)) throw ConfigError("measurements.radius", "must be positive");
  }
  return mc;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<document>", "must be a JSON object");
  check_keys(j, "", {"dim", "n", "coefficient", "noise", "measurements", "method", "study", "fault_injection", "outputs"});

  ExperimentConfig cfg;
  cfg.dim = static_cast<int>(get_integer(j, "dim", ""));
  if (cfg.dim != 1 && cfg.dim != 2) throw ConfigError("dim", "must be 1 or 2");
  const std::int64_t n = get_integer(j, "n", "");
  if (n < 2) throw ConfigError("n", "must be at least 2");
  if ((cfg.dim == 1 && n > 65536) || (cfg.dim == 2 && n > 512)) throw ConfigError("n", "is too large for a direct solver");
  cfg.n = static_cast<int>(n);

  cfg.coefficient = j.contains("coefficient") ? parse_coefficient(require_object(j, "coefficient", ""))
                                              : CoefficientSpec::constant(1.0);

  if (j.contains("noise")) {
    const json& nz = require_object(j, "noise", "");
    const std::string kind = get_string(nz, "kind", "noise");
    if (kind == "white") {
      check_keys(nz, "noise", {"kind"});
      cfg.noise_power = 0;
    } else if (kind == "regularized") {
      check_keys(nz, "noise", {"kind", "power"});
      const std::int64_t k = get_integer(nz, "power", "noise");
      if (k < 1 || k > 3) throw ConfigError("noise.power", "must be 1, 2 or 3");
      cfg.noise_power = static_cast<int>(k);
    } else {
      throw ConfigError("noise.kind", "must be white or regularized (got '" + kind + "')");
    }
  }

  if (j.contains("study")) {
    const json& st = require_object(j, "study", "");
    const std::string kind = get_string(st, "kind", "study");
    if (kind == "none") {
      check_keys(st, "study", {"kind"});
    } else if (kind == "pointwise") {
      check_keys(st, "study", {"kind", "trials", "seed"});
      cfg.study.kind = StudyKind::Pointwise;
      const std::int64_t t = get_integer(st, "trials", "study", 100);
      if (t < 1) throw ConfigError("study.trials", "must be >= 1");
      cfg.study.trials = static_cast<int>(t);
      cfg.study.seed = get_seed(st, "study");
    } else if (kind == "scaling") {
      check_keys(st, "study", {"kind", "levels", "seed"});
      cfg.study.kind = StudyKind::Scaling;
      if (!st.contains("levels")) throw ConfigError("study.levels", "is required (at least 3 lattice sizes)");
      const json& lv = st.at("levels");
      if (!lv.is_array()) throw ConfigError("study.levels", "must be an array of integers");
      std::set<int> seen;
      for (std::size_t i = 0; i < lv.size(); ++i) {
        const std::string field = "study.levels[" + std::to_string(i) + "]";
        if (!lv[i].is_number_integer() || lv[i].get<int>() < 1) throw ConfigError(field, "must be a positive integer");
        if (!seen.insert(lv[i].get<int>()).second) throw ConfigError(field, "duplicate level");
        cfg.study.levels.push_back(lv[i].get<int>());
      }
      if (cfg.study.levels.size() < 3) throw ConfigError("study.levels", "needs at least 3 levels");
      cfg.study.seed = get_seed(st, "study");
    } else if (kind == "oracle") {
      check_keys(st, "study", {"kind", "samples", "seed"});
      cfg.study.kind = StudyKind::Oracle;
      const std::int64_t s = get_integer(st, "samples", "study", 10000);
      if (s < 100 || s > 1000000) throw ConfigError("study.samples", "must be between 100 and 1000000");
      cfg.study.samples = static_cast<Index>(s);
      cfg.study.seed = get_seed(st, "study");
    } else {
      throw ConfigError("study.kind", "must be one of none, pointwise, scaling, oracle (got '" + kind + "')");
    }
  }

  const bool scaling = cfg.study.kind == StudyKind::Scaling;
  if (j.contains("measurements")) {
    cfg.measurements = parse_measurements(require_object(j, "measurements", ""), cfg.dim, scaling);
  } else if (!scaling) {
    throw ConfigError("measurements", "is required");
  }

  if (j.contains("method")) {
    const json& me = require_object(j, "method", "");
    const std::string kind = get_string(me, "kind", "method");
    if (kind == "conditioning") {
      check_keys(me, "method", {"kind"});
      cfg.method = MethodKind::Conditioning;
    } else if (kind == "variational") {
      check_keys(me, "method", {"kind"});
      cfg.method = MethodKind::Variational;
    } else if (kind == "localized") {
      check_keys(me, "method", {"kind", "radius"});
      cfg.method = MethodKind::Localized;
      cfg.localization_radius = get_number(me, "radius", "method");
      if (!(cfg.localization_radius > 0.0)) throw ConfigError("method.radius", "must be positive");
    } else {
      throw ConfigError("method.kind", "must be one of conditioning, variational, localized (got '" + kind + "')");
    }
  }

  if (j.contains("fault_injection")) {
    cfg.fault_injection = get_string(j, "fault_injection", "");
    if (cfg.fault_injection != "theta") throw ConfigError("fault_injection", "the only supported hook is \"theta\"");
  }
  if (j.contains("outputs")) {
    const json& o = require_object(j, "outputs", "");
    check_keys(o, "outputs", {"dir"});
    cfg.output_dir = get_string(o, "dir", "outputs");
  }

  const Index nodes = cfg.dim == 1 ? (cfg.n - 1) : static_cast<Index>(cfg.n - 1) * (cfg.n - 1);
  if (!cfg.measurements.points.empty() && static_cast<Index>(cfg.measurements.points.size()) >= nodes)
    throw ConfigError("measurements", "needs fewer measurements than interior nodes");
  if (cfg.study.kind == StudyKind::Oracle) {
    if (nodes > 400) throw ConfigError("n", "the oracle study is limited to at most 400 interior nodes");
    if (cfg.study.samples <= static_cast<Index>(cfg.measurements.points.size()))
      throw ConfigError("study.samples", "must exceed the number of measurements");
  }
  if (scaling) {
    for (std::size_t i = 0; i < cfg.study.levels.size(); ++i) {
      const int m = cfg.study.levels[i];
      const Index count = cfg.dim == 1 ? m : static_cast<Index>(m) * m;
      if (count >= nodes)
        throw ConfigError("study.levels[" + std::to_string(i) + "]", "more lattice points than interior nodes");
    }
  }

  cfg.canonical = j.dump();
  cfg.hash = fnv1a_hex(cfg.canonical);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------- setup

namespace {

template <class F>
auto as_config_error(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(field, e.what());
  }
}

MeasurementSet make_measurements(const Mesh& mesh, const MeasurementConfig& mc) {
  return as_config_error("measurements", [&] {
    switch (mc.kind) {
      case MeasurementKind::Dirac: return make_dirac(mesh, mc.points);
      case MeasurementKind::VoronoiIndicator: return make_voronoi(mesh, mc.points);
      case MeasurementKind::Density: return make_density(mesh, hat_densities(mesh, mc.points, mc.radius));
    }
    throw InvalidArgument("unknown measurement kind");
  });
}

}  // namespace

Setup build_setup(const ExperimentConfig& config) {
  Mesh mesh = as_config_error("n", [&] { return build_mesh(config.dim, config.n); });
  CoefficientField a = as_config_error("coefficient", [&] { return make_coefficient(mesh, config.coefficient); });
  DiscreteOperator op = assemble_elliptic(mesh, a);
  NoiseModel noise = config.noise_power == 0 ? NoiseModel::white() : NoiseModel::regularized(mesh, config.noise_power);
  std::optional<MeasurementSet> ms;
  if (!config.measurements.points.empty()) ms.emplace(make_measurements(mesh, config.measurements));
  return Setup{std::move(mesh), std::move(a), std::move(op), std::move(noise), std::move(ms)};
}

// ---------------------------------------------------------------- shared pieces

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const MeasurementSet& measurements_of(const Setup& setup) {
  if (!setup.measurements) throw ConfigError("measurements.points", "this command needs explicit measurements");
  return *setup.measurements;
}

// Theta with the optional fault hook applied before factorization.
ThetaMatrix theta_for(const ExperimentConfig& config, const GammaOperator& g, const MeasurementSet& ms) {
  if (config.fault_injection != "theta") return assemble_theta(g, ms);
  Matrix columns(g.size(), ms.size());
  for (Index j = 0; j < ms.size(); ++j) columns.col(j) = g.apply(ms.dual_vectors().col(j));
  Matrix raw = ms.observe_all(columns);
  log_message(LogLevel::Warn, "fault injection: flipping the sign of Theta(0,0)");
  raw(0, 0) = -raw(0, 0);
  return theta_from_values(std::move(raw), std::move(columns));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SolverError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw SolverError("failed while writing '" + path.string() + "'");
}

std::string with_hash(const std::string& hash, const std::string& csv) { return "# config_hash=" + hash + "\n" + csv; }

StudyMeasurement study_measurement(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::Dirac: return StudyMeasurement::Dirac;
    case MeasurementKind::VoronoiIndicator: return StudyMeasurement::Voronoi;
    case MeasurementKind::Density: return StudyMeasurement::Density;
  }
  return StudyMeasurement::Dirac;
}

ScalingConfig scaling_config(const ExperimentConfig& config) {
  ScalingConfig sc;
  sc.dim = config.dim;
  sc.n = config.n;
  sc.coefficient = config.coefficient;
  sc.noise_power = config.noise_power;
  sc.measurement = study_measurement(config.measurements.kind);
  sc.per_side = config.study.levels;
  sc.seed = config.study.seed;
  return sc;
}

json levels_json(const std::vector<LevelResult>& levels) {
  json arr = json::array();
  for (const auto& l : levels) arr.push_back({{"H", l.H}, {"rho", l.rho}, {"energy_error", l.energy_error}, {"measurements", l.measurements}});
  return arr;
}

}  // namespace

// ---------------------------------------------------------------- verify suites

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::string> VerifyReport::failed() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c.name);
  return out;
}

VerifyReport run_verify_suites(const ExperimentConfig& config, const Setup& setup) {
  VerifyReport rep;
  auto record = [&](std::string name, double value, double tol, bool ok) {
    log_message(ok ? LogLevel::Info : LogLevel::Error,
                name + (ok ? " passed" : " FAILED") + " (value " + format_double(value) + ", tolerance " + format_double(tol) + ")");
    rep.checks.push_back({std::move(name), ok, value, tol});
  };
  auto run_scaling = [&] {
    const ScalingResult sr = scaling_study(scaling_config(config));
    rep.errors.levels = sr.levels;
    rep.errors.slope = sr.slope;
    record("scaling_slope", sr.slope, 1.0, sr.slope >= 0.8 && sr.slope <= 1.2);
  };
  if (!setup.measurements && config.study.kind == StudyKind::Scaling) {
    run_scaling();
    return rep;
  }
  const MeasurementSet& ms = measurements_of(setup);
  const std::uint64_t seed = config.study.seed;
  const Index M = setup.mesh.num_nodes();
  const Index N = ms.size();

  GammaOperator gamma(setup.op, setup.noise);
  std::optional<ThetaMatrix> theta;
  try {
    theta.emplace(theta_for(config, gamma, ms));
  } catch (const VerificationError& e) {
    log_message(LogLevel::Error, e.what());
    rep.checks.push_back({e.invariant(), false, 0.0, 0.0});
    return rep;
  }
  record("theta_spd", theta->min_eigenvalue, 0.0, theta->min_eigenvalue > 0.0);
  record("theta_symmetry", theta->asymmetry, 1e-12, theta->asymmetry <= 1e-12);

  const BasisSet basis = basis_by_conditioning(gamma, ms, *theta);
  const Posterior post{gamma, ms, *theta, basis};
  const VProduct vp(setup.op, setup.noise);
  const Matrix theta_inv = theta->inverse();

  // conditioning against minimization
  const VariationalBasis vb = basis_by_minimization(vp, ms);
  const double phi_scale = basis.phi.cwiseAbs().maxCoeff();
  const double equiv = (vb.basis.phi - basis.phi).cwiseAbs().maxCoeff() / phi_scale;
  record("variational_equivalence", equiv, 1e-8, equiv <= 1e-8);
  const double mult = (vb.multipliers - theta_inv).norm() / theta_inv.norm();
  record("multipliers_theta_inverse", mult, 1e-6, mult <= 1e-6);
  if (config.method == MethodKind::Localized) {
    const LocalizedBasis lb = basis_by_localized_minimization(vp, ms, config.localization_radius);
    for (const auto& w : lb.warnings) log_message(LogLevel::Warn, w);
  }

  // optimal recovery identities
  Matrix gram(N, N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < N; ++j) gram(i, j) = vp.inner(basis.phi.col(i), basis.phi.col(j));
  const double gram_err = (gram - theta_inv).norm() / theta_inv.norm();
  record("gram_theta_inverse", gram_err, 1e-6, gram_err <= 1e-6);

  double ortho = 0.0;
  std::vector<double> phi_norms(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i) phi_norms[static_cast<std::size_t>(i)] = vp.norm(basis.phi.col(i));
  for (int t = 0; t < 50; ++t) {
    const Vector v = setup.op.solve(random_rhs(setup.noise, setup.mesh, seed, 1000 + static_cast<std::uint64_t>(t)));
    const Vector r = v - project_optimal_recovery(vp, basis, v, ms);
    const double vn = vp.norm(v);
    for (Index i = 0; i < N; ++i)
      ortho = std::max(ortho, std::abs(vp.inner(basis.phi.col(i), r)) / (phi_norms[static_cast<std::size_t>(i)] * vn));
  }
  record("orthogonality", ortho, 1e-8, ortho <= 1e-8);

  // reproducing property
  double repro = 0.0;
  const Index probes = std::min<Index>(20, M);
  std::vector<Vector> vs;
  for (int t = 0; t < 20; ++t)
    vs.push_back(setup.op.solve(random_rhs(setup.noise, setup.mesh, seed, 2000 + static_cast<std::uint64_t>(t))));
  for (Index p = 0; p < probes; ++p) {
    const Index node = probes == 1 ? 0 : (p * (M - 1)) / (probes - 1);
    const Vector col = gamma.column(node);
    const double gxx = col(node);
    for (const Vector& v : vs)
      repro = std::max(repro, std::abs(vp.inner(v, col) - v(node)) / (vp.norm(v) * std::sqrt(gxx)));
  }
  record("rkhs_reproduction", repro, 1e-8, repro <= 1e-8);

  // pointwise certificate and variance
  const int trials = config.study.kind == StudyKind::Pointwise ? config.study.trials : 20;
  rep.errors = check_pointwise_bound(post, vp, trials, seed, false);
  record("pointwise_bound", rep.errors.pointwise_max_ratio, 1.0 + kPointwiseTolerance,
         rep.errors.pointwise_max_ratio <= 1.0 + kPointwiseTolerance);
  const VarianceField var = posterior_variance(gamma, ms, *theta);
  double above_prior = 0.0;
  for (Index k = 0; k < M; ++k) above_prior = std::max(above_prior, (var.sigma2(k) - var.prior(k)) / var.prior(k));
  record("variance_below_prior", above_prior, 1e-12, above_prior <= 1e-12);
  if (ms.kind() == MeasurementKind::Dirac) {
    double at_nodes = 0.0;
    for (Index i = 0; i < N; ++i) {
      const Index k = ms.dirac_node(i);
      at_nodes = std::max(at_nodes, var.sigma2(k) / var.prior(k));
    }
    record("variance_zero_at_measurements", at_nodes, 1e-10, at_nodes <= 1e-10);
  }

  // rho(V0) and the energy bound
  const RhoEstimate rho = estimate_rho_v0(vp, ms);
  rep.errors.rho_v0 = rho.rho;
  rep.errors.mesh_H = mesh_norm(setup.mesh, ms.support_points(setup.mesh));
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Vector v = setup.op.solve(random_rhs(setup.noise, setup.mesh, seed, 3000 + static_cast<std::uint64_t>(t)));
    const double lhs = h1_seminorm(setup.mesh, v - project_optimal_recovery(vp, basis, v, ms));
    const double rhs = rho.rho * vp.norm(v);
    worst = std::max(worst, rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
  }
  record("rho_bound", worst, 1.0 + 1e-6, rho.rho >= 0.0 && worst <= 1.0 + 1e-6);
  if (rho.extremal.size() == M) {
    const double tight = h1_seminorm(setup.mesh, rho.extremal) / (rho.rho * vp.norm(rho.extremal));
    record("rho_tightness", tight, 0.99, tight >= 0.99);
  }
  const Certificate cert = certify_solution(post, vp, var, rho.rho, random_rhs(setup.noise, setup.mesh, seed, 4000));
  rep.errors.energy_error = cert.energy_error;
  record("energy_certificate", cert.energy_error, cert.energy_cert, cert.energy_error <= cert.energy_cert * (1.0 + 1e-6));

  if (config.study.kind == StudyKind::Oracle) {
    const OracleSummary o = run_oracle(post, seed, config.study.samples);
    rep.oracle_json = to_json(o);
    record("oracle_regression", o.regression_pass_fraction, 0.95, o.regression_pass_fraction >= 0.95);
    record("oracle_variance", o.variance_pass_fraction, 0.95, o.variance_pass_fraction >= 0.95);
    record("oracle_theta", o.theta_frobenius_relerr, 0.05, o.theta_frobenius_relerr <= 0.05);
  }
  if (config.study.kind == StudyKind::Scaling) run_scaling();
  return rep;
}

// ---------------------------------------------------------------- commands

int cmd_build_basis(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto t_start = Clock::now();
  const Setup setup = build_setup(config);
  const MeasurementSet& ms = measurements_of(setup);
  std::filesystem::create_directories(out_dir);
  json timings;

  auto t0 = Clock::now();
  GammaOperator gamma(setup.op, setup.noise);
  const ThetaMatrix theta = theta_for(config, gamma, ms);
  timings["theta"] = seconds_since(t0);

  t0 = Clock::now();
  json warnings = json::array();
  json fallbacks = json::array();
  BasisSet basis;
  double constraint_residual = 0.0;
  switch (config.method) {
    case MethodKind::Conditioning:
      basis = basis_by_conditioning(gamma, ms, theta);
      break;
    case MethodKind::Variational: {
      const VProduct vp(setup.op, setup.noise);
      VariationalBasis vb = basis_by_minimization(vp, ms);
      constraint_residual = vb.constraint_residual;
      basis = std::move(vb.basis);
      break;
    }
    case MethodKind::Localized: {
      const VProduct vp(setup.op, setup.noise);
      LocalizedBasis lb = basis_by_localized_minimization(vp, ms, config.localization_radius);
      for (const auto& w : lb.warnings) {
        log_message(LogLevel::Warn, w);
        warnings.push_back(w);
      }
      for (Index i : lb.fallbacks) fallbacks.push_back(i);
      basis = std::move(lb.basis);
      break;
    }
  }
  timings["basis"] = seconds_since(t0);

  t0 = Clock::now();
  const VarianceField var = posterior_variance(gamma, ms, theta);
  timings["variance"] = seconds_since(t0);

  std::ostringstream basis_csv, var_csv, theta_csv;
  write_nodal_csv(basis_csv, setup.mesh, basis.phi, "phi");
  write_variance_csv(var_csv, setup.mesh, var.sigma2, var.nodes);
  write_matrix_csv(theta_csv, theta.values);
  write_text(out_dir / "basis.csv", with_hash(config.hash, basis_csv.str()));
  write_text(out_dir / "variance.csv", with_hash(config.hash, var_csv.str()));
  write_text(out_dir / "theta.csv", with_hash(config.hash, theta_csv.str()));

  static const char* method_names[] = {"conditioning", "variational", "localized"};
  json manifest;
  manifest["config_hash"] = config.hash;
  manifest["config"] = json::parse(config.canonical);
  manifest["command"] = "build-basis";
  manifest["method"] = method_names[static_cast<int>(config.method)];
  manifest["nodes"] = setup.mesh.num_nodes();
  manifest["measurements"] = ms.size();
  manifest["theta"] = {{"asymmetry", theta.asymmetry},
                       {"min_eigenvalue", theta.min_eigenvalue},
                       {"max_eigenvalue", theta.max_eigenvalue}};
  manifest["variance_min_relative_raw"] = var.min_raw;
  if (config.method == MethodKind::Variational) manifest["constraint_residual"] = constraint_residual;
  manifest["tolerances"] = {{"theta_symmetry", 1e-12},
                            {"kkt_constraint_residual", 1e-8},
                            {"variance_negative_relative", 1e-10}};
  manifest["warnings"] = warnings;
  manifest["fallbacks"] = fallbacks;
  manifest["outputs"] = {"basis.csv", "variance.csv", "theta.csv"};
  timings["total"] = seconds_since(t_start);
  manifest["timings_seconds"] = timings;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  log_message(LogLevel::Info, "wrote basis, variance, theta and manifest to " + out_dir.string());
  return kExitOk;
}

int cmd_verify(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const Setup setup = build_setup(config);
  if (config.study.kind != StudyKind::Scaling) measurements_of(setup);
  std::filesystem::create_directories(out_dir);
  const VerifyReport rep = run_verify_suites(config, setup);

  json j = json::parse(to_json(rep.errors));
  j["config_hash"] = config.hash;
  j["passed"] = rep.passed();
  j["failed"] = rep.failed();
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}});
  j["checks"] = checks;
  if (rep.oracle_json) j["oracle"] = json::parse(*rep.oracle_json);
  write_text(out_dir / "verify.json", j.dump(2) + "\n");

  if (!rep.passed()) {
    std::string names;
    for (const auto& f : rep.failed()) names += (names.empty() ? "" : ", ") + f;
    log_message(LogLevel::Error, "verification failed: " + names);
    return kExitVerification;
  }
  log_message(LogLevel::Info, "all " + std::to_string(rep.checks.size()) + " checks passed");
  return kExitOk;
}

int cmd_study(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.study.kind != StudyKind::Scaling)
    throw ConfigError("study.kind", "the study command needs study.kind = \"scaling\" with at least 3 levels");
  build_setup(config);  // validates coefficient and mesh before the long run
  std::filesystem::create_directories(out_dir);
  const ScalingResult sr = scaling_study(scaling_config(config));

  std::ostringstream csv;
  csv << "H,rho,energy_error,measurements\n";
  for (const auto& l : sr.levels)
    csv << format_double(l.H) << ',' << format_double(l.rho) << ',' << format_double(l.energy_error) << ','
        << l.measurements << '\n';
  write_text(out_dir / "study.csv", with_hash(config.hash, csv.str()));

  json j;
  j["config_hash"] = config.hash;
  j["slope"] = sr.slope;
  j["energy_slope"] = sr.energy_slope;
  j["constant"] = sr.constant;
  j["normalized_constant"] = sr.normalized_constant;
  j["window"] = {0.8, 1.2};
  j["within_window"] = sr.slope >= 0.8 && sr.slope <= 1.2;
  j["levels"] = levels_json(sr.levels);
  write_text(out_dir / "slopes.json", j.dump(2) + "\n");
  log_message(LogLevel::Info, "scaling slope " + format_double(sr.slope));
  return kExitOk;
}

}  // namespace bayeshom
