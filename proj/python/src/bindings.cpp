#include <filesystem>
#include <optional>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bayeshom/analysis.hpp"
#include "bayeshom/experiment.hpp"
#include "bayeshom/oracle.hpp"
#include "bayeshom/parallel.hpp"
#include "bayeshom/posterior.hpp"
#include "bayeshom/variational.hpp"

namespace py = pybind11;
using namespace bayeshom;

namespace {

// Everything derived from one configuration, built once.
class Model {
 public:
  explicit Model(ExperimentConfig config)
      : config_(std::move(config)),
        setup_(build_setup(config_)),
        vp_(setup_.op, setup_.noise) {
    if (!setup_.measurements) throw ConfigError("measurements", "the model needs measurements");
    post_.emplace(build_posterior(setup_.op, setup_.noise, *setup_.measurements));
  }

  const Posterior& post() const { return *post_; }
  const Mesh& mesh() const { return setup_.mesh; }
  const MeasurementSet& measurements() const { return *setup_.measurements; }

  Matrix nodes() const {
    Matrix out(mesh().num_nodes(), mesh().dim());
    for (Index k = 0; k < out.rows(); ++k)
      for (int d = 0; d < mesh().dim(); ++d) out(k, d) = mesh().node(k)[static_cast<std::size_t>(d)];
    return out;
  }

  Vector variance() const { return posterior_variance(post().gamma, measurements(), post().theta).sigma2; }

  Vector check_size(const Vector& v) const {
    if (v.size() != mesh().num_nodes()) throw InvalidArgument("expected a nodal vector of length " + std::to_string(mesh().num_nodes()));
    return v;
  }

  const ExperimentConfig config_;
  const Setup setup_;
  const VProduct vp_;

 private:
  std::optional<Posterior> post_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gaussian-conditioning basis functions for rough elliptic operators";

  // translators run newest first, so the base class goes in before ConfigError
  auto invalid = py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", invalid.ptr());
  py::register_exception<VerificationError>(m, "VerificationError", PyExc_RuntimeError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.attr("EXIT_OK") = kExitOk;
  m.attr("EXIT_VERIFICATION") = kExitVerification;
  m.attr("EXIT_CONFIG") = kExitConfig;
  m.attr("EXIT_INTERNAL") = kExitInternal;

  m.def("set_threads", &set_default_threads, py::arg("threads"), "Worker count for parallel loops (0 = all cores).");
  m.def("config_hash", [](const std::string& text) { return parse_config(text).hash; }, py::arg("config_json"));

  m.def(
      "build_basis",
      [](const std::string& text, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        return cmd_build_basis(parse_config(text), out);
      },
      py::arg("config_json"), py::arg("out_dir"), "Writes basis, variance and theta CSVs plus a manifest.");
  m.def(
      "verify",
      [](const std::string& text, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        return cmd_verify(parse_config(text), out);
      },
      py::arg("config_json"), py::arg("out_dir"), "Runs the property suites; returns the exit code.");
  m.def(
      "study",
      [](const std::string& text, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        return cmd_study(parse_config(text), out);
      },
      py::arg("config_json"), py::arg("out_dir"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& text) { return std::make_unique<Model>(parse_config(text)); }), py::arg("config_json"))
      .def_property_readonly("config_hash", [](const Model& s) { return s.config_.hash; })
      .def_property_readonly("dim", [](const Model& s) { return s.mesh().dim(); })
      .def_property_readonly("num_nodes", [](const Model& s) { return s.mesh().num_nodes(); })
      .def_property_readonly("num_measurements", [](const Model& s) { return s.measurements().size(); })
      .def_property_readonly("nodes", &Model::nodes)
      .def_property_readonly("weight", [](const Model& s) { return s.mesh().weight(); })
      .def_property_readonly("basis", [](const Model& s) { return s.post().basis.phi; })
      .def_property_readonly("theta", [](const Model& s) { return s.post().theta.values; })
      .def_property_readonly("variance", &Model::variance)
      .def_property_readonly("mesh_norm",
                             [](const Model& s) { return mesh_norm(s.mesh(), s.measurements().support_points(s.mesh())); })
      .def("variational_basis", [](const Model& s) { return basis_by_minimization(s.vp_, s.measurements()).basis.phi; })
      .def(
          "localized_basis",
          [](const Model& s, double radius) {
            LocalizedBasis lb = basis_by_localized_minimization(s.vp_, s.measurements(), radius);
            return py::make_tuple(lb.basis.phi, lb.fallbacks);
          },
          py::arg("radius"), "Returns (phi, indices that fell back to the global basis).")
      .def("observe", [](const Model& s, const Vector& u) { return s.measurements().observe(s.check_size(u)); }, py::arg("u"))
      .def("solve", [](const Model& s, const Vector& f) { return s.setup_.op.solve(s.check_size(f)); }, py::arg("f"))
      .def("apply", [](const Model& s, const Vector& u) { return s.setup_.op.apply(s.check_size(u)); }, py::arg("u"))
      .def("gamma_apply", [](const Model& s, const Vector& f) { return s.post().gamma.apply(s.check_size(f)); }, py::arg("f"))
      .def(
          "v_inner", [](const Model& s, const Vector& u, const Vector& v) { return s.vp_.inner(s.check_size(u), s.check_size(v)); },
          py::arg("u"), py::arg("v"))
      .def(
          "posterior_mean",
          [](const Model& s, const Vector& obs) { return posterior_mean(s.post().basis, obs); }, py::arg("observations"))
      .def("rho", [](const Model& s) { return estimate_rho_v0(s.vp_, s.measurements()).rho; })
      .def(
          "pointwise_max_ratio",
          [](const Model& s, int trials, std::uint64_t seed) {
            return check_pointwise_bound(s.post(), s.vp_, trials, seed, false).pointwise_max_ratio;
          },
          py::arg("trials") = 100, py::arg("seed") = 0)
      .def(
          "oracle",
          [](const Model& s, std::uint64_t seed, Index samples) {
            const OracleSummary o = run_oracle(s.post(), seed, samples);
            py::dict d;
            d["seed"] = o.seed;
            d["count"] = o.count;
            d["generator"] = o.generator;
            d["theta_frobenius_relerr"] = o.theta_frobenius_relerr;
            d["regression_pass_fraction"] = o.regression_pass_fraction;
            d["variance_pass_fraction"] = o.variance_pass_fraction;
            return d;
          },
          py::arg("seed"), py::arg("samples"));
}
