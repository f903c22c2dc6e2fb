// Command line front end: build-basis, verify, study.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bayeshom/experiment.hpp"
#include "bayeshom/parallel.hpp"

namespace {

int thread_count(int flag_value, bool flag_given) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("BAYESHOM_THREADS")) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw bayeshom::ConfigError("BAYESHOM_THREADS", std::string("not an integer: '") + env + "'");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian numerical homogenization: basis functions, verification and scaling studies"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int threads = 0;
  std::string log_level = "warn";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment configuration")->required();
    cmd->add_option("--out", out_dir, "output directory (defaults to outputs.dir or '.')");
    cmd->add_option("--threads", threads, "worker threads, 0 = hardware concurrency (env BAYESHOM_THREADS)");
    cmd->add_option("--log-level", log_level, "error, warn, info or debug");
  };
  CLI::App* build = app.add_subcommand("build-basis", "compute basis functions, posterior variance and Theta");
  CLI::App* verify = app.add_subcommand("verify", "run the property suites and write verify.json");
  CLI::App* study = app.add_subcommand("study", "run the mesh-norm scaling study");
  for (CLI::App* cmd : {build, verify, study}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bayeshom::kExitConfig;
  }

  try {
    bayeshom::set_log_level(bayeshom::parse_log_level(log_level));
    bool threads_given = false;
    for (CLI::App* cmd : {build, verify, study})
      if (cmd->parsed() && cmd->count("--threads") > 0) threads_given = true;
    const int k = thread_count(threads, threads_given);
    if (k < 0) throw bayeshom::ConfigError("--threads", "must be >= 0");
    bayeshom::set_default_threads(k);

    const bayeshom::ExperimentConfig config = bayeshom::load_config(config_path);
    const std::string dir = !out_dir.empty() ? out_dir : (!config.output_dir.empty() ? config.output_dir : ".");
    if (build->parsed()) return bayeshom::cmd_build_basis(config, dir);
    if (verify->parsed()) return bayeshom::cmd_verify(config, dir);
    return bayeshom::cmd_study(config, dir);
  } catch (const bayeshom::VerificationError& e) {
    std::cerr << "verification failed [" << e.invariant() << "]: " << e.what() << '\n';
    return bayeshom::kExitVerification;
  } catch (const bayeshom::InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return bayeshom::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return bayeshom::kExitInternal;
  }
}
