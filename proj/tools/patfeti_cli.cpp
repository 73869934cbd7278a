#include "patfeti/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

// Model construction failures mean the experiment file describes a bad
// structure; everything else comes out of the solve itself.
int exit_code_for(patfeti::Errc code) {
  using patfeti::Errc;
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidGeometry:
    case Errc::InterfaceMismatch:
    case Errc::NotElastic:
    case Errc::NodeNotFound:
    case Errc::InvalidTopology:
    case Errc::SingularGlobalMatrix: return 1;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pattern-based FETI solvers"};
  app.require_subcommand(1);
  auto* solve = app.add_subcommand("solve", "run the engines on one experiment");
  std::string config_path;
  std::string methods;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  solve->add_option("--config", config_path, "JSON experiment file")->required();
  solve->add_option("--method", methods, "comma separated: classical,mrhs,multivector");
  solve->add_option("--tol", tol, "relative residual tolerance");
  solve->add_option("--seed", seed, "load seed");
  solve->add_option("--out", out, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  patfeti::ExperimentConfig config;
  try {
    config = patfeti::load_config(config_path);
    if (!methods.empty()) {
      config.methods.clear();
      std::stringstream ss(methods);
      for (std::string m; std::getline(ss, m, ',');)
        if (!m.empty()) config.methods.push_back(m);
    }
    if (tol) config.tol = *tol;
    if (seed) config.seed = *seed;
    if (out) config.output = *out;
    patfeti::validate(config);
  } catch (const patfeti::Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }

  try {
    const patfeti::ExperimentReport report = patfeti::run_experiment(config, std::cout);
    if (!config.output.empty()) std::cout << "wrote " << config.output << "/summary.txt\n";
    return report.exit_code;
  } catch (const patfeti::Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e.code());
  }
}
