#pragma once

// Experiment driver: configuration, problem construction, the assembled
// direct-solve oracle, engine runs and output files.

#include "patfeti/loads.hpp"
#include "patfeti/solver.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace patfeti {

enum class ProblemKind { ThermalDonut, ElasticDonut, DonutOneStand, DonutTwoStands, HingedElasticDonut, SyntheticSpd };

std::string_view to_string(ProblemKind kind) noexcept;

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::ThermalDonut;
  int n_repetitions = 9;
  std::uint64_t seed = 1;
  bool periodic_load = false;

  // donut geometry; zero divisions select the physics-dependent defaults
  double r_inner = 1.0;
  double r_outer = 2.0;
  int radial_divs = 0;
  int angular_divs = 0;
  int stand_segment_nodes = 7;
  double stand_height = 0.5;
  int stand_width_divs = 0;  // 0: segment nodes − 1
  int stand_height_divs = 4;
  std::vector<int> stand_hosts;  // empty: default hosts

  // physics of the stand problems (the other donuts fix it by name)
  bool elastic = false;
  double young = 1.0;
  double poisson = 0.3;

  // synthetic patterns
  int interface_size = 20;
  std::optional<double> lambda_min;  // unset: 1e-3 on the ring, 2e-4 with stands
  double lambda_max = 1.0;
  std::uint64_t pattern_seed = 1;
  int synthetic_stands = 0;

  std::vector<std::string> methods{"classical", "mrhs", "multivector"};
  PrecondKind precond = PrecondKind::Dirichlet;
  PrecondKind coarse_precond = PrecondKind::Identity;
  double tol = 1e-8;
  int max_iter = 500;
  double rank_tol = kDefaultRankTol;
  std::optional<bool> reorthogonalize;
  std::string output = "out";
};

/// Defaults for one problem kind: the donut outer radius and the elastic
/// Poisson ratio depend on the benchmark.
[[nodiscard]] ExperimentConfig default_config(ProblemKind problem);

[[nodiscard]] double synthetic_lambda_min(const ExperimentConfig& config);

/// Parses the JSON configuration text; unknown keys and invalid values throw
/// Error{ConfigError} naming the offending field.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& config);

struct Problem {
  std::shared_ptr<const StructureModel> model;
  LoadCase loads;
};

[[nodiscard]] Problem build_problem(const ExperimentConfig& config);

/// Solution of the assembled global system, per occurrence in the
/// structure frame (free dofs of the occurrence's pattern).
struct OracleSolution {
  std::vector<Vector> u;
  Index global_dofs = 0;
};

/// Assembles K u = f over the merged global numbering and solves it with a
/// sparse LDLᵀ factorization. Throws SingularGlobalMatrix if the structure
/// is not held by its Dirichlet conditions.
[[nodiscard]] OracleSolution oracle_direct_solve(const StructureModel& model, const LoadCase& loads);

struct OracleCheck {
  double relative_error = 0.0;
  double jump = 0.0;
  double u_norm = 0.0;
  bool pass = false;
};

[[nodiscard]] OracleCheck check_against_oracle(const StructureModel& model, const OracleSolution& oracle,
                                               const std::vector<Vector>& u, double tol);

struct MethodOutcome {
  std::string method;
  bool converged = false;
  std::string error;
  ConvergenceRecord record;
  std::optional<OracleCheck> oracle;
};

struct ExperimentReport {
  std::vector<MethodOutcome> outcomes;
  int exit_code = 0;
};

/// Runs every configured engine, checks each against the oracle and writes
/// <output>/<method>.csv and <output>/summary.txt when output is nonempty.
/// Exit code: 0 all good, 2 non-convergence, 3 oracle failure.
[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream& log);

void write_csv(std::ostream& os, const ConvergenceRecord& record);
void write_summary(std::ostream& os, const ExperimentConfig& config, const StructureModel& model,
                   const ExperimentReport& report);

}  // namespace patfeti
