#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace patfeti;
using namespace patfeti::testing;

namespace {

std::string config_error_message(const std::string& json) {
  try {
    validate(parse_config(json));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
    return e.what();
  }
  return {};
}

ExperimentConfig small(ProblemKind kind, int n) {
  ExperimentConfig c = default_config(kind);
  c.n_repetitions = n;
  c.radial_divs = 4;
  c.angular_divs = 8;
  c.stand_segment_nodes = 3;
  c.interface_size = 6;
  c.output.clear();
  return c;
}

std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST(Config, ParsesNestedSections) {
  const ExperimentConfig c = parse_config(R"({
    "problem": "donut_two_stands", "n_repetitions": 7, "seed": 42, "load": "periodic",
    "geometry": {"r_outer": 3.0, "radial_divs": 6, "stand": {"height": 0.25}, "hosts": [2, 3]},
    "physics": {"kind": "plane_strain", "poisson": 0.25},
    "solver": {"methods": ["mrhs"], "preconditioner": "lumped", "tol": 1e-6, "reorthogonalize": false}
  })");
  EXPECT_EQ(c.problem, ProblemKind::DonutTwoStands);
  EXPECT_EQ(c.n_repetitions, 7);
  EXPECT_EQ(c.seed, 42U);
  EXPECT_TRUE(c.periodic_load);
  EXPECT_EQ(c.r_outer, 3.0);
  EXPECT_EQ(c.radial_divs, 6);
  EXPECT_EQ(c.stand_height, 0.25);
  EXPECT_EQ(c.stand_hosts, (std::vector<int>{2, 3}));
  EXPECT_TRUE(c.elastic);
  EXPECT_EQ(c.poisson, 0.25);
  EXPECT_EQ(c.methods, std::vector<std::string>{"mrhs"});
  EXPECT_EQ(c.precond, PrecondKind::Lumped);
  EXPECT_EQ(c.tol, 1e-6);
  EXPECT_EQ(c.reorthogonalize, false);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_error_message(R"({"problem":"thermal_donut","n_repetitions":2})").find("n_repetitions"),
            std::string::npos);
  EXPECT_NE(config_error_message(R"({"problem":"thermal_donut","geometry":{"radius":2}})").find("geometry.radius"),
            std::string::npos);
  EXPECT_NE(config_error_message(R"({"problem":"torus"})").find("problem"), std::string::npos);
  EXPECT_NE(config_error_message(R"({"problem":"thermal_donut","solver":{"tol":-1}})").find("solver.tol"),
            std::string::npos);
  EXPECT_NE(config_error_message(R"({"problem":"thermal_donut","solver":{"methods":["gmres"]}})").find("solver.methods"),
            std::string::npos);
  EXPECT_NE(config_error_message(R"({"problem":"thermal_donut","seed":"x"})").find("seed"), std::string::npos);
  EXPECT_NE(config_error_message("{not json").find("config"), std::string::npos);
}

TEST(Config, ProblemDefaults) {
  EXPECT_EQ(default_config(ProblemKind::ThermalDonut).r_outer, 8.0);
  EXPECT_EQ(default_config(ProblemKind::ElasticDonut).poisson, 0.495);
  EXPECT_EQ(default_config(ProblemKind::HingedElasticDonut).r_outer, 4.0);
  ExperimentConfig syn = default_config(ProblemKind::SyntheticSpd);
  EXPECT_EQ(synthetic_lambda_min(syn), 1e-3);
  syn.synthetic_stands = 1;
  EXPECT_EQ(synthetic_lambda_min(syn), 2e-4);
}

TEST(Oracle, UniformOuterHeatingIsRotationSymmetric) {
  ExperimentConfig c = small(ProblemKind::ThermalDonut, 6);
  const Problem p = build_problem(c);
  const StructureModel& m = *p.model;
  const PatternStiffness& pat = m.pattern(0);
  LoadCase heat = p.loads;
  Vector f = Vector::Zero(pat.free_dofs());
  for (std::size_t v = 0; v < pat.mesh.nodes.size(); ++v)
    if ((pat.mesh.tags[v] & kTagOuterArc) && pat.node_dof[v] >= 0) f(pat.node_dof[v]) = 1.0;
  for (auto& fo : heat.forces) fo = f;
  const OracleSolution sol = oracle_direct_solve(m, heat);
  for (int o = 1; o < m.n_occurrences(); ++o)
    EXPECT_LE((sol.u[static_cast<std::size_t>(o)] - sol.u[0]).cwiseAbs().maxCoeff(), 1e-10 * sol.u[0].cwiseAbs().maxCoeff());
}

TEST(Oracle, HingedDonutIsNonsingular) {
  const Problem p = build_problem(small(ProblemKind::HingedElasticDonut, 5));
  EXPECT_NO_THROW((void)oracle_direct_solve(*p.model, p.loads));
}

TEST(Oracle, FloatingStructureIsSingular) {
  const StructureModel m = make_ring(small_sector(5, Physics::thermal(), false), 5);
  try {
    (void)oracle_direct_solve(m, random_load(m, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularGlobalMatrix);
  }
}

TEST(Oracle, MatchesDenseAssembly) {
  const Problem p = build_problem(small(ProblemKind::DonutOneStand, 5));
  const StructureModel& m = *p.model;
  const OracleSolution sol = oracle_direct_solve(m, p.loads);
  // Residual of each subdomain equation with the interface reactions
  // eliminated: the global u must be continuous and balance the loads.
  std::vector<Vector> local;
  for (int o = 0; o < m.n_occurrences(); ++o)
    local.push_back(to_pattern_frame(m, o, sol.u[static_cast<std::size_t>(o)]));
  EXPECT_LE(interface_jump(m, local).norm(), 1e-12 * sol.u[0].norm());
  Vector f_sum = Vector::Zero(m.n_global_nodes() * m.dofs_per_node());
  for (int o = 0; o < m.n_occurrences(); ++o) {
    const PatternStiffness& pat = m.pattern(m.occurrences()[static_cast<std::size_t>(o)].pattern);
    const Vector r = to_structure_frame(m, o, pat.stiffness * local[static_cast<std::size_t>(o)] -
                                                  p.loads.forces[static_cast<std::size_t>(o)]);
    const auto& gn = m.global_nodes()[static_cast<std::size_t>(o)];
    for (std::size_t v = 0; v < gn.size(); ++v)
      if (pat.node_dof[v] >= 0)
        for (int d = 0; d < m.dofs_per_node(); ++d) f_sum(gn[v] * m.dofs_per_node() + d) += r(pat.node_dof[v] + d);
  }
  EXPECT_LE(f_sum.norm(), 1e-10);
}

TEST(Experiment, AllProblemsPassTheOracle) {
  for (ProblemKind kind : {ProblemKind::ThermalDonut, ProblemKind::ElasticDonut, ProblemKind::DonutOneStand,
                           ProblemKind::DonutTwoStands, ProblemKind::HingedElasticDonut, ProblemKind::SyntheticSpd}) {
    std::ostringstream log;
    const ExperimentReport r = run_experiment(small(kind, 5), log);
    EXPECT_EQ(r.exit_code, 0) << to_string(kind) << "\n" << log.str();
    EXPECT_EQ(r.outcomes.size(), 3U);
  }
}

TEST(Experiment, NonConvergenceExitCode) {
  ExperimentConfig c = small(ProblemKind::ElasticDonut, 5);
  c.max_iter = 1;
  std::ostringstream log;
  EXPECT_EQ(run_experiment(c, log).exit_code, 2);
}

TEST(Experiment, CsvIsDeterministic) {
  const auto dir = std::filesystem::temp_directory_path() / "patfeti_csv_test";
  std::string first;
  for (int run = 0; run < 2; ++run) {
    ExperimentConfig c = small(ProblemKind::HingedElasticDonut, 5);
    c.output = (dir / std::to_string(run)).string();
    std::ostringstream log;
    ASSERT_EQ(run_experiment(c, log).exit_code, 0);
    std::ifstream in(dir / std::to_string(run) / "multivector.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string csv = ss.str();
    EXPECT_EQ(csv.rfind("iter,residual_norm,active_directions,cum_local_solve_batches,wall_ms\n", 0), 0U);
    EXPECT_TRUE(std::filesystem::exists(dir / std::to_string(run) / "summary.txt"));
    if (run == 0) first = strip_wall_time(csv);
    else EXPECT_EQ(strip_wall_time(csv), first);
  }
  std::filesystem::remove_all(dir);
}
