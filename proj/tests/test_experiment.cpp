#include "stregce/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace stregce;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stregce_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string config_error(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSmall = R"({
  "jobs": 3,
  "record_timing": false,
  "scenarios": [
    {"name": "a", "n": [40, 60], "eta": [0, 0.5], "replications": 2, "seed": 10,
     "batch_fractions": [0.5], "block_sizes": [5], "standardize": true},
    {"name": "b", "n": 30, "replications": 2, "seed": 3, "batch_fractions": [0.25, 0.75]}
  ]
})";

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = parse_experiment_config(R"({"scenarios": [{}]})");
  ASSERT_EQ(cfg.scenarios.size(), 1u);
  const auto& sc = cfg.scenarios[0];
  EXPECT_EQ(sc.sizes, std::vector<std::size_t>{60});
  EXPECT_EQ(sc.batch_fractions, (std::vector<double>{0.25, 0.5, 0.75}));
  EXPECT_TRUE(sc.block_sizes.empty());
  EXPECT_EQ(sc.replications, 1u);
  EXPECT_EQ(sc.estimator.error_policy, ErrorSupportPolicy::kBatch);
  EXPECT_EQ(sc.estimator.update.gamma, 0.5);
  EXPECT_TRUE(cfg.record_timing);
}

TEST(Config, FieldsParsed) {
  const auto cfg = parse_experiment_config(R"({"output_dir": "o", "scenarios": [{
    "name": "x", "n": [60, 120], "eta": 0.2, "true_beta": [1, 2], "intercept": "known",
    "error_support": "cumulative", "gamma": 0.25, "rmse_intercept": false,
    "solver": {"tolerance": 1e-9, "max_iterations": 50, "ridge": 1e-8}}]})");
  const auto& sc = cfg.scenarios[0];
  EXPECT_EQ(cfg.output_dir, "o");
  EXPECT_EQ(sc.sizes, (std::vector<std::size_t>{60, 120}));
  EXPECT_EQ(sc.etas, std::vector<double>{0.2});
  EXPECT_EQ(sc.simulation.true_beta.size(), 2u);
  EXPECT_EQ(sc.estimator.intercept, InterceptMode::kKnown);
  EXPECT_EQ(sc.estimator.error_policy, ErrorSupportPolicy::kCumulative);
  EXPECT_EQ(sc.estimator.update.gamma, 0.25);
  EXPECT_FALSE(sc.estimator.rmse_intercept);
  EXPECT_EQ(sc.estimator.update.solver.max_iterations, 50);
  EXPECT_EQ(sc.estimator.update.solver.ridge, 1e-8);
}

TEST(Config, Errors) {
  EXPECT_NE(config_error(R"({"scenarios": []})").find("config.scenarios"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"bogus": 1}]})").find("config.scenarios[0].bogus: unknown key"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"solver": {"tol": 1}}]})").find("config.scenarios[0].solver.tol"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"replications": 0}]})").find("replications"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"n": "sixty"}]})").find("config.scenarios[0].n"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"batch_fractions": [1.5]}]})").find("batch_fractions"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"gamma": 1.0}]})").find("gamma"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"n": 2}]})").find("n must be"), std::string::npos);
  EXPECT_NE(config_error(R"({"scenarios": [{"intercept": "maybe"}]})").find("intercept"), std::string::npos);
  EXPECT_NE(config_error("{\n  \"scenarios\": [\n    {,}\n  ]\n}").find("line 3, column 6"), std::string::npos);
  EXPECT_NE(config_error(R"({"top": 1, "scenarios": [{}]})").find("config.top"), std::string::npos);
}

TEST(Experiment, OrderedAndComplete) {
  const auto cfg = parse_experiment_config(kSmall);
  const auto res = run_experiment(cfg);
  EXPECT_EQ(res.failed, 0u);
  ASSERT_EQ(res.reports.size(), 2u * 2 * 2 + 2u);
  EXPECT_EQ(res.reports[0].scenario, "a");
  EXPECT_EQ(res.reports[0].n, 40u);
  EXPECT_EQ(res.reports[0].seed, 10u);
  EXPECT_EQ(res.reports[1].seed, 11u);
  EXPECT_EQ(res.reports[2].eta, 0.5);
  EXPECT_EQ(res.reports.back().scenario, "b");
  std::set<std::string> names;
  for (const auto& m : res.reports[0].methods) names.insert(m.method);
  EXPECT_EQ(names, (std::set<std::string>{"gce_dataset", "gce_batch", "stre_gce", "block_stre_gce", "stre_gce_std"}));
  // Scenario b has no blocks and no standardization.
  names.clear();
  for (const auto& m : res.reports.back().methods) names.insert(m.method);
  EXPECT_EQ(names, (std::set<std::string>{"gce_dataset", "gce_batch", "stre_gce"}));
  EXPECT_EQ(res.reports.back().methods.size(), 1u + 2u * 2u);
  for (const auto& r : res.reports)
    for (const auto& m : r.methods) {
      EXPECT_GE(m.rmse, 0.0);
      EXPECT_EQ(m.wallclock_ms, 0.0);
    }
}

TEST(Experiment, ByteIdenticalReruns) {
  auto cfg = parse_experiment_config(kSmall);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  write_experiment_outputs(run_experiment(cfg), a, cfg.record_timing);
  cfg.jobs = 1;  // worker count must not matter either
  write_experiment_outputs(run_experiment(cfg), b, cfg.record_timing);
  for (const char* f : {"report.csv", "report.json", "summary.csv", "summary.json", "gap_vs_batch.csv", "rmse_vs_n.csv"}) {
    EXPECT_FALSE(slurp(a / f).empty()) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_FALSE(fs::exists(a / "timing.csv"));
  EXPECT_FALSE(fs::exists(a / "failures.csv"));
}

TEST(Experiment, ScenarioIsolation) {
  const auto both = parse_experiment_config(kSmall);
  auto only_b = both;
  only_b.scenarios.erase(only_b.scenarios.begin());
  const auto r_both = run_experiment(both), r_b = run_experiment(only_b);
  std::ostringstream sb, s_only;
  std::vector<RunReport> tail(r_both.reports.end() - 2, r_both.reports.end());
  write_report_csv(sb, tail);
  write_report_csv(s_only, r_b.reports);
  EXPECT_EQ(sb.str(), s_only.str());
}

TEST(Experiment, TimingAccountsForTaskTime) {
  auto cfg = parse_experiment_config(R"({"scenarios": [{"n": 480, "replications": 2, "block_sizes": [10, 40],
                                          "standardize": true}]})");
  const auto res = run_experiment(cfg);
  for (const auto& r : res.reports) {
    double sum = 0.0;
    for (const auto& m : r.methods) sum += m.wallclock_ms;
    EXPECT_GT(r.task_ms, 0.0);
    EXPECT_NEAR(sum, r.task_ms, 0.05 * r.task_ms);
  }
  const fs::path out = scratch("timing");
  write_experiment_outputs(res, out, true);
  EXPECT_TRUE(fs::exists(out / "timing.csv"));
}

TEST(Experiment, FailuresAreRecorded) {
  // A coefficient support that cannot reach the data makes every solve infeasible.
  auto cfg = parse_experiment_config(R"({"record_timing": false, "scenarios": [
    {"name": "bad", "beta_support": [-0.001, 0.001], "intercept_alpha": 1000},
    {"name": "good", "n": 30}]})");
  const auto res = run_experiment(cfg);
  EXPECT_EQ(res.failed, 1u);
  EXPECT_EQ(res.exit_code(), 2);
  EXPECT_FALSE(res.reports[0].error.empty());
  EXPECT_TRUE(res.reports[1].error.empty());
  const fs::path out = scratch("fail");
  write_experiment_outputs(res, out, false);
  EXPECT_NE(slurp(out / "failures.csv").find("bad,60"), std::string::npos);
}

TEST(Solve, CsvRoundTripMatchesInMemory) {
  SimulationConfig c;
  c.n = 80;
  c.seed = 12;
  const Dataset d = generate_dataset(c);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  for (SolveMode mode : {SolveMode::kGce, SolveMode::kStream, SolveMode::kBlock}) {
    SolveOptions o;
    o.mode = mode;
    o.block_size = 8;
    const auto a = solve_dataset(d, o), b = solve_dataset(back, o);
    EXPECT_TRUE((a.fit.coef.array() == b.fit.coef.array()).all());
    EXPECT_EQ(a.fit.rmse, b.fit.rmse);
  }
}

TEST(Solve, NoiselessRecovery) {
  SimulationConfig c;
  c.n = 200;
  c.noise_sd = 0.0;
  const Dataset d = generate_dataset(c);
  const auto rep = solve_dataset(d, {});
  ASSERT_TRUE(rep.fit.converged);
  const double truth[] = {1.0, -2.0, 3.0, 1.0};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(rep.fit.coef[j], truth[j], j < 3 ? 0.05 : 0.5);
}

TEST(Solve, SingleRowStreamEqualsGce) {
  Dataset d;
  d.y = Eigen::VectorXd::Constant(1, 7.5);
  d.x = Eigen::MatrixXd(1, 2);
  d.x << 2.0, -1.0;
  SolveOptions o;
  o.estimator.error_support = {-3, 0, 3};
  o.mode = SolveMode::kStream;
  o.batch_fraction = 1.0;
  const auto s = solve_dataset(d, o);
  o.mode = SolveMode::kGce;
  const auto g = solve_dataset(d, o);
  EXPECT_LE((s.fit.coef - g.fit.coef).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(s.fit.entropy_ledger.empty());

  o.estimator.error_support.clear();
  EXPECT_THROW(solve_dataset(d, o), DegenerateDataError);
}

TEST(Solve, StandardizedPathReportsRawScale) {
  SimulationConfig c;
  c.n = 240;
  const Dataset d = generate_dataset(c);
  SolveOptions o;
  o.mode = SolveMode::kStream;
  o.standardize = true;
  const auto rep = solve_dataset(d, o);
  ASSERT_EQ(rep.fit.coef.size(), 4);
  EXPECT_NEAR(rep.fit.rmse, rmse(d.y, d.x, rep.fit.coef), 0.0);
  EXPECT_LT(rep.fit.rmse, 3.0);
}

#ifdef STREGCE_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const int status = std::system((std::string("\"") + STREGCE_CLI_PATH + "\" " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  {
    std::ofstream(dir / "ok.json") << R"({"record_timing": false, "scenarios": [{"n": 30, "batch_fractions": [0.5]}]})";
    std::ofstream(dir / "bad.json") << R"({"scenarios": [{"nn": 30}]})";
    std::ofstream(dir / "partial.json")
        << R"({"scenarios": [{"name": "bad", "beta_support": [-0.001, 0.001], "intercept_alpha": 1000}, {"n": 30}]})";
  }
  EXPECT_EQ(run_cli("simulate --config " + (dir / "ok.json").string() + " --out " + (dir / "o1").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o1" / "report.csv"));
  EXPECT_EQ(run_cli("simulate --config " + (dir / "bad.json").string() + " --out " + (dir / "o2").string()), 1);
  EXPECT_EQ(run_cli("simulate --config " + (dir / "partial.json").string() + " --out " + (dir / "o3").string()), 2);
  EXPECT_EQ(run_cli("gen --n 40 --seed 5 --out " + (dir / "d.csv").string()), 0);
  EXPECT_EQ(run_cli("solve --input " + (dir / "d.csv").string() + " --mode block --block-size 4"), 0);
  EXPECT_EQ(run_cli("solve --input " + (dir / "missing.csv").string()), 1);
  EXPECT_EQ(run_cli("solve --input " + (dir / "d.csv").string() + " --mode nope"), 1);

  // Same config twice (with --no-timing) gives identical bytes.
  run_cli("simulate --no-timing --config " + (dir / "ok.json").string() + " --out " + (dir / "r1").string());
  run_cli("simulate --no-timing --jobs 2 --config " + (dir / "ok.json").string() + " --out " + (dir / "r2").string());
  EXPECT_EQ(slurp(dir / "r1" / "report.csv"), slurp(dir / "r2" / "report.csv"));
}
#endif
