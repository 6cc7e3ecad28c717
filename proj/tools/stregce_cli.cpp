// stregce: simulate experiments, solve a dataset CSV, or generate one.

#include "stregce/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace stregce;

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw ConfigError("not a number list: " + s);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

int run_simulate(const std::string& config_path, const std::string& out_dir, std::size_t jobs,
                 std::optional<std::uint64_t> seed, bool std_flag, bool no_timing) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (jobs) cfg.jobs = jobs;
  if (no_timing) cfg.record_timing = false;
  for (auto& sc : cfg.scenarios) {
    if (seed) sc.seed = *seed;
    if (std_flag) sc.simulation.standardize = true;
  }
  const ExperimentResult res = run_experiment(cfg);
  write_experiment_outputs(res, cfg.output_dir, cfg.record_timing);
  std::cerr << res.reports.size() << " replications, " << res.failed << " failed, output in " << cfg.output_dir << '\n';
  for (const auto& r : res.reports)
    if (!r.error.empty()) std::cerr << "  " << r.scenario << " n=" << r.n << " seed=" << r.seed << ": " << r.error << '\n';
  return res.exit_code();
}

int run_solve(const std::string& input, const std::string& mode, std::size_t block_size, double batch_fraction,
              bool std_flag, const std::string& beta_support, const std::string& error_support, bool literal_rmse,
              bool as_json) {
  SolveOptions opt;
  if (mode == "gce") opt.mode = SolveMode::kGce;
  else if (mode == "stre") opt.mode = SolveMode::kStream;
  else opt.mode = SolveMode::kBlock;
  opt.block_size = block_size;
  opt.batch_fraction = batch_fraction;
  opt.standardize = std_flag;
  opt.estimator.rmse_intercept = !literal_rmse;
  try {
    if (!beta_support.empty()) opt.estimator.beta_support = parse_list(beta_support);
    if (!error_support.empty()) opt.estimator.error_support = parse_list(error_support);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  Dataset d;
  try {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot read " + input);
    d = read_dataset_csv(in);
  } catch (const Error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  }

  SolveReport rep;
  try {
    rep = solve_dataset(d, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "solve failed: " << e.what() << '\n';
    return 2;
  }

  if (as_json) {
    std::cout << solve_report_json(rep).dump(2) << '\n';
  } else {
    std::cout << "mode " << mode_name(rep.mode) << ", n " << rep.n << ", batch " << rep.batch_size << ", block "
              << rep.block_size << '\n';
    const auto J = d.x.cols();
    for (Eigen::Index j = 0; j < rep.fit.coef.size(); ++j)
      std::cout << (j < J ? "beta" + std::to_string(j + 1) : std::string("intercept")) << ' '
                << format_double(rep.fit.coef[j]) << '\n';
    std::cout << "rmse " << format_double(rep.fit.rmse) << '\n';
    std::cout << "converged " << (rep.fit.converged ? "true" : "false") << '\n';
    if (!rep.fit.entropy_ledger.empty()) {
      std::cout << "entropy_ledger";
      for (double v : rep.fit.entropy_ledger) std::cout << ' ' << format_double(v);
      std::cout << '\n';
    }
    for (const auto& s : rep.fit.skipped) std::cout << "skipped " << s.first << '+' << s.count << ": " << s.reason << '\n';
  }
  return rep.fit.converged ? 0 : 2;
}

int run_gen(std::size_t n, std::uint64_t seed, double eta, double noise_sd, const std::string& out) {
  SimulationConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.eta = eta;
  cfg.noise_sd = noise_sd;
  Dataset d;
  try {
    d = generate_dataset(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  if (out.empty() || out == "-") {
    write_dataset_csv(std::cout, d);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) {
      std::cerr << "cannot write " << out << '\n';
      return 1;
    }
    write_dataset_csv(f, d);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GCE and streaming GCE regression"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "run a Monte-Carlo experiment from a JSON config");
  std::string config_path, out_dir;
  std::size_t jobs = 0;
  std::optional<std::uint64_t> seed;
  bool std_flag = false, no_timing = false;
  sim->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out_dir, "output directory (overrides output_dir)");
  sim->add_option("--jobs", jobs, "worker threads (overrides jobs)")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "seed base for every scenario");
  sim->add_flag("--std", std_flag, "also run the standardized streaming variant");
  sim->add_flag("--no-timing", no_timing, "write zero wallclock times so reports are byte-reproducible");

  auto* solve = app.add_subcommand("solve", "estimate coefficients for a dataset CSV");
  std::string input, mode = "gce", beta_support, error_support;
  std::size_t block_size = 1;
  double batch_fraction = 0.5;
  bool solve_std = false, literal_rmse = false, as_json = false;
  solve->add_option("--input", input, "CSV with header y,x1..xJ")->required();
  solve->add_option("--mode", mode, "gce | stre | block")->check(CLI::IsMember({"gce", "stre", "block"}));
  solve->add_option("--block-size", block_size, "observations per block (block mode)")->check(CLI::PositiveNumber);
  solve->add_option("--batch-fraction", batch_fraction, "share of rows in the initial batch")
      ->check(CLI::Range(0.0, 1.0));
  solve->add_flag("--std", solve_std, "standardize regressors before streaming");
  solve->add_option("--beta-support", beta_support, "comma-separated coefficient support");
  solve->add_option("--error-support", error_support, "comma-separated error support (default 3-sigma)");
  solve->add_flag("--no-intercept-rmse", literal_rmse, "leave the intercept out of rmse predictions");
  solve->add_flag("--json", as_json, "print the report as JSON");

  auto* gen = app.add_subcommand("gen", "write a simulated dataset CSV");
  std::size_t n = 60;
  std::uint64_t gen_seed = 1;
  double eta = 0.0, noise_sd = 1.0;
  std::string gen_out;
  gen->add_option("--n", n, "sample size");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--eta", eta, "multicollinearity degree")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise-sd", noise_sd, "error standard deviation");
  gen->add_option("--out", gen_out, "output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim) return run_simulate(config_path, out_dir, jobs, seed, std_flag, no_timing);
    if (*solve) return run_solve(input, mode, block_size, batch_fraction, solve_std, beta_support, error_support,
                                 literal_rmse, as_json);
    return run_gen(n, gen_seed, eta, noise_sd, gen_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
