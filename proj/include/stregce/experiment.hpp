#ifndef STREGCE_EXPERIMENT_HPP
#define STREGCE_EXPERIMENT_HPP

// Experiment orchestration behind the command-line tool: JSON configuration,
// the estimator pipeline applied to one dataset, replication fan-out over a
// worker pool, and report files.

#include "stregce/core.hpp"
#include "stregce/metrics.hpp"
#include "stregce/simulation.hpp"
#include "stregce/solver.hpp"
#include "stregce/streaming.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace stregce {

/// Where streaming error supports get their s_y from.
enum class ErrorSupportPolicy {
  kBatch,       // s_y of the initial batch, fixed for the stream
  kFullSample,  // s_y of the whole dataset
  kCumulative,  // batch rows use the batch s_y; row i afterwards uses y[0..i]
};

/// Everything needed to turn (y, x) into estimates.
struct EstimatorOptions {
  std::vector<double> beta_support{-100.0, -50.0, 0.0, 50.0, 100.0};
  std::size_t error_points = 3;
  /// Explicit error support row; overrides the 3-sigma construction.
  std::vector<double> error_support;
  InterceptMode intercept = InterceptMode::kEstimate;
  double intercept_alpha = 1.0;  // used when intercept == kKnown
  ErrorSupportPolicy error_policy = ErrorSupportPolicy::kBatch;
  /// Include the estimated intercept in rmse predictions.
  bool rmse_intercept = true;
  UpdateSettings update;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::vector<std::size_t> sizes{60};
  std::vector<double> etas{0.0};
  SimulationConfig simulation;
  std::vector<double> batch_fractions{0.25, 0.5, 0.75};
  std::vector<std::size_t> block_sizes;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  EstimatorOptions estimator;
};

struct ExperimentConfig {
  std::vector<ScenarioConfig> scenarios;
  std::string output_dir = "out";
  std::size_t jobs = 1;
  bool record_timing = true;
};

// ---------------------------------------------------------------------------
// Estimation on one dataset
// ---------------------------------------------------------------------------

struct Fit {
  /// Raw-scale coefficients: J slopes followed by the intercept (when
  /// estimated).
  Eigen::VectorXd coef;
  double rmse = 0.0;
  bool converged = true;
  double ms = 0.0;
  std::vector<double> entropy_ledger;
  std::vector<SkippedBlock> skipped;
};

namespace detail {

inline Eigen::MatrixXd replicate_row(const std::vector<double>& row, Eigen::Index rows) {
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(row.size()));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(r, k) = row[static_cast<std::size_t>(k)];
  return m;
}

inline std::vector<double> head_vector(const Eigen::VectorXd& y, std::size_t count) {
  return std::vector<double>(y.data(), y.data() + count);
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Response and design matrix as seen by the estimators.
struct FitData {
  Eigen::VectorXd y;       // y, or y - alpha with a known intercept
  Eigen::MatrixXd raw_x;   // n x J regressors
  Eigen::MatrixXd design;  // regressors, standardized if requested, plus ones column if estimated
  std::optional<Standardization> standardization;
  bool has_intercept = true;
};

inline FitData prepare_fit_data(const Dataset& d, const EstimatorOptions& opt, bool standardize) {
  FitData f;
  f.raw_x = d.x;
  f.y = d.y;
  f.has_intercept = opt.intercept == InterceptMode::kEstimate || standardize;
  if (opt.intercept == InterceptMode::kKnown) f.y.array() -= opt.intercept_alpha;
  Eigen::MatrixXd x = d.x;
  if (standardize) {
    f.standardization = standardize_columns(d.x);
    x = f.standardization->x;
  }
  f.design = design_matrix(x, f.has_intercept);
  return f;
}

inline Eigen::MatrixXd beta_support_matrix(const EstimatorOptions& opt, Eigen::Index params) {
  return detail::replicate_row(opt.beta_support, params);
}

/// n x H error support rows under the configured policy. batch_size is
/// ignored for the full-sample policy.
inline Eigen::MatrixXd error_support_rows(const Eigen::VectorXd& y, std::size_t batch_size, ErrorSupportPolicy policy,
                                          const EstimatorOptions& opt) {
  const Eigen::Index n = y.size();
  if (!opt.error_support.empty()) return detail::replicate_row(opt.error_support, n);
  switch (policy) {
    case ErrorSupportPolicy::kFullSample:
      return detail::replicate_row(build_error_support(y, opt.error_points), n);
    case ErrorSupportPolicy::kBatch:
      return detail::replicate_row(build_error_support(detail::head_vector(y, batch_size), opt.error_points), n);
    case ErrorSupportPolicy::kCumulative: {
      Eigen::MatrixXd rows = detail::replicate_row(build_error_support(detail::head_vector(y, batch_size), opt.error_points), n);
      for (Eigen::Index i = static_cast<Eigen::Index>(batch_size); i < n; ++i) {
        const auto row = build_error_support(detail::head_vector(y, static_cast<std::size_t>(i) + 1), opt.error_points);
        for (Eigen::Index h = 0; h < rows.cols(); ++h) rows(i, h) = row[static_cast<std::size_t>(h)];
      }
      return rows;
    }
  }
  throw ConfigError("unknown error support policy");
}

/// Internal coefficients -> raw-scale coefficients and rmse on the data.
inline void finish_fit(const FitData& data, const EstimatorOptions& opt, const Eigen::VectorXd& internal, Fit& fit) {
  fit.coef = data.standardization
                 ? destandardize_coefficients(internal, data.standardization->means, data.standardization->sds)
                 : internal;
  fit.rmse = rmse(data.y, data.raw_x, fit.coef, opt.rmse_intercept);
}

inline std::size_t batch_size_for(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("batch fraction must lie in (0, 1]");
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(m, 1, n);
}

/// GCE with uniform prior on the whole dataset (error support from the full sample).
inline Fit fit_gce(const Dataset& d, const EstimatorOptions& opt, bool standardize = false) {
  const auto t0 = std::chrono::steady_clock::now();
  const FitData data = prepare_fit_data(d, opt, standardize);
  const auto n = static_cast<std::size_t>(data.y.size());
  GceProblem problem(data.y, data.design,
                     SupportGrid(beta_support_matrix(opt, data.design.cols()),
                                 error_support_rows(data.y, n, ErrorSupportPolicy::kFullSample, opt)));
  const GceSolution sol = solve_gce(problem, opt.update.solver);
  Fit fit;
  fit.converged = sol.diagnostics.converged;
  finish_fit(data, opt, sol.beta_hat, fit);
  fit.ms = detail::ms_since(t0);
  return fit;
}

/// Streaming / block-streaming fit from a batch of batch_size rows.
inline Fit fit_stream(const Dataset& d, const EstimatorOptions& opt, std::size_t batch_size, std::size_t block_size,
                      bool standardize = false) {
  const auto t0 = std::chrono::steady_clock::now();
  const FitData data = prepare_fit_data(d, opt, standardize);
  const StreamReport rep = run_stream(data.y, data.design, beta_support_matrix(opt, data.design.cols()),
                                      error_support_rows(data.y, batch_size, opt.error_policy, opt), batch_size,
                                      block_size, opt.update, false);
  Fit fit;
  fit.converged = rep.converged;
  fit.entropy_ledger = rep.entropy_ledger;
  fit.skipped = rep.skipped;
  finish_fit(data, opt, rep.beta_hat, fit);
  fit.ms = detail::ms_since(t0);
  return fit;
}

/// Every configured method on one dataset.
inline RunReport run_replication(const ScenarioConfig& sc, std::size_t n, double eta, std::uint64_t seed,
                                 bool record_timing) {
  using clock = std::chrono::steady_clock;
  const auto t_task = clock::now();
  RunReport rep;
  rep.scenario = sc.name;
  rep.n = n;
  rep.eta = eta;
  rep.seed = seed;
  try {
    SimulationConfig cfg = sc.simulation;
    cfg.n = n;
    cfg.eta = eta;
    cfg.seed = seed;
    const Dataset d = generate_dataset(cfg);
    const EstimatorOptions& opt = sc.estimator;

    auto add = [&](std::string name, double frac, std::size_t g, double r, double ms, bool conv) {
      rep.methods.push_back({std::move(name), frac, g, r, record_timing ? ms : 0.0, conv});
    };

    const Fit full = fit_gce(d, opt);
    add(method::kGceDataset, 1.0, 0, full.rmse, full.ms, full.converged);

    const FitData data = prepare_fit_data(d, opt, false);
    const Eigen::MatrixXd beta_support = beta_support_matrix(opt, data.design.cols());
    for (double frac : sc.batch_fractions) {
      const std::size_t m = batch_size_for(frac, n);
      auto t0 = clock::now();
      const Eigen::MatrixXd err = error_support_rows(data.y, m, opt.error_policy, opt);
      const auto mi = static_cast<Eigen::Index>(m);
      const GceProblem batch(data.y.head(mi), data.design.topRows(mi), SupportGrid(beta_support, err.topRows(mi)));
      auto [state, batch_sol] = init_stream(batch, opt.update, false);
      Fit bfit;
      finish_fit(data, opt, batch_sol.beta_hat, bfit);
      add(method::kGceBatch, frac, 0, bfit.rmse, detail::ms_since(t0), batch_sol.diagnostics.converged);

      std::vector<std::size_t> blocks{1};
      for (auto g : sc.block_sizes)
        if (g > 1) blocks.push_back(g);
      for (auto g : blocks) {
        t0 = clock::now();
        const StreamReport sr = continue_stream(state, data.y, data.design, err, m, g, opt.update);
        Fit sfit;
        finish_fit(data, opt, sr.beta_hat, sfit);
        add(g == 1 ? method::kStreGce : method::kBlockStreGce, frac, g, sfit.rmse, detail::ms_since(t0), sr.converged);
      }
      if (cfg.standardize) {
        const Fit sfit = fit_stream(d, opt, m, 1, true);
        add(method::kStreGceStd, frac, 1, sfit.rmse, sfit.ms, sfit.converged);
      }
    }
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  rep.task_ms = record_timing ? detail::ms_since(t_task) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Configuration parsing
// ---------------------------------------------------------------------------

class ConfigParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace detail {

using json = nlohmann::json;

class FieldReader {
 public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigParseError(path + ": " + what);
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  /// Rejects keys that were never asked for.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) fail(path(it.key()), "unknown key");
  }

  double number(const std::string& key, double def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number()) fail(path(key), "expected a number");
    return v->get<double>();
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) fail(path(key), "expected a nonnegative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(path(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_string()) fail(path(key), "expected a string");
    return v->get<std::string>();
  }

  /// Accepts a number or an array of numbers.
  std::vector<double> numbers(const std::string& key, std::vector<double> def, bool scalar_ok = false) {
    const json* v = get(key);
    if (!v) return def;
    if (scalar_ok && v->is_number()) return {v->get<double>()};
    if (!v->is_array()) fail(path(key), scalar_ok ? "expected a number or an array of numbers" : "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(path(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def, bool scalar_ok = false) {
    const json* v = get(key);
    if (!v) return def;
    if (scalar_ok && v->is_number_unsigned()) return {v->get<std::size_t>()};
    if (!v->is_array()) fail(path(key), scalar_ok ? "expected an integer or an array of integers" : "expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_unsigned())
        fail(path(key) + "[" + std::to_string(i) + "]", "expected a nonnegative integer");
      out.push_back((*v)[i].get<std::size_t>());
    }
    return out;
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline ScenarioConfig parse_scenario(const json& node, const std::string& path) {
  FieldReader r(node, path);
  ScenarioConfig sc;
  SimulationConfig& sim = sc.simulation;
  EstimatorOptions& est = sc.estimator;
  sc.name = r.string("name", path);
  sc.sizes = r.counts("n", sc.sizes, true);
  sc.etas = r.numbers("eta", sc.etas, true);
  sim.true_beta = r.numbers("true_beta", sim.true_beta);
  sim.intercept_alpha = r.number("intercept_alpha", sim.intercept_alpha);
  sim.x_low = r.number("x_low", sim.x_low);
  sim.x_high = r.number("x_high", sim.x_high);
  sim.noise_sd = r.number("noise_sd", sim.noise_sd);
  sim.collinear_columns = r.counts("collinear_columns", {});
  sim.standardize = r.boolean("standardize", false);
  sim.beta_support = r.numbers("beta_support", sim.beta_support);
  sim.error_points = r.unsigned_int("error_points", sim.error_points);
  const std::string intercept = r.string("intercept", "estimate");
  if (intercept == "estimate") sim.intercept = InterceptMode::kEstimate;
  else if (intercept == "known") sim.intercept = InterceptMode::kKnown;
  else FieldReader::fail(r.path("intercept"), "expected \"estimate\" or \"known\"");
  sc.batch_fractions = r.numbers("batch_fractions", sc.batch_fractions);
  sc.block_sizes = r.counts("block_sizes", {});
  sc.replications = r.unsigned_int("replications", sc.replications);
  sc.seed = r.unsigned_int("seed", sc.seed);
  const std::string policy = r.string("error_support", "batch");
  if (policy == "batch") est.error_policy = ErrorSupportPolicy::kBatch;
  else if (policy == "full") est.error_policy = ErrorSupportPolicy::kFullSample;
  else if (policy == "cumulative") est.error_policy = ErrorSupportPolicy::kCumulative;
  else FieldReader::fail(r.path("error_support"), "expected \"batch\", \"full\" or \"cumulative\"");
  est.rmse_intercept = r.boolean("rmse_intercept", true);
  est.update.gamma = r.number("gamma", est.update.gamma);
  est.update.gamma_schedule = r.numbers("gamma_schedule", {});
  if (const json* s = r.get("solver")) {
    FieldReader sr(*s, r.path("solver"));
    est.update.solver.constraint_tolerance = sr.number("tolerance", est.update.solver.constraint_tolerance);
    est.update.solver.max_iterations = static_cast<int>(sr.unsigned_int("max_iterations", 500));
    est.update.solver.ridge = sr.number("ridge", est.update.solver.ridge);
    sr.finish();
  }
  r.finish();

  est.beta_support = sim.beta_support;
  est.error_points = sim.error_points;
  est.intercept = sim.intercept;
  est.intercept_alpha = sim.intercept_alpha;

  auto check = [&](bool ok, const std::string& key, const std::string& what) {
    if (!ok) FieldReader::fail(r.path(key), what);
  };
  check(!sc.sizes.empty(), "n", "needs at least one sample size");
  check(!sc.etas.empty(), "eta", "needs at least one value");
  check(sc.replications >= 1, "replications", "must be at least 1");
  check(!sc.batch_fractions.empty(), "batch_fractions", "needs at least one value");
  for (double f : sc.batch_fractions) check(f > 0.0 && f <= 1.0, "batch_fractions", "values must lie in (0, 1]");
  for (double e : sc.etas) check(e >= 0.0 && e <= 1.0, "eta", "values must lie in [0, 1]");
  for (auto g : sc.block_sizes) check(g >= 1, "block_sizes", "values must be at least 1");
  for (auto n : sc.sizes) {
    SimulationConfig probe = sim;
    probe.n = n;
    try {
      probe.validate();
    } catch (const ConfigError& e) {
      FieldReader::fail(path, e.what());
    }
  }
  try {
    est.update.validate();
  } catch (const ConfigError& e) {
    FieldReader::fail(r.path("gamma"), e.what());
  }
  return sc;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw ConfigParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
  detail::FieldReader r(root, "config");
  ExperimentConfig cfg;
  cfg.output_dir = r.string("output_dir", cfg.output_dir);
  cfg.jobs = r.unsigned_int("jobs", cfg.jobs);
  cfg.record_timing = r.boolean("record_timing", cfg.record_timing);
  const auto* scenarios = r.get("scenarios");
  if (!scenarios || !scenarios->is_array() || scenarios->empty())
    detail::FieldReader::fail("config.scenarios", "expected a nonempty array");
  for (std::size_t i = 0; i < scenarios->size(); ++i)
    cfg.scenarios.push_back(detail::parse_scenario((*scenarios)[i], "config.scenarios[" + std::to_string(i) + "]"));
  r.finish();
  if (cfg.jobs < 1) detail::FieldReader::fail("config.jobs", "must be at least 1");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigParseError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<RunReport> reports;  // ordered by scenario, n, eta, seed
  std::vector<SummaryRow> summary;
  std::size_t failed = 0;
  double elapsed_ms = 0.0;

  int exit_code() const { return failed ? 2 : 0; }
};

/// Runs every (scenario, n, eta, replication) task over `jobs` workers.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  struct Task {
    const ScenarioConfig* sc;
    std::size_t n;
    double eta;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& sc : cfg.scenarios)
    for (auto n : sc.sizes)
      for (double eta : sc.etas)
        for (std::size_t r = 0; r < sc.replications; ++r) tasks.push_back({&sc, n, eta, sc.seed + r});

  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult out;
  out.reports.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      const Task& t = tasks[i];
      out.reports[i] = run_replication(*t.sc, t.n, t.eta, t.seed, cfg.record_timing);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (const auto& r : out.reports)
    if (!r.error.empty()) ++out.failed;
  out.summary = aggregate(out.reports);
  out.elapsed_ms = detail::ms_since(t0);
  return out;
}

/// report.{csv,json}, summary.{csv,json}, gap_vs_batch.csv, rmse_vs_n.csv,
/// failures.csv (only with failures), timing.csv (only with timing on).
inline void write_experiment_outputs(const ExperimentResult& res, const std::filesystem::path& dir, bool record_timing) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("report.csv");
    write_report_csv(f, res.reports);
  }
  {
    auto f = open("report.json");
    f << report_json(res.reports).dump(2) << '\n';
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, res.summary);
  }
  {
    auto f = open("summary.json");
    f << summary_json(res.summary).dump(2) << '\n';
  }
  {
    auto f = open("gap_vs_batch.csv");
    write_gap_series_csv(f, res.summary);
  }
  {
    auto f = open("rmse_vs_n.csv");
    write_size_series_csv(f, res.summary);
  }
  if (res.failed) {
    auto f = open("failures.csv");
    f << "scenario,n,eta,seed,error\n";
    for (const auto& r : res.reports)
      if (!r.error.empty()) {
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        f << r.scenario << ',' << r.n << ',' << format_double(r.eta) << ',' << r.seed << ',' << msg << '\n';
      }
  }
  if (record_timing) {
    auto f = open("timing.csv");
    f << "scenario,n,eta,seed,task_ms,methods_ms\n";
    for (const auto& r : res.reports) {
      double sum = 0.0;
      for (const auto& m : r.methods) sum += m.wallclock_ms;
      f << r.scenario << ',' << r.n << ',' << format_double(r.eta) << ',' << r.seed << ',' << detail::fixed3(r.task_ms)
        << ',' << detail::fixed3(sum) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Single-dataset solve
// ---------------------------------------------------------------------------

enum class SolveMode { kGce, kStream, kBlock };

struct SolveOptions {
  SolveMode mode = SolveMode::kGce;
  double batch_fraction = 0.5;
  std::size_t block_size = 1;
  bool standardize = false;
  EstimatorOptions estimator;
};

struct SolveReport {
  SolveMode mode = SolveMode::kGce;
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::size_t block_size = 0;
  Fit fit;
};

inline SolveReport solve_dataset(const Dataset& d, const SolveOptions& opt) {
  SolveReport rep;
  rep.mode = opt.mode;
  rep.n = d.size();
  if (opt.mode == SolveMode::kGce) {
    rep.fit = fit_gce(d, opt.estimator, opt.standardize);
    rep.batch_size = d.size();
    return rep;
  }
  rep.batch_size = batch_size_for(opt.batch_fraction, d.size());
  rep.block_size = opt.mode == SolveMode::kStream ? 1 : opt.block_size;
  if (rep.block_size < 1) throw ConfigError("block size must be at least 1");
  rep.fit = fit_stream(d, opt.estimator, rep.batch_size, rep.block_size, opt.standardize);
  return rep;
}

inline const char* mode_name(SolveMode m) {
  switch (m) {
    case SolveMode::kGce: return "gce";
    case SolveMode::kStream: return "stre";
    case SolveMode::kBlock: return "block";
  }
  return "?";
}

inline nlohmann::ordered_json solve_report_json(const SolveReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(r.mode);
  j["n"] = r.n;
  j["batch_size"] = r.batch_size;
  j["block_size"] = r.block_size;
  j["coefficients"] = std::vector<double>(r.fit.coef.data(), r.fit.coef.data() + r.fit.coef.size());
  j["rmse"] = r.fit.rmse;
  j["converged"] = r.fit.converged;
  j["entropy_ledger"] = r.fit.entropy_ledger;
  auto skipped = nlohmann::ordered_json::array();
  for (const auto& s : r.fit.skipped) skipped.push_back({{"first", s.first}, {"count", s.count}, {"reason", s.reason}});
  j["skipped"] = std::move(skipped);
  return j;
}

}  // namespace stregce

#endif  // STREGCE_EXPERIMENT_HPP
