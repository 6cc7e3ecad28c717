#ifndef STREGCE_METRICS_HPP
#define STREGCE_METRICS_HPP

#include "stregce/core.hpp"
#include "stregce/simulation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace stregce {

/// sqrt(mean((y - yhat)^2)). beta_hat holds J slopes, optionally followed by
/// an intercept; the intercept enters yhat only when include_intercept is set.
inline double rmse(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta_hat,
                   bool include_intercept = true) {
  if (x.rows() != y.size()) throw DimensionError("rmse: x rows must match y");
  if (y.size() == 0) throw DimensionError("rmse: empty data");
  const Eigen::Index J = x.cols();
  if (beta_hat.size() != J && beta_hat.size() != J + 1) throw DimensionError("rmse: coefficient length mismatch");
  Eigen::VectorXd yhat = x * beta_hat.head(J);
  if (include_intercept && beta_hat.size() == J + 1) yhat.array() += beta_hat[J];
  return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

/// (rmse_stre - rmse_gce) / rmse_gce.
inline double relative_gap(double rmse_stre, double rmse_gce) {
  if (!(rmse_gce != 0.0)) throw DimensionError("relative_gap: zero reference rmse");
  return (rmse_stre - rmse_gce) / rmse_gce;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace method {
inline constexpr const char* kGceDataset = "gce_dataset";
inline constexpr const char* kGceBatch = "gce_batch";
inline constexpr const char* kStreGce = "stre_gce";
inline constexpr const char* kStreGceStd = "stre_gce_std";
inline constexpr const char* kBlockStreGce = "block_stre_gce";
}  // namespace method

/// One estimator evaluated on one dataset. Non-streaming methods carry g = 0;
/// gce_dataset carries batch_fraction = 1.
struct MethodResult {
  std::string method;
  double batch_fraction = 1.0;
  std::size_t g = 0;
  double rmse = 0.0;
  double wallclock_ms = 0.0;
  bool converged = true;
};

/// All methods run on one (scenario, n, eta, seed) dataset.
struct RunReport {
  std::string scenario;
  std::size_t n = 0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::vector<MethodResult> methods;
  double task_ms = 0.0;
  std::string error;  // non-empty when the replication failed

  const MethodResult* find(const std::string& name, double batch_fraction = 1.0, std::size_t g = 0) const {
    for (const auto& m : methods)
      if (m.method == name && m.batch_fraction == batch_fraction && m.g == g) return &m;
    return nullptr;
  }
};

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"n",       "batch_fraction", "g",         "eta",      "method",
                                             "rmse",    "seed",           "wallclock_ms", "converged", "scenario"};
  return cols;
}

namespace detail {

inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline void join(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  detail::join(out, report_columns());
  for (const auto& r : reports)
    for (const auto& m : r.methods)
      detail::join(out, {std::to_string(r.n), format_double(m.batch_fraction), std::to_string(m.g),
                         format_double(r.eta), m.method, format_double(m.rmse), std::to_string(r.seed),
                         detail::fixed3(m.wallclock_ms), m.converged ? "true" : "false", r.scenario});
}

inline nlohmann::ordered_json report_json(const std::vector<RunReport>& reports) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : reports)
    for (const auto& m : r.methods) {
      nlohmann::ordered_json row;
      row["n"] = r.n;
      row["batch_fraction"] = m.batch_fraction;
      row["g"] = m.g;
      row["eta"] = r.eta;
      row["method"] = m.method;
      row["rmse"] = m.rmse;
      row["seed"] = r.seed;
      row["wallclock_ms"] = std::round(m.wallclock_ms * 1000.0) / 1000.0;
      row["converged"] = m.converged;
      row["scenario"] = r.scenario;
      rows.push_back(std::move(row));
    }
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation over replications
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string scenario;
  std::size_t n = 0;
  double eta = 0.0;
  std::string method;
  double batch_fraction = 1.0;
  std::size_t g = 0;
  std::size_t count = 0;
  double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
  /// Mean rmse of gce_dataset over the same replications.
  double mean_gce_dataset = 0.0;
  bool all_converged = true;
};

/// Groups by (scenario, n, eta, method, batch_fraction, g), in that order.
inline std::vector<SummaryRow> aggregate(const std::vector<RunReport>& reports) {
  using Key = std::tuple<std::string, std::size_t, double, std::string, double, std::size_t>;
  struct Acc {
    std::vector<double> v;
    double ref_sum = 0.0;
    std::size_t ref_count = 0;
    bool conv = true;
  };
  std::map<Key, Acc> groups;
  for (const auto& r : reports) {
    if (!r.error.empty()) continue;
    const MethodResult* ref = r.find(method::kGceDataset);
    for (const auto& m : r.methods) {
      auto& a = groups[Key{r.scenario, r.n, r.eta, m.method, m.batch_fraction, m.g}];
      a.v.push_back(m.rmse);
      a.conv = a.conv && m.converged;
      if (ref) {
        a.ref_sum += ref->rmse;
        ++a.ref_count;
      }
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& [k, a] : groups) {
    SummaryRow s;
    std::tie(s.scenario, s.n, s.eta, s.method, s.batch_fraction, s.g) = k;
    s.count = a.v.size();
    double sum = 0.0;
    for (double x : a.v) sum += x;
    s.mean = sum / static_cast<double>(s.count);
    double ss = 0.0;
    for (double x : a.v) ss += (x - s.mean) * (x - s.mean);
    s.sd = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
    s.min = *std::min_element(a.v.begin(), a.v.end());
    s.max = *std::max_element(a.v.begin(), a.v.end());
    s.mean_gce_dataset = a.ref_count ? a.ref_sum / static_cast<double>(a.ref_count) : 0.0;
    s.all_converged = a.conv;
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  detail::join(out, {"scenario", "n", "eta", "method", "batch_fraction", "g", "count", "mean_rmse", "sd_rmse",
                     "min_rmse", "max_rmse", "mean_rmse_gce_dataset", "all_converged"});
  for (const auto& s : rows)
    detail::join(out, {s.scenario, std::to_string(s.n), format_double(s.eta), s.method, format_double(s.batch_fraction),
                       std::to_string(s.g), std::to_string(s.count), format_double(s.mean), format_double(s.sd),
                       format_double(s.min), format_double(s.max), format_double(s.mean_gce_dataset),
                       s.all_converged ? "true" : "false"});
}

inline nlohmann::ordered_json summary_json(const std::vector<SummaryRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : rows)
    arr.push_back({{"scenario", s.scenario},
                   {"n", s.n},
                   {"eta", s.eta},
                   {"method", s.method},
                   {"batch_fraction", s.batch_fraction},
                   {"g", s.g},
                   {"count", s.count},
                   {"mean_rmse", s.mean},
                   {"sd_rmse", s.sd},
                   {"min_rmse", s.min},
                   {"max_rmse", s.max},
                   {"mean_rmse_gce_dataset", s.mean_gce_dataset},
                   {"all_converged", s.all_converged}});
  return arr;
}

/// Relative gap of each streaming method against full-dataset GCE, as a
/// function of batch fraction (one line per scenario/n/eta/method/g).
inline void write_gap_series_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  detail::join(out, {"scenario", "n", "eta", "method", "g", "batch_fraction", "mean_rmse", "mean_rmse_gce_dataset",
                     "relative_gap"});
  for (const auto& s : rows) {
    if (s.method == method::kGceDataset || s.mean_gce_dataset == 0.0) continue;
    detail::join(out, {s.scenario, std::to_string(s.n), format_double(s.eta), s.method, std::to_string(s.g),
                       format_double(s.batch_fraction), format_double(s.mean), format_double(s.mean_gce_dataset),
                       format_double(relative_gap(s.mean, s.mean_gce_dataset))});
  }
}

/// Mean rmse against sample size, one line per scenario/eta/method/fraction/g.
inline void write_size_series_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::vector<const SummaryRow*> sorted;
  for (const auto& s : rows) sorted.push_back(&s);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SummaryRow* a, const SummaryRow* b) {
    return std::tie(a->scenario, a->eta, a->method, a->batch_fraction, a->g, a->n) <
           std::tie(b->scenario, b->eta, b->method, b->batch_fraction, b->g, b->n);
  });
  detail::join(out, {"scenario", "eta", "method", "batch_fraction", "g", "n", "mean_rmse"});
  for (const auto* s : sorted)
    detail::join(out, {s->scenario, format_double(s->eta), s->method, format_double(s->batch_fraction),
                       std::to_string(s->g), std::to_string(s->n), format_double(s->mean)});
}

}  // namespace stregce

#endif  // STREGCE_METRICS_HPP
