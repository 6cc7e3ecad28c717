#ifndef STREGCE_SIMULATION_HPP
#define STREGCE_SIMULATION_HPP

// Synthetic regression data: uniform regressors, optional shared collinearity
// factor, Gaussian noise, fixed intercept. Also support-grid helpers and the
// dataset CSV format (header "y,x1,...,xJ", one unit per line).

#include "stregce/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace stregce {

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// mt19937_64 seeded through splitmix64. Variates are produced by explicit
/// transforms (53-bit uniform, Box-Muller) so streams are identical across
/// standard libraries.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64(splitmix64(seed)) uniform53 box-muller";

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Config and dataset
// ---------------------------------------------------------------------------

enum class InterceptMode {
  kEstimate,  // append a column of ones with its own support row
  kKnown,     // subtract the known intercept from y; estimate slopes only
};

struct SimulationConfig {
  std::size_t n = 60;
  std::vector<double> true_beta{1.0, -2.0, 3.0};
  double intercept_alpha = 1.0;
  double x_low = 0.0;
  double x_high = 20.0;
  double noise_sd = 1.0;
  double eta = 0.0;
  /// Columns receiving the collinearity transform; empty means all.
  std::vector<std::size_t> collinear_columns;
  /// Also run the standardized-regressor streaming variant.
  bool standardize = false;
  std::vector<double> beta_support{-100.0, -50.0, 0.0, 50.0, 100.0};
  std::size_t error_points = 3;
  InterceptMode intercept = InterceptMode::kEstimate;
  std::uint64_t seed = 1;

  std::size_t num_regressors() const { return true_beta.size(); }

  void validate() const {
    const std::size_t J = true_beta.size();
    if (J == 0) throw ConfigError("true_beta must not be empty");
    if (n < J + 1) throw ConfigError("n must be at least J + 1");
    if (!(x_low < x_high)) throw ConfigError("x_low must be below x_high");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
    // noise_sd == 0 is accepted for noiseless checks.
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be nonnegative");
    for (auto c : collinear_columns)
      if (c >= J) throw ConfigError("collinear column index out of range");
    if (beta_support.size() < 2) throw ConfigError("beta_support needs at least two points");
    for (std::size_t k = 1; k < beta_support.size(); ++k)
      if (!(beta_support[k] > beta_support[k - 1])) throw ConfigError("beta_support must be strictly increasing");
    if (error_points < 2) throw ConfigError("error_points must be at least 2");
  }
};

struct DatasetMetadata {
  std::uint64_t seed = 0;
  double eta = 0.0;
  bool standardized = false;
  double s_y = 0.0;
  std::string rng;
};

struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // n x J raw regressors, no intercept column
  std::vector<double> true_beta;
  double intercept_alpha = 0.0;
  Eigen::VectorXd noise;  // generating errors; empty for imported data
  DatasetMetadata metadata;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t num_regressors() const { return static_cast<std::size_t>(x.cols()); }
};

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// eta * c + sqrt(1 - eta^2) * x, elementwise.
inline Eigen::VectorXd apply_multicollinearity(const Eigen::Ref<const Eigen::VectorXd>& x_column,
                                               const Eigen::Ref<const Eigen::VectorXd>& c, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  if (x_column.size() != c.size()) throw DimensionError("column and common factor lengths differ");
  const double keep = std::sqrt(1.0 - eta * eta);
  return eta * c + keep * x_column;
}

inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

struct Standardization {
  Eigen::MatrixXd x;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
};

/// Column-wise mean 0, sample sd 1 (n - 1 denominator).
inline Standardization standardize_columns(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw DegenerateDataError("standardization needs at least two rows");
  Standardization s{x, Eigen::VectorXd(x.cols()), Eigen::VectorXd(x.cols())};
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd = sample_sd(x.col(j));
    if (!(sd > 0.0)) throw DegenerateDataError("column " + std::to_string(j) + " has zero variance");
    s.means[j] = mean;
    s.sds[j] = sd;
    s.x.col(j) = (x.col(j).array() - mean) / sd;
  }
  return s;
}

/// Maps coefficients fitted on standardized columns back to the raw scale.
/// Input is J slopes, optionally followed by an intercept; output is always
/// J slopes followed by the raw-scale intercept.
inline Eigen::VectorXd destandardize_coefficients(const Eigen::VectorXd& coef, const Eigen::VectorXd& means,
                                                  const Eigen::VectorXd& sds) {
  const Eigen::Index J = means.size();
  if (sds.size() != J || (coef.size() != J && coef.size() != J + 1))
    throw DimensionError("coefficient length does not match the standardization");
  Eigen::VectorXd raw(J + 1);
  double intercept = coef.size() == J + 1 ? coef[J] : 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    raw[j] = coef[j] / sds[j];
    intercept -= raw[j] * means[j];
  }
  raw[J] = intercept;
  return raw;
}

/// Appends a column of ones (intercept last).
inline Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& x, bool with_intercept) {
  if (!with_intercept) return x;
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.leftCols(x.cols()) = x;
  d.col(x.cols()).setOnes();
  return d;
}

/// H equally spaced points on [-3 s_y, 3 s_y].
inline std::vector<double> build_error_support(std::span<const double> y, std::size_t points = 3) {
  if (y.size() < 2) throw DegenerateDataError("error support needs at least two responses");
  if (points < 2) throw DimensionError("error support needs at least two points");
  const Eigen::Map<const Eigen::VectorXd> v(y.data(), static_cast<Eigen::Index>(y.size()));
  const double s = sample_sd(v);
  if (!(s > 0.0)) throw DegenerateDataError("constant responses give a zero-width error support");
  std::vector<double> z(points);
  const double step = 6.0 * s / static_cast<double>(points - 1);
  for (std::size_t h = 0; h < points; ++h) z[h] = -3.0 * s + step * static_cast<double>(h);
  z.back() = 3.0 * s;
  // Keep exact symmetry: mirror the lower half onto the upper half.
  for (std::size_t h = 0; h < points / 2; ++h) z[points - 1 - h] = -z[h];
  if (points % 2 == 1) z[points / 2] = 0.0;
  return z;
}

inline std::vector<double> build_error_support(const Eigen::VectorXd& y, std::size_t points = 3) {
  return build_error_support(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), points);
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Per unit, in order: J regressor draws, the common factor c, then the
/// noise draw. y = alpha + x beta + eps.
inline Dataset generate_dataset(const SimulationConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto J = static_cast<Eigen::Index>(cfg.true_beta.size());
  Rng rng(cfg.seed);
  Eigen::MatrixXd raw(n, J);
  Eigen::VectorXd c(n), eps(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < J; ++j) raw(i, j) = rng.uniform(cfg.x_low, cfg.x_high);
    c[i] = rng.uniform(cfg.x_low, cfg.x_high);
    eps[i] = cfg.noise_sd * rng.normal();
  }
  Dataset d;
  d.x = raw;
  if (cfg.eta > 0.0) {
    std::vector<std::size_t> cols = cfg.collinear_columns;
    if (cols.empty())
      for (std::size_t j = 0; j < cfg.true_beta.size(); ++j) cols.push_back(j);
    for (auto j : cols) d.x.col(static_cast<Eigen::Index>(j)) = apply_multicollinearity(raw.col(static_cast<Eigen::Index>(j)), c, cfg.eta);
  }
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double yi = cfg.intercept_alpha;
    for (Eigen::Index j = 0; j < J; ++j) yi += cfg.true_beta[static_cast<std::size_t>(j)] * d.x(i, j);
    d.y[i] = yi + eps[i];
  }
  d.true_beta = cfg.true_beta;
  d.intercept_alpha = cfg.intercept_alpha;
  d.noise = std::move(eps);
  d.metadata.seed = cfg.seed;
  d.metadata.eta = cfg.eta;
  d.metadata.s_y = sample_sd(d.y);
  d.metadata.rng = Rng::kName;
  return d;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

class DatasetFormatError : public Error {
 public:
  DatasetFormatError(const std::string& what, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_, column_;
};

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  out << "y";
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    out << format_double(d.y[i]);
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << ',' << format_double(d.x(i, j));
    out << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DatasetFormatError("missing header", line_no, 1);
  if (detail::trim(header[0]) != "y") throw DatasetFormatError("first header column must be 'y'", line_no, 1);
  if (header.size() < 2) throw DatasetFormatError("need at least one regressor column", line_no, 2);
  for (std::size_t c = 1; c < header.size(); ++c)
    if (detail::trim(header[c]) != "x" + std::to_string(c))
      throw DatasetFormatError("expected header 'x" + std::to_string(c) + "'", line_no, c + 1);
  const std::size_t J = header.size() - 1;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != J + 1)
      throw DatasetFormatError("expected " + std::to_string(J + 1) + " fields, found " + std::to_string(cells.size()),
                               line_no, std::min(cells.size(), J + 1) + 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DatasetFormatError("not a finite number: '" + cell + "'", line_no, c + 1);
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DatasetFormatError("no data rows", line_no, 1);
  Dataset d;
  d.y.resize(static_cast<Eigen::Index>(rows));
  d.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(J));
  for (std::size_t r = 0; r < rows; ++r) {
    d.y[static_cast<Eigen::Index>(r)] = values[r * (J + 1)];
    for (std::size_t j = 0; j < J; ++j)
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = values[r * (J + 1) + 1 + j];
  }
  d.metadata.s_y = sample_sd(d.y);
  return d;
}

}  // namespace stregce

#endif  // STREGCE_SIMULATION_HPP
