#ifndef STREGCE_CORE_HPP
#define STREGCE_CORE_HPP

// Finite-support probability types and the information functionals
// (expectation, Shannon entropy, Kullback-Leibler divergence) used by the
// cross-entropy estimators.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stregce {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidDistributionError : public Error {
 public:
  using Error::Error;
};

/// p has mass where q has none.
class DominationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t row = -1)
      : Error(what), row_(row) {}
  /// Offending row, or -1 when not attributable to one row.
  std::ptrdiff_t row() const noexcept { return row_; }

 private:
  std::ptrdiff_t row_;
};

/// An observation lies outside the interval its constraint can reach.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::size_t observation)
      : Error(what), observation_(observation) {}
  std::size_t observation() const noexcept { return observation_; }

 private:
  std::size_t observation_;
};

/// An observation sits exactly on the attainable hull; only a degenerate
/// point mass could satisfy it.
class BoundaryError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

inline constexpr double kSimplexTolerance = 1e-12;
/// Weights below this are treated as exact zeros before taking logarithms.
inline constexpr double kUnderflowFloor = 1e-300;

namespace detail {

inline double xlogx(double p) { return p < kUnderflowFloor ? 0.0 : p * std::log(p); }

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + " contains non-finite values");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SimplexDistribution
// ---------------------------------------------------------------------------

/// Nonnegative weights summing to one over a support row.
class SimplexDistribution {
 public:
  /// Weights must already sum to one within kSimplexTolerance; they are
  /// renormalized exactly after the check.
  explicit SimplexDistribution(Eigen::VectorXd weights) : weights_(std::move(weights)) {
    if (weights_.size() == 0) throw InvalidDistributionError("empty distribution");
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
      if (!std::isfinite(weights_[k]) || weights_[k] < 0.0)
        throw InvalidDistributionError("weight " + std::to_string(k) + " is negative or non-finite");
      if (weights_[k] < kUnderflowFloor) weights_[k] = 0.0;
    }
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > kSimplexTolerance)
      throw InvalidDistributionError("weights sum to " + std::to_string(total) + ", not 1");
    weights_ /= total;
  }

  SimplexDistribution(std::initializer_list<double> weights)
      : SimplexDistribution(to_vector(weights)) {}

  /// Normalizes arbitrary nonnegative mass with positive total.
  static SimplexDistribution normalized(Eigen::VectorXd mass) {
    if (mass.size() == 0) throw InvalidDistributionError("empty distribution");
    if (!mass.allFinite() || (mass.array() < 0.0).any())
      throw InvalidDistributionError("mass must be finite and nonnegative");
    const double total = mass.sum();
    if (!(total > 0.0)) throw InvalidDistributionError("mass has zero total");
    mass /= total;
    for (auto& w : mass) if (w < kUnderflowFloor) w = 0.0;
    mass /= mass.sum();
    return SimplexDistribution(std::move(mass), Unchecked{});
  }

  static SimplexDistribution uniform(std::size_t n) {
    if (n == 0) throw InvalidDistributionError("empty distribution");
    return SimplexDistribution(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)),
                               Unchecked{});
  }

  static SimplexDistribution point_mass(std::size_t n, std::size_t at) {
    if (at >= n) throw DimensionError("point mass index out of range");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    w[static_cast<Eigen::Index>(at)] = 1.0;
    return SimplexDistribution(std::move(w), Unchecked{});
  }

  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }
  double operator[](std::size_t k) const { return weights_[static_cast<Eigen::Index>(k)]; }

  bool is_uniform(double tol = kSimplexTolerance) const {
    const double u = 1.0 / static_cast<double>(weights_.size());
    return ((weights_.array() - u).abs() <= tol).all();
  }

  bool strictly_positive() const { return (weights_.array() > 0.0).all(); }

 private:
  struct Unchecked {};
  SimplexDistribution(Eigen::VectorXd w, Unchecked) : weights_(std::move(w)) {}

  static Eigen::VectorXd to_vector(std::initializer_list<double> w) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
    Eigen::Index k = 0;
    for (double x : w) v[k++] = x;
    return v;
  }

  Eigen::VectorXd weights_;
};

// ---------------------------------------------------------------------------
// SupportGrid
// ---------------------------------------------------------------------------

/// Support points for each coefficient (J x K) and each error slot (rows x H).
/// Rows are strictly increasing; every error row brackets zero.
class SupportGrid {
 public:
  SupportGrid(Eigen::MatrixXd beta_support, Eigen::MatrixXd error_support)
      : beta_(std::move(beta_support)), error_(std::move(error_support)) {
    if (beta_.rows() == 0) throw DimensionError("beta support needs at least one row");
    if (beta_.cols() < 2) throw DimensionError("beta support needs K >= 2 points");
    if (error_.rows() > 0 && error_.cols() < 2) throw DimensionError("error support needs H >= 2 points");
    detail::require_finite(beta_, "beta support");
    detail::require_finite(error_, "error support");
    for (Eigen::Index j = 0; j < beta_.rows(); ++j) check_increasing(beta_.row(j), "beta", j);
    for (Eigen::Index i = 0; i < error_.rows(); ++i) {
      check_increasing(error_.row(i), "error", i);
      if (!(error_(i, 0) < 0.0 && error_(i, error_.cols() - 1) > 0.0))
        throw InvalidDistributionError("error support row " + std::to_string(i) + " does not span zero");
    }
  }

  /// Same beta row for every parameter and the same error row for every slot.
  static SupportGrid replicated(std::span<const double> beta_row, std::size_t num_params,
                                std::span<const double> error_row, std::size_t num_errors) {
    Eigen::MatrixXd b(static_cast<Eigen::Index>(num_params), static_cast<Eigen::Index>(beta_row.size()));
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index k = 0; k < b.cols(); ++k) b(j, k) = beta_row[static_cast<std::size_t>(k)];
    Eigen::MatrixXd e(static_cast<Eigen::Index>(num_errors), static_cast<Eigen::Index>(error_row.size()));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      for (Eigen::Index h = 0; h < e.cols(); ++h) e(i, h) = error_row[static_cast<std::size_t>(h)];
    return SupportGrid(std::move(b), std::move(e));
  }

  const Eigen::MatrixXd& beta_support() const noexcept { return beta_; }
  const Eigen::MatrixXd& error_support() const noexcept { return error_; }

  std::size_t num_params() const noexcept { return static_cast<std::size_t>(beta_.rows()); }
  std::size_t beta_points() const noexcept { return static_cast<std::size_t>(beta_.cols()); }
  std::size_t num_errors() const noexcept { return static_cast<std::size_t>(error_.rows()); }
  std::size_t error_points() const noexcept { return static_cast<std::size_t>(error_.cols()); }

 private:
  template <typename Row>
  static void check_increasing(const Row& row, const char* which, Eigen::Index r) {
    for (Eigen::Index k = 1; k < row.size(); ++k)
      if (!(row[k] > row[k - 1]))
        throw InvalidDistributionError(std::string(which) + " support row " + std::to_string(r) +
                                       " is not strictly increasing");
  }

  Eigen::MatrixXd beta_;
  Eigen::MatrixXd error_;
};

// ---------------------------------------------------------------------------
// JointDistribution
// ---------------------------------------------------------------------------

/// One distribution per coefficient and one per error slot, independent.
struct JointDistribution {
  std::vector<SimplexDistribution> beta_rows;
  std::vector<SimplexDistribution> error_rows;

  static JointDistribution uniform(const SupportGrid& grid) {
    JointDistribution d;
    d.beta_rows.assign(grid.num_params(), SimplexDistribution::uniform(grid.beta_points()));
    if (grid.num_errors() > 0)
      d.error_rows.assign(grid.num_errors(), SimplexDistribution::uniform(grid.error_points()));
    return d;
  }

  void check_shape(const SupportGrid& grid) const {
    if (beta_rows.size() != grid.num_params() || error_rows.size() != grid.num_errors())
      throw DimensionError("joint distribution row counts do not match the support grid");
    for (const auto& r : beta_rows)
      if (r.size() != grid.beta_points()) throw DimensionError("beta row length does not match K");
    for (const auto& r : error_rows)
      if (r.size() != grid.error_points()) throw DimensionError("error row length does not match H");
  }
};

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

inline double expectation(const SimplexDistribution& dist, std::span<const double> support_row) {
  if (dist.size() != support_row.size()) throw DimensionError("distribution and support lengths differ");
  double s = 0.0;
  for (std::size_t k = 0; k < support_row.size(); ++k) s += dist[k] * support_row[k];
  return s;
}

inline double expectation(const SimplexDistribution& dist, const Eigen::Ref<const Eigen::RowVectorXd>& support_row) {
  if (static_cast<Eigen::Index>(dist.size()) != support_row.size())
    throw DimensionError("distribution and support lengths differ");
  return support_row.dot(dist.weights().transpose());
}

/// -sum p ln p, with 0 ln 0 = 0.
inline double shannon_entropy(const SimplexDistribution& dist) {
  double h = 0.0;
  for (double p : dist.weights()) h -= detail::xlogx(p);
  return h < 0.0 ? 0.0 : h;
}

/// sum p ln(p/q), with 0 ln 0 = 0. Throws DominationError if p is not
/// absolutely continuous with respect to q.
inline double kl_divergence(const SimplexDistribution& p, const SimplexDistribution& q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: lengths differ");
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = p[k];
    if (pk < kUnderflowFloor) continue;
    const double qk = q[k];
    if (qk < kUnderflowFloor)
      throw DominationError("p has mass at index " + std::to_string(k) + " where q has none");
    d += pk * (std::log(pk) - std::log(qk));
  }
  return d < 0.0 ? 0.0 : d;
}

/// Sum of row-wise divergences over aligned row lists.
inline double kl_divergence(const std::vector<SimplexDistribution>& p, const std::vector<SimplexDistribution>& q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: row counts differ");
  double d = 0.0;
  for (std::size_t r = 0; r < p.size(); ++r) d += kl_divergence(p[r], q[r]);
  return d;
}

}  // namespace stregce

#endif  // STREGCE_CORE_HPP
