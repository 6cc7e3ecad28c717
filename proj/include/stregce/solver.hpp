#ifndef STREGCE_SOLVER_HPP
#define STREGCE_SOLVER_HPP

// Batch generalized cross entropy (GCE) regression.
//
// Minimizes   sum_j w_b KL(p^b_j || q^b_j) + sum_i w_e KL(p^e_i || q^e_i)
// subject to  y_i = sum_j x_{i,j} E[p^b_j] + E[p^e_i]      (one per observation)
// through its unconstrained dual in the multipliers lambda (length m):
//
//   F(lambda) = lambda . y + w_b sum_j ln Z^b_j(theta_j / w_b) + w_e sum_i ln Z^e_i(lambda_i / w_e)
//   theta_j   = sum_i x_{i,j} lambda_i
//   Z(s)      = sum_k q_k exp(-s z_k)
//
// F is convex; its gradient is the constraint residual and its Hessian is
//   diag(Var^e_i / w_e) + X diag(Var^b_j / w_b) X^T,
// a diagonal plus rank-J matrix, which keeps a Newton step at O(m J^2).

#include "stregce/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stregce {

class GceProblem {
 public:
  /// x is m x J (one row per observation). The prior defaults to uniform.
  /// signal_weight / error_weight scale the two KL blocks of the objective.
  GceProblem(Eigen::VectorXd y, Eigen::MatrixXd x, SupportGrid supports,
             std::optional<JointDistribution> prior = std::nullopt, double signal_weight = 1.0,
             double error_weight = 1.0)
      : y_(std::move(y)),
        x_(std::move(x)),
        supports_(std::move(supports)),
        prior_(prior ? std::move(*prior) : JointDistribution::uniform(supports_)),
        signal_weight_(signal_weight),
        error_weight_(error_weight) {
    if (y_.size() < 1) throw DimensionError("problem needs at least one observation");
    if (x_.rows() != y_.size()) throw DimensionError("x rows must equal the number of observations");
    if (static_cast<std::size_t>(x_.cols()) != supports_.num_params())
      throw DimensionError("x columns must equal the number of beta support rows");
    if (static_cast<std::size_t>(y_.size()) != supports_.num_errors())
      throw DimensionError("error support rows must equal the number of observations");
    detail::require_finite(y_, "y");
    detail::require_finite(x_, "x");
    prior_.check_shape(supports_);
    if (!(signal_weight_ > 0.0) || !(error_weight_ > 0.0) || !std::isfinite(signal_weight_) ||
        !std::isfinite(error_weight_))
      throw Error("objective weights must be positive and finite");
  }

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const SupportGrid& supports() const noexcept { return supports_; }
  const JointDistribution& prior() const noexcept { return prior_; }
  double signal_weight() const noexcept { return signal_weight_; }
  double error_weight() const noexcept { return error_weight_; }
  std::size_t num_observations() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t num_params() const noexcept { return static_cast<std::size_t>(x_.cols()); }

 private:
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  SupportGrid supports_;
  JointDistribution prior_;
  double signal_weight_;
  double error_weight_;
};

struct SolverDiagnostics {
  int iterations = 0;
  double max_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  /// Dual evaluations (including rejected line-search trials) that produced
  /// a non-finite value.
  int nonfinite_evaluations = 0;
};

struct GceSolution {
  JointDistribution distributions;
  Eigen::VectorXd multipliers;
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd epsilon_hat;
  double objective_value = 0.0;
  SolverDiagnostics diagnostics;
};

struct SolverSettings {
  double constraint_tolerance = 1e-8;
  int max_iterations = 500;
  /// Relative floor on the diagonal of the Newton system.
  double ridge = 1e-10;
  /// Called with every finished solve. Must be safe to call concurrently if
  /// the settings are shared between threads.
  std::function<void(const GceProblem&, const GceSolution&)> observer;
};

struct DualEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

namespace detail {

/// Log-domain evaluator for the dual of one problem.
class DualModel {
 public:
  struct Eval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::VectorXd beta_mean, beta_var;    // per parameter, divided by w_b for var
    Eigen::VectorXd error_mean, error_var;  // per observation, divided by w_e for var
    bool finite = true;
    std::ptrdiff_t bad_row = -1;  // beta rows first, then error rows offset by J
  };

  explicit DualModel(const GceProblem& p)
      : problem_(p),
        zb_(p.supports().beta_support()),
        ze_(p.supports().error_support()),
        wb_(p.signal_weight()),
        we_(p.error_weight()) {
    const auto J = static_cast<Eigen::Index>(p.num_params());
    const auto m = static_cast<Eigen::Index>(p.num_observations());
    logqb_.resize(J, zb_.cols());
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index k = 0; k < zb_.cols(); ++k) logqb_(j, k) = safe_log(p.prior().beta_rows[j][k]);
    logqe_.resize(m, ze_.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index h = 0; h < ze_.cols(); ++h) logqe_(i, h) = safe_log(p.prior().error_rows[i][h]);
    }
  }

  const GceProblem& problem() const { return problem_; }

  void evaluate(const Eigen::VectorXd& lambda, Eval& out) const {
    const auto& x = problem_.x();
    const auto& y = problem_.y();
    const Eigen::Index J = x.cols(), m = x.rows();
    out.finite = true;
    out.bad_row = -1;
    out.beta_mean.resize(J);
    out.beta_var.resize(J);
    out.error_mean.resize(m);
    out.error_var.resize(m);
    double value = lambda.dot(y);
    const Eigen::VectorXd theta = x.transpose() * lambda;
    for (Eigen::Index j = 0; j < J; ++j) {
      const RowMoments r = row_moments(logqb_.row(j), zb_.row(j), theta[j] / wb_);
      value += wb_ * r.log_partition;
      out.beta_mean[j] = r.mean;
      out.beta_var[j] = r.var / wb_;
      if (!r.finite) flag(out, j);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const RowMoments r = row_moments(logqe_.row(i), ze_.row(i), lambda[i] / we_);
      value += we_ * r.log_partition;
      out.error_mean[i] = r.mean;
      out.error_var[i] = r.var / we_;
      if (!r.finite) flag(out, J + i);
    }
    out.value = value;
    out.gradient = y - x * out.beta_mean - out.error_mean;
    if (!std::isfinite(value) || !out.gradient.allFinite()) {
      if (out.bad_row < 0) out.bad_row = first_bad(out.gradient, J);
      out.finite = false;
    }
  }

  /// Gibbs rows at the given multipliers.
  JointDistribution distributions(const Eigen::VectorXd& lambda) const {
    const auto& x = problem_.x();
    const Eigen::VectorXd theta = x.transpose() * lambda;
    JointDistribution d;
    d.beta_rows.reserve(static_cast<std::size_t>(x.cols()));
    d.error_rows.reserve(static_cast<std::size_t>(x.rows()));
    // A zero exponent leaves the prior row as is.
    const auto& prior = problem_.prior();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      d.beta_rows.push_back(theta[j] == 0.0 ? prior.beta_rows[static_cast<std::size_t>(j)]
                                            : gibbs_row(logqb_.row(j), zb_.row(j), theta[j] / wb_, j));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      d.error_rows.push_back(lambda[i] == 0.0 ? prior.error_rows[static_cast<std::size_t>(i)]
                                              : gibbs_row(logqe_.row(i), ze_.row(i), lambda[i] / we_, x.cols() + i));
    return d;
  }

 private:
  struct RowMoments {
    double log_partition;
    double mean;
    double var;
    bool finite;
  };

  static double safe_log(double q) {
    return q < kUnderflowFloor ? -std::numeric_limits<double>::infinity() : std::log(q);
  }

  static void flag(Eval& out, std::ptrdiff_t row) {
    if (out.finite) out.bad_row = row;
    out.finite = false;
  }

  static std::ptrdiff_t first_bad(const Eigen::VectorXd& g, Eigen::Index offset) {
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i])) return offset + i;
    return -1;
  }

  // ln sum_k q_k exp(-s z_k) with max subtraction, plus the tilted mean and
  // variance of z.
  static RowMoments row_moments(const Eigen::Ref<const Eigen::RowVectorXd>& logq,
                                const Eigen::Ref<const Eigen::RowVectorXd>& z, double s) {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    const Eigen::Index K = z.size();
    double amax = ninf;
    for (Eigen::Index k = 0; k < K; ++k)
      if (logq[k] != ninf) amax = std::max(amax, logq[k] - s * z[k]);
    double total = 0.0, first = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (logq[k] == ninf) continue;
      const double e = std::exp(logq[k] - s * z[k] - amax);
      total += e;
      first += e * z[k];
    }
    const double mean = first / total;
    double second = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (logq[k] == ninf) continue;
      const double dz = z[k] - mean;
      second += std::exp(logq[k] - s * z[k] - amax) * dz * dz;
    }
    const double lp = amax + std::log(total);
    const double var = second / total;
    return {lp, mean, var, std::isfinite(lp) && std::isfinite(mean) && std::isfinite(var)};
  }

  static SimplexDistribution gibbs_row(const Eigen::Ref<const Eigen::RowVectorXd>& logq,
                                       const Eigen::Ref<const Eigen::RowVectorXd>& z, double s,
                                       Eigen::Index row) {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    double amax = ninf;
    for (Eigen::Index k = 0; k < z.size(); ++k)
      if (logq[k] != ninf) amax = std::max(amax, logq[k] - s * z[k]);
    if (!std::isfinite(amax)) throw NumericError("non-finite Gibbs exponent in row " + std::to_string(row), row);
    Eigen::VectorXd w(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k)
      w[k] = logq[k] == ninf ? 0.0 : std::exp(logq[k] - s * z[k] - amax);
    return SimplexDistribution::normalized(std::move(w));
  }

  const GceProblem& problem_;
  const Eigen::MatrixXd& zb_;
  const Eigen::MatrixXd& ze_;
  Eigen::MatrixXd logqb_, logqe_;
  double wb_, we_;
};

inline void check_multipliers(const Eigen::VectorXd& lambda, const GceProblem& problem) {
  if (static_cast<std::size_t>(lambda.size()) != problem.num_observations())
    throw DimensionError("multiplier count must equal the number of observations");
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (!std::isfinite(lambda[i])) throw NumericError("multiplier " + std::to_string(i) + " is not finite", i);
}

inline double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Newton direction for diag(D) + X diag(V) X^T via the Woodbury identity.
inline Eigen::VectorXd newton_direction(const Eigen::MatrixXd& x, const DualModel::Eval& e, double ridge) {
  const Eigen::VectorXd sqrt_v = e.beta_var.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd b = x * sqrt_v.asDiagonal();
  const Eigen::VectorXd diag = e.error_var + b.rowwise().squaredNorm();
  const double floor = ridge * std::max(diag.maxCoeff(), std::numeric_limits<double>::min());
  const Eigen::VectorXd d_inv = e.error_var.cwiseMax(floor).cwiseInverse();
  const Eigen::Index J = x.cols();
  Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(J, J);
  cap.noalias() += b.transpose() * d_inv.asDiagonal() * b;
  const Eigen::VectorXd u = -(d_inv.cwiseProduct(e.gradient));
  const Eigen::VectorXd w = cap.ldlt().solve(b.transpose() * u);
  return u - d_inv.cwiseProduct(b * w);
}

inline void check_feasible(const GceProblem& p) {
  const auto& zb = p.supports().beta_support();
  const auto& ze = p.supports().error_support();
  const auto& prior = p.prior();
  const auto J = static_cast<Eigen::Index>(p.num_params());
  // Hull of each beta row over the points the prior can reach.
  Eigen::VectorXd bmin(J), bmax(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    bmin[j] = std::numeric_limits<double>::infinity();
    bmax[j] = -bmin[j];
    for (Eigen::Index k = 0; k < zb.cols(); ++k)
      if (prior.beta_rows[j][k] >= kUnderflowFloor) {
        bmin[j] = std::min(bmin[j], zb(j, k));
        bmax[j] = std::max(bmax[j], zb(j, k));
      }
  }
  for (Eigen::Index i = 0; i < p.y().size(); ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index h = 0; h < ze.cols(); ++h)
      if (prior.error_rows[i][h] >= kUnderflowFloor) {
        lo = std::min(lo, ze(i, h));
        hi = std::max(hi, ze(i, h));
      }
    for (Eigen::Index j = 0; j < J; ++j) {
      const double xij = p.x()(i, j);
      if (xij == 0.0) continue;
      lo += std::min(xij * bmin[j], xij * bmax[j]);
      hi += std::max(xij * bmin[j], xij * bmax[j]);
    }
    const double yi = p.y()[i];
    const auto idx = static_cast<std::size_t>(i);
    const std::string where = "observation " + std::to_string(i) + " (y = " + std::to_string(yi) +
                              ", attainable [" + std::to_string(lo) + ", " + std::to_string(hi) + "])";
    if (yi < lo || yi > hi) throw InfeasibleError("infeasible " + where, idx);
    if (yi == lo || yi == hi || !(lo < hi)) throw BoundaryError("boundary-attainable " + where, idx);
  }
}

// One-dimensional root of the (increasing) dual derivative with a
// Newton step kept inside the current sign bracket.
inline Eigen::VectorXd solve_scalar(const DualModel& model, const SolverSettings& s, SolverDiagnostics& diag) {
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(1);
  DualModel::Eval e;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (diag.iterations = 0; diag.iterations <= s.max_iterations; ++diag.iterations) {
    model.evaluate(lambda, e);
    if (!e.finite) {
      ++diag.nonfinite_evaluations;
      // Step back toward the last finite bracket end.
      if (std::isfinite(lo) && std::isfinite(hi))
        lambda[0] = 0.5 * (lo + hi);
      else if (std::isfinite(lo))
        lambda[0] = 0.5 * (lambda[0] + lo);
      else if (std::isfinite(hi))
        lambda[0] = 0.5 * (lambda[0] + hi);
      else
        break;
      continue;
    }
    const double g = e.gradient[0];
    if (std::abs(g) <= s.constraint_tolerance) {
      diag.converged = true;
      break;
    }
    if (diag.iterations == s.max_iterations) break;
    const double l = lambda[0];
    if (g < 0.0) lo = l; else hi = l;
    double curvature = e.error_var[0];
    for (Eigen::Index j = 0; j < e.beta_var.size(); ++j) {
      const double xj = model.problem().x()(0, j);
      curvature += xj * xj * e.beta_var[j];
    }
    double next = l - g / curvature;
    const bool bracketed = std::isfinite(lo) && std::isfinite(hi);
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (bracketed)
        next = 0.5 * (lo + hi);
      else
        next = g < 0.0 ? l + std::max(1.0, 2.0 * std::abs(l))
                       : l - std::max(1.0, 2.0 * std::abs(l));
    }
    if (bracketed && (next == lo || next == hi)) break;  // bracket exhausted
    lambda[0] = next;
  }
  return lambda;
}

inline Eigen::VectorXd solve_newton(const DualModel& model, const SolverSettings& s, SolverDiagnostics& diag) {
  const auto& x = model.problem().x();
  const Eigen::Index m = x.rows();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  DualModel::Eval cur, trial;
  model.evaluate(lambda, cur);
  if (!cur.finite) {
    ++diag.nonfinite_evaluations;
    throw NumericError("dual is not finite at the prior", cur.bad_row);
  }
  for (diag.iterations = 0;; ++diag.iterations) {
    const double gmax = max_abs(cur.gradient);
    if (gmax <= s.constraint_tolerance) {
      diag.converged = true;
      break;
    }
    if (diag.iterations >= s.max_iterations) break;

    Eigen::VectorXd dir = newton_direction(x, cur, s.ridge);
    double slope = cur.gradient.dot(dir);
    if (!dir.allFinite() || !(slope < 0.0)) {
      const Eigen::VectorXd diag_h =
          cur.error_var + (x.array().square().matrix() * cur.beta_var);
      dir = -cur.gradient.cwiseQuotient(diag_h.cwiseMax(std::numeric_limits<double>::min()));
      slope = cur.gradient.dot(dir);
    }

    bool accepted = false;
    double t = 1.0;
    for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
      model.evaluate(lambda + t * dir, trial);
      if (!trial.finite) {
        ++diag.nonfinite_evaluations;
        continue;
      }
      const bool armijo = trial.value <= cur.value + 1e-4 * t * slope;
      // Near the optimum value decreases drop below rounding; fall back to
      // requiring a smaller residual.
      const bool flat = std::abs(trial.value - cur.value) <= 1e-13 * (1.0 + std::abs(cur.value)) &&
                        max_abs(trial.gradient) < gmax;
      if (armijo || flat) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    lambda += t * dir;
    std::swap(cur, trial);
  }
  return lambda;
}

inline double weighted_objective(const GceProblem& p, const JointDistribution& d) {
  return p.signal_weight() * kl_divergence(d.beta_rows, p.prior().beta_rows) +
         p.error_weight() * kl_divergence(d.error_rows, p.prior().error_rows);
}

}  // namespace detail

/// Gibbs-form distributions induced by the multipliers:
/// p^b_{j,k} ~ q^b_{j,k} exp(-z^b_{j,k} sum_i x_{i,j} lambda_i / w_b),
/// p^e_{i,h} ~ q^e_{i,h} exp(-z^e_{i,h} lambda_i / w_e).
inline JointDistribution gibbs_weights(const Eigen::VectorXd& multipliers, const GceProblem& problem) {
  detail::check_multipliers(multipliers, problem);
  return detail::DualModel(problem).distributions(multipliers);
}

/// Dual value and its gradient (the constraint residual). The value is
/// reported with partition sums taken against K q (resp. H q), so that with a
/// uniform prior and unit weights it is the usual maximum-entropy dual and
/// equals J ln K + m ln H at zero multipliers.
inline DualEvaluation dual_objective(const Eigen::VectorXd& multipliers, const GceProblem& problem) {
  detail::check_multipliers(multipliers, problem);
  detail::DualModel model(problem);
  detail::DualModel::Eval e;
  model.evaluate(multipliers, e);
  if (!e.finite) throw NumericError("non-finite dual evaluation at row " + std::to_string(e.bad_row), e.bad_row);
  const auto& g = problem.supports();
  const double offset =
      problem.signal_weight() * static_cast<double>(g.num_params()) * std::log(static_cast<double>(g.beta_points())) +
      problem.error_weight() * static_cast<double>(g.num_errors()) * std::log(static_cast<double>(g.error_points()));
  return {e.value + offset, std::move(e.gradient)};
}

/// Point estimates and constraint residual for a set of distributions.
inline Eigen::VectorXd constraint_residual(const GceProblem& p, const Eigen::VectorXd& beta_hat,
                                          const Eigen::VectorXd& epsilon_hat) {
  return p.y() - p.x() * beta_hat - epsilon_hat;
}

namespace detail {

inline GceSolution assemble(const GceProblem& problem, const DualModel& model, Eigen::VectorXd lambda,
                            SolverDiagnostics diag, double tol) {
  GceSolution sol;
  sol.distributions = model.distributions(lambda);
  const auto& zb = problem.supports().beta_support();
  const auto& ze = problem.supports().error_support();
  sol.beta_hat.resize(zb.rows());
  for (Eigen::Index j = 0; j < zb.rows(); ++j) sol.beta_hat[j] = expectation(sol.distributions.beta_rows[j], zb.row(j));
  sol.epsilon_hat.resize(ze.rows());
  for (Eigen::Index i = 0; i < ze.rows(); ++i)
    sol.epsilon_hat[i] = expectation(sol.distributions.error_rows[i], ze.row(i));
  sol.multipliers = std::move(lambda);
  sol.objective_value = weighted_objective(problem, sol.distributions);
  diag.max_residual = max_abs(constraint_residual(problem, sol.beta_hat, sol.epsilon_hat));
  diag.converged = diag.converged && diag.max_residual <= tol;
  sol.diagnostics = diag;
  return sol;
}

}  // namespace detail

/// Solves the GCE problem. Infeasible observations throw; hitting the
/// iteration cap returns a solution with diagnostics.converged == false.
inline GceSolution solve_gce(const GceProblem& problem, const SolverSettings& settings = {}) {
  detail::check_feasible(problem);
  detail::DualModel model(problem);
  SolverDiagnostics diag;
  Eigen::VectorXd lambda = problem.num_observations() == 1 ? detail::solve_scalar(model, settings, diag)
                                                           : detail::solve_newton(model, settings, diag);
  GceSolution sol = detail::assemble(problem, model, std::move(lambda), diag, settings.constraint_tolerance);
  if (settings.observer) settings.observer(problem, sol);
  return sol;
}

}  // namespace stregce

#endif  // STREGCE_SOLVER_HPP
