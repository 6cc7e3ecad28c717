#ifndef STREGCE_STREAMING_HPP
#define STREGCE_STREAMING_HPP

// Streaming GCE. A batch GCE solve with uniform prior seeds the coefficient
// distributions; each later observation (or block of observations) is
// absorbed by a KL-minimizing update whose coefficient prior is the current
// estimate and whose error prior is reset to uniform.

#include "stregce/core.hpp"
#include "stregce/solver.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stregce {

struct UpdateSettings {
  /// Weight of the coefficient divergence; the error divergence gets
  /// 1 - gamma. 0.5 gives the unweighted update.
  double gamma = 0.5;
  /// Per-update gamma values, indexed by update count (batch excluded).
  std::vector<double> gamma_schedule;
  SolverSettings solver;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    for (double g : gamma_schedule)
      if (!(g > 0.0 && g < 1.0)) throw ConfigError("gamma schedule entries must lie in (0, 1)");
  }

  double gamma_for_update(std::size_t update_index) const {
    if (gamma_schedule.empty()) return gamma;
    if (update_index >= gamma_schedule.size())
      throw ConfigError("gamma schedule does not cover update " + std::to_string(update_index));
    return gamma_schedule[update_index];
  }
};

struct StreamState {
  Eigen::MatrixXd beta_support;  // J x K, fixed for the stream
  std::vector<SimplexDistribution> beta_prior;
  std::size_t step_index = 0;  // observations absorbed so far
  std::vector<double> epsilon_log;
  /// KL(prior after step || prior before step), one entry per update.
  std::vector<double> entropy_ledger;
  bool record_trajectory = true;
  std::vector<Eigen::VectorXd> beta_trajectory;
  /// Set once any coefficient prior weight has underflowed to zero.
  bool prior_underflow = false;

  std::size_t num_params() const { return beta_prior.size(); }
  std::size_t num_updates() const { return entropy_ledger.size(); }

  Eigen::VectorXd beta_hat() const {
    Eigen::VectorXd b(beta_support.rows());
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = expectation(beta_prior[static_cast<std::size_t>(j)], beta_support.row(j));
    return b;
  }
};

/// A stream that has seen nothing: uniform coefficient prior.
inline StreamState uniform_stream(Eigen::MatrixXd beta_support, bool record_trajectory = true) {
  if (beta_support.rows() == 0 || beta_support.cols() < 2) throw DimensionError("beta support must be J x K with K >= 2");
  StreamState s;
  const auto K = static_cast<std::size_t>(beta_support.cols());
  s.beta_prior.assign(static_cast<std::size_t>(beta_support.rows()), SimplexDistribution::uniform(K));
  s.beta_support = std::move(beta_support);
  s.record_trajectory = record_trajectory;
  return s;
}

namespace detail {

inline bool any_zero(const std::vector<SimplexDistribution>& rows) {
  for (const auto& r : rows)
    if (!r.strictly_positive()) return true;
  return false;
}

}  // namespace detail

/// Runs the batch GCE solve (uniform prior required) and seeds the stream
/// with its coefficient distributions.
inline std::pair<StreamState, GceSolution> init_stream(const GceProblem& batch, const UpdateSettings& settings,
                                                       bool record_trajectory = true) {
  settings.validate();
  for (const auto& r : batch.prior().beta_rows)
    if (!r.is_uniform()) throw Error("initial batch must use a uniform coefficient prior");
  for (const auto& r : batch.prior().error_rows)
    if (!r.is_uniform()) throw Error("initial batch must use a uniform error prior");
  GceSolution sol = solve_gce(batch, settings.solver);
  if (!sol.diagnostics.converged) throw ConvergenceError("initial batch solve did not converge");
  StreamState s;
  s.beta_support = batch.supports().beta_support();
  s.beta_prior = sol.distributions.beta_rows;
  s.step_index = batch.num_observations();
  s.epsilon_log.assign(sol.epsilon_hat.data(), sol.epsilon_hat.data() + sol.epsilon_hat.size());
  s.record_trajectory = record_trajectory;
  if (record_trajectory) s.beta_trajectory.push_back(sol.beta_hat);
  s.prior_underflow = detail::any_zero(s.beta_prior);
  return {std::move(s), std::move(sol)};
}

/// Absorbs g >= 1 observations with one GCE solve whose prior is
/// (current coefficient prior, uniform error rows). The input state is never
/// modified; infeasible or non-converged blocks throw.
inline StreamState block_update(const StreamState& state, const Eigen::VectorXd& y_block, const Eigen::MatrixXd& x_block,
                                const Eigen::MatrixXd& error_support_rows, const UpdateSettings& settings) {
  settings.validate();
  if (y_block.size() < 1) throw DimensionError("block must contain at least one observation");
  if (x_block.rows() != y_block.size() || error_support_rows.rows() != y_block.size())
    throw DimensionError("block dimensions are inconsistent");
  if (static_cast<std::size_t>(x_block.cols()) != state.num_params())
    throw DimensionError("block regressors do not match the number of coefficients");

  SupportGrid grid(state.beta_support, error_support_rows);
  JointDistribution prior;
  prior.beta_rows = state.beta_prior;
  prior.error_rows.assign(static_cast<std::size_t>(y_block.size()),
                          SimplexDistribution::uniform(static_cast<std::size_t>(error_support_rows.cols())));
  const double gamma = settings.gamma_for_update(state.num_updates());
  const GceProblem problem(y_block, x_block, std::move(grid), std::move(prior), gamma, 1.0 - gamma);

  GceSolution sol;
  try {
    sol = solve_gce(problem, settings.solver);
  } catch (const InfeasibleError& e) {
    throw InfeasibleError("update at step " + std::to_string(state.step_index) + ": " + e.what(), e.observation());
  }
  if (!sol.diagnostics.converged)
    throw ConvergenceError("update at step " + std::to_string(state.step_index) + " did not converge (residual " +
                           std::to_string(sol.diagnostics.max_residual) + ")");

  StreamState next = state;
  next.beta_prior = std::move(sol.distributions.beta_rows);
  next.entropy_ledger.push_back(kl_divergence(next.beta_prior, state.beta_prior));
  next.epsilon_log.insert(next.epsilon_log.end(), sol.epsilon_hat.data(), sol.epsilon_hat.data() + sol.epsilon_hat.size());
  next.step_index += static_cast<std::size_t>(y_block.size());
  if (next.record_trajectory) next.beta_trajectory.push_back(sol.beta_hat);
  next.prior_underflow = state.prior_underflow || detail::any_zero(next.beta_prior);
  return next;
}

/// Single-observation update; identical to a block of size one.
inline StreamState update_step(const StreamState& state, double y_new, const Eigen::Ref<const Eigen::RowVectorXd>& x_new,
                               const Eigen::Ref<const Eigen::RowVectorXd>& error_support_row,
                               const UpdateSettings& settings) {
  if (static_cast<std::size_t>(x_new.size()) != state.num_params())
    throw DimensionError("x_new length must equal the number of coefficients");
  Eigen::VectorXd y(1);
  y[0] = y_new;
  return block_update(state, y, Eigen::MatrixXd(x_new), Eigen::MatrixXd(error_support_row), settings);
}

inline std::vector<double> entropy_production(const StreamState& state) { return state.entropy_ledger; }

// ---------------------------------------------------------------------------
// Whole-stream driver
// ---------------------------------------------------------------------------

struct SkippedBlock {
  std::size_t first = 0;  // index of the first observation in the block
  std::size_t count = 0;
  std::string reason;
};

struct StreamReport {
  Eigen::VectorXd beta_hat;
  std::optional<GceSolution> batch_solution;
  /// Aligned with the input observations; NaN where a block was skipped.
  std::vector<double> epsilon_hat;
  std::vector<double> entropy_ledger;
  std::vector<Eigen::VectorXd> beta_trajectory;
  std::vector<SkippedBlock> skipped;
  /// Batch solve converged and no block was dropped for non-convergence.
  bool converged = true;
  double batch_ms = 0.0;
  double stream_ms = 0.0;
  StreamState final_state;
};

/// Absorbs rows [first, n) in blocks of block_size starting from an existing
/// state; the last block carries any remainder. Blocks that are infeasible or
/// fail to converge are skipped and recorded.
inline StreamReport continue_stream(StreamState state, const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& error_support, std::size_t first, std::size_t block_size,
                                    const UpdateSettings& settings) {
  using clock = std::chrono::steady_clock;
  const auto n = static_cast<std::size_t>(y.size());
  if (x.rows() != y.size() || error_support.rows() != y.size()) throw DimensionError("stream inputs disagree on n");
  if (first > n) throw DimensionError("stream start beyond the dataset");
  if (block_size < 1) throw DimensionError("block size must be at least 1");
  settings.validate();

  StreamReport rep;
  rep.epsilon_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
  const auto t0 = clock::now();
  for (std::size_t start = first; start < n; start += block_size) {
    const std::size_t g = std::min(block_size, n - start);
    const auto f = static_cast<Eigen::Index>(start), gi = static_cast<Eigen::Index>(g);
    try {
      StreamState next = block_update(state, y.segment(f, gi), x.middleRows(f, gi), error_support.middleRows(f, gi), settings);
      const std::size_t produced_from = next.epsilon_log.size() - g;
      for (std::size_t k = 0; k < g; ++k) rep.epsilon_hat[start + k] = next.epsilon_log[produced_from + k];
      state = std::move(next);
    } catch (const InfeasibleError& e) {
      rep.skipped.push_back({start, g, e.what()});
    } catch (const ConvergenceError& e) {
      rep.skipped.push_back({start, g, e.what()});
      rep.converged = false;
    }
  }
  rep.stream_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  rep.beta_hat = state.beta_hat();
  rep.entropy_ledger = state.entropy_ledger;
  rep.beta_trajectory = state.beta_trajectory;
  rep.final_state = std::move(state);
  return rep;
}

/// Batch on the first batch_size rows (none when 0: start from uniform),
/// then blocks of block_size in order. x is the full design (intercept
/// column included if wanted) and error_support has one row per observation.
inline StreamReport run_stream(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::MatrixXd& beta_support,
                               const Eigen::MatrixXd& error_support, std::size_t batch_size, std::size_t block_size,
                               const UpdateSettings& settings, bool record_trajectory = true) {
  using clock = std::chrono::steady_clock;
  const auto n = static_cast<std::size_t>(y.size());
  if (x.rows() != y.size() || error_support.rows() != y.size()) throw DimensionError("stream inputs disagree on n");
  if (batch_size > n) throw DimensionError("batch larger than the dataset");
  settings.validate();

  const auto t0 = clock::now();
  StreamState state;
  std::optional<GceSolution> batch_solution;
  if (batch_size > 0) {
    const auto m = static_cast<Eigen::Index>(batch_size);
    GceProblem batch(y.head(m), x.topRows(m), SupportGrid(beta_support, error_support.topRows(m)));
    auto [s, sol] = init_stream(batch, settings, record_trajectory);
    state = std::move(s);
    batch_solution = std::move(sol);
  } else {
    state = uniform_stream(beta_support, record_trajectory);
  }
  const double batch_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

  StreamReport rep = continue_stream(std::move(state), y, x, error_support, batch_size, block_size, settings);
  if (batch_solution)
    for (std::size_t i = 0; i < batch_size; ++i)
      rep.epsilon_hat[i] = batch_solution->epsilon_hat[static_cast<Eigen::Index>(i)];
  rep.batch_solution = std::move(batch_solution);
  rep.batch_ms = batch_ms;
  return rep;
}

}  // namespace stregce

#endif  // STREGCE_STREAMING_HPP
