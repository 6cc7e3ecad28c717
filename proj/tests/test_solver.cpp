#include "oracles.hpp"
#include "stregce/simulation.hpp"
#include "stregce/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace stregce;

namespace {

GceProblem two_point_problem(double y) {
  Eigen::MatrixXd zb(1, 2), ze(1, 2), x(1, 1);
  zb << 0.0, 1.0;
  ze << -1.0, 1.0;
  x << 1.0;
  Eigen::VectorXd yy(1);
  yy << y;
  return GceProblem(yy, x, SupportGrid(zb, ze));
}

void expect_gibbs_consistent(const GceProblem& p, const GceSolution& s) {
  const JointDistribution g = gibbs_weights(s.multipliers, p);
  for (std::size_t j = 0; j < g.beta_rows.size(); ++j)
    EXPECT_LE((g.beta_rows[j].weights() - s.distributions.beta_rows[j].weights()).cwiseAbs().maxCoeff(), 1e-10);
  for (std::size_t i = 0; i < g.error_rows.size(); ++i)
    EXPECT_LE((g.error_rows[i].weights() - s.distributions.error_rows[i].weights()).cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace

TEST(Problem, DimensionChecks) {
  Eigen::MatrixXd zb(1, 2), ze(2, 2), x(2, 1);
  zb << 0, 1;
  ze << -1, 1, -1, 1;
  x << 1, 2;
  EXPECT_THROW(GceProblem(Eigen::VectorXd(), Eigen::MatrixXd(0, 1), SupportGrid(zb, Eigen::MatrixXd(0, 2))),
               DimensionError);
  EXPECT_THROW(GceProblem(Eigen::VectorXd::Zero(3), x, SupportGrid(zb, ze)), DimensionError);
  EXPECT_THROW(GceProblem(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Ones(2, 2), SupportGrid(zb, ze)), DimensionError);
  EXPECT_THROW(GceProblem(Eigen::VectorXd::Zero(2), x, SupportGrid(zb, ze), std::nullopt, 0.0, 1.0), Error);
  EXPECT_NO_THROW(GceProblem(Eigen::VectorXd::Zero(2), x, SupportGrid(zb, ze)));
}

TEST(Gibbs, ZeroMultipliersGivePrior) {
  std::mt19937_64 gen(1);
  const auto pb = oracle::random_problem(gen, 3, 2, 3, 3);
  const GceProblem p = pb.to_library();
  const auto d = gibbs_weights(Eigen::VectorXd::Zero(3), p);
  for (std::size_t j = 0; j < 2; ++j)
    EXPECT_LE((d.beta_rows[j].weights() - p.prior().beta_rows[j].weights()).cwiseAbs().maxCoeff(), 1e-15);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LE((d.error_rows[i].weights() - p.prior().error_rows[i].weights()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gibbs, TwoPointClosedForm) {
  const GceProblem p = two_point_problem(0.3);
  Eigen::VectorXd lambda(1);
  lambda << std::log(3.0);
  const auto d = gibbs_weights(lambda, p);
  // exp(-z * ln3) over z = {0, 1}: {1, 1/3} -> {3/4, 1/4}
  EXPECT_NEAR(d.beta_rows[0][0], 0.75, 1e-15);
  EXPECT_NEAR(d.beta_rows[0][1], 0.25, 1e-15);
  // exp(-z * ln3) over z = {-1, 1}: {3, 1/3} -> {9/10, 1/10}
  EXPECT_NEAR(d.error_rows[0][0], 0.9, 1e-15);
  EXPECT_NEAR(d.error_rows[0][1], 0.1, 1e-15);
}

TEST(Gibbs, RejectsBadMultipliers) {
  const GceProblem p = two_point_problem(0.3);
  EXPECT_THROW(gibbs_weights(Eigen::VectorXd::Zero(2), p), DimensionError);
  Eigen::VectorXd bad(1);
  bad << std::numeric_limits<double>::infinity();
  EXPECT_THROW(gibbs_weights(bad, p), NumericError);
}

TEST(Dual, ValueAtZeroIsLogCardinalities) {
  std::mt19937_64 gen(2);
  const auto pb = oracle::random_problem(gen, 3, 2, 3, 2, true);
  const auto e = dual_objective(Eigen::VectorXd::Zero(3), pb.to_library());
  // lambda . y vanishes; each log-partition is ln of the support size.
  EXPECT_NEAR(e.value, 2 * std::log(3.0) + 3 * std::log(2.0), 1e-12);
}

TEST(Dual, GradientAtZeroWithSymmetricSupports) {
  Eigen::MatrixXd zb(2, 5), ze(3, 3), x(3, 2);
  for (int j = 0; j < 2; ++j) zb.row(j) << -100, -50, 0, 50, 100;
  for (int i = 0; i < 3; ++i) ze.row(i) << -3, 0, 3;
  x << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXd y(3);
  y << 0.5, -1.25, 2.0;
  const auto e = dual_objective(Eigen::VectorXd::Zero(3), GceProblem(y, x, SupportGrid(zb, ze)));
  EXPECT_LE((e.gradient - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dual, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + t % 4, J = 1 + t % 2;
    const auto pb = oracle::random_problem(gen, m, J, 2 + t % 2, 2 + (t / 2) % 2);
    const GceProblem p = pb.to_library();
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(m));
    for (auto& v : lambda) v = n01(gen);
    const auto e = dual_objective(lambda, p);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      Eigen::VectorXd lp = lambda, lm = lambda;
      lp[i] += h;
      lm[i] -= h;
      const double fd = (dual_objective(lp, p).value - dual_objective(lm, p).value) / (2 * h);
      EXPECT_LE(std::abs(fd - e.gradient[i]), 1e-5 * std::max(1.0, std::abs(e.gradient[i])))
          << "problem " << t << " coordinate " << i;
    }
  }
}

TEST(Dual, ConvexAlongRandomDirections) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + t % 4;
    const auto pb = oracle::random_problem(gen, m, 1 + t % 2, 3, 3);
    const GceProblem p = pb.to_library();
    Eigen::VectorXd l0(static_cast<Eigen::Index>(m)), d(static_cast<Eigen::Index>(m));
    for (auto& v : l0) v = 2 * n01(gen);
    for (auto& v : d) v = n01(gen);
    const double s = 0.5 + std::abs(n01(gen));
    const double f0 = dual_objective(l0 - s * d, p).value;
    const double f1 = dual_objective(l0, p).value;
    const double f2 = dual_objective(l0 + s * d, p).value;
    EXPECT_LE(f1, 0.5 * (f0 + f2) + 1e-9);
  }
}

TEST(Dual, LargeArgumentsStayFinite) {
  Eigen::MatrixXd zb(1, 5), ze(1, 3), x(1, 1);
  zb << -100, -50, 0, 50, 100;
  ze << -3, 0, 3;
  x << 20;
  Eigen::VectorXd l(1);
  l << 400.0;
  const auto e = dual_objective(l, GceProblem(Eigen::VectorXd::Constant(1, 5.0), x, SupportGrid(zb, ze)));
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_TRUE(e.gradient.allFinite());
}

TEST(Solve, TwoPointScalarAgainstGrid) {
  // J = 1, K = 2, H = 2, m = 1: p^b = (1 - a, a) and p^e = (1 - b, b) with
  // a + (2b - 1) = y. Scan a on a fine grid, then refine.
  const double y = 0.3;
  const GceProblem p = two_point_problem(y);
  const GceSolution sol = solve_gce(p);
  ASSERT_TRUE(sol.diagnostics.converged);

  auto obj = [&](double a) {
    const double b = (y - a + 1.0) / 2.0;
    if (b < 0 || b > 1) return std::numeric_limits<double>::infinity();
    return oracle::kl({1 - a, a}, {0.5, 0.5}) + oracle::kl({1 - b, b}, {0.5, 0.5});
  };
  double best_a = 0.0, best = obj(0.0);
  for (int k = 1; k <= 10000; ++k)
    if (const double v = obj(k * 1e-4); v < best) best = v, best_a = k * 1e-4;
  for (double h = 1e-4; h > 1e-12; h *= 0.5)
    for (double cand : {best_a - h, best_a + h})
      if (const double v = obj(cand); v < best) best = v, best_a = cand;
  EXPECT_NEAR(sol.beta_hat[0], best_a, 1e-6);
  EXPECT_LE(sol.objective_value, best + 1e-12);
}

TEST(Solve, MatchesPrimalOracleOnRandomProblems) {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = 1 + t % 4, J = 1 + (t / 4) % 2, K = 2 + t % 2, H = 2 + (t / 2) % 2;
    const auto pb = oracle::random_problem(gen, m, J, K, H);
    const GceProblem p = pb.to_library();
    const GceSolution sol = solve_gce(p);
    ASSERT_TRUE(sol.diagnostics.converged) << "problem " << t;
    const auto ref = oracle::primal_search(pb);
    for (Eigen::Index j = 0; j < sol.beta_hat.size(); ++j)
      EXPECT_NEAR(sol.beta_hat[j], ref.beta_hat[j], 5e-3) << "problem " << t;
    EXPECT_LE(sol.objective_value, ref.objective + 1e-6) << "problem " << t;
  }
}

TEST(Solve, KktConditions) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 50; ++t) {
    const auto pb = oracle::random_problem(gen, 1 + t % 6, 1 + t % 3, 2 + t % 4, 2 + t % 3);
    const GceProblem p = pb.to_library();
    const GceSolution sol = solve_gce(p);
    ASSERT_TRUE(sol.diagnostics.converged);
    EXPECT_LE(constraint_residual(p, sol.beta_hat, sol.epsilon_hat).cwiseAbs().maxCoeff(), 1e-8);
    expect_gibbs_consistent(p, sol);
    const auto g = dual_objective(sol.multipliers, p).gradient;
    EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Solve, PriorAlreadyFeasible) {
  Eigen::MatrixXd zb(2, 3), ze(2, 3), x(2, 2);
  zb << -1, 0, 2, -1, 1, 3;
  ze << -2, 0, 2, -2, 0, 2;
  x << 1.5, -0.5, 2.0, 1.0;
  // Priors with means 0.3 and 1.2 for the coefficients and 0 for errors.
  JointDistribution prior;
  prior.beta_rows = {SimplexDistribution({0.3, 0.4, 0.3}), SimplexDistribution({0.35, 0.35, 0.3})};
  prior.error_rows.assign(2, SimplexDistribution({0.25, 0.5, 0.25}));
  Eigen::VectorXd b(2);
  b << expectation(prior.beta_rows[0], zb.row(0)), expectation(prior.beta_rows[1], zb.row(1));
  const Eigen::VectorXd y = x * b;
  const GceSolution sol = solve_gce(GceProblem(y, x, SupportGrid(zb, ze), prior));
  EXPECT_TRUE(sol.diagnostics.converged);
  EXPECT_EQ(sol.diagnostics.iterations, 0);
  EXPECT_EQ(sol.multipliers.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sol.objective_value, 0.0);
}

TEST(Solve, InfeasibleNamesObservation) {
  Eigen::MatrixXd zb(1, 2), ze(3, 2), x(3, 1);
  zb << 0, 1;
  ze << -1, 1, -1, 1, -1, 1;
  x << 1, 1, 1;
  Eigen::VectorXd y(3);
  y << 0.5, 2.5, 0.0;
  try {
    solve_gce(GceProblem(y, x, SupportGrid(zb, ze)));
    FAIL() << "expected InfeasibleError";
  } catch (const BoundaryError&) {
    FAIL() << "reported as boundary";
  } catch (const InfeasibleError& e) {
    EXPECT_EQ(e.observation(), 1u);
  }
  y[1] = 2.0;  // exactly the hull maximum
  EXPECT_THROW(solve_gce(GceProblem(y, x, SupportGrid(zb, ze))), BoundaryError);
}

TEST(Solve, IterationCapReportsNotConverged) {
  std::mt19937_64 gen(7);
  const auto pb = oracle::random_problem(gen, 4, 2, 3, 3);
  SolverSettings s;
  s.max_iterations = 1;
  s.constraint_tolerance = 1e-14;
  const GceSolution sol = solve_gce(pb.to_library(), s);
  EXPECT_FALSE(sol.diagnostics.converged);
  const GceProblem single = two_point_problem(0.3);
  EXPECT_FALSE(solve_gce(single, s).diagnostics.converged);
}

TEST(Solve, ObserverSeesEverySolve) {
  int calls = 0;
  SolverSettings s;
  s.observer = [&](const GceProblem&, const GceSolution& sol) {
    ++calls;
    EXPECT_TRUE(sol.diagnostics.converged);
  };
  solve_gce(two_point_problem(0.1), s);
  solve_gce(two_point_problem(-0.4), s);
  EXPECT_EQ(calls, 2);
}

TEST(Solve, FullScaleProblemStaysFinite) {
  SimulationConfig cfg;
  cfg.n = 480;
  cfg.seed = 42;
  const Dataset d = generate_dataset(cfg);
  const auto es = build_error_support(d.y);
  const Eigen::MatrixXd x = design_matrix(d.x, true);
  const GceProblem p(d.y, x, SupportGrid::replicated(cfg.beta_support, 4, es, cfg.n));
  const GceSolution sol = solve_gce(p);
  EXPECT_TRUE(sol.diagnostics.converged);
  EXPECT_EQ(sol.diagnostics.nonfinite_evaluations, 0);
  for (const auto& r : sol.distributions.beta_rows) EXPECT_TRUE(r.weights().allFinite());
  expect_gibbs_consistent(p, sol);
}

TEST(Solve, PerfectCollinearityConverges) {
  SimulationConfig cfg;
  cfg.n = 240;
  cfg.eta = 1.0;
  cfg.seed = 9;
  const Dataset d = generate_dataset(cfg);
  const GceProblem p(d.y, design_matrix(d.x, true),
                     SupportGrid::replicated(cfg.beta_support, 4, build_error_support(d.y), cfg.n));
  const GceSolution sol = solve_gce(p);
  EXPECT_TRUE(sol.diagnostics.converged);
  EXPECT_LE(sol.diagnostics.max_residual, 1e-8);
}
