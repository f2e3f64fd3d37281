#include "ocpreg/nlpsolve.hpp"
#include "ocpreg/transcribe.hpp"
#include "qp_library.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace {

using namespace ocpreg;

TEST(NlpSolve, PlantedOptimaAreKktPoints) {
  // the oracle itself: planted points satisfy feasibility
  for (const auto& p : qp::library()) {
    EXPECT_LT(p.eq_residuals(p.x_star).cwiseAbs().maxCoeff(), 1e-12) << p.name;
    EXPECT_TRUE((p.x_star.array() >= p.lo.array()).all() && (p.x_star.array() <= p.hi.array()).all());
  }
}

TEST(NlpSolve, QuadraticLibrary) {
  for (const auto& p : qp::library()) {
    const Solution s = solve(p, Eigen::VectorXd::Zero(p.num_vars()));
    EXPECT_EQ(s.status, SolveStatus::kConverged) << p.name << ": " << s.message;
    EXPECT_LT((s.w_star - p.x_star).cwiseAbs().maxCoeff(), 1e-6) << p.name;
    EXPECT_LE(s.kkt.stationarity, 1e-8) << p.name;
    EXPECT_LE(s.kkt.feasibility, 1e-8) << p.name;
  }
}

TEST(NlpSolve, FeasibilityMostlyDecreases) {
  int steps = 0, monotone = 0;
  for (const auto& p : qp::library()) {
    const Solution s = solve(p, Eigen::VectorXd::Constant(p.num_vars(), 1.5));
    for (std::size_t i = 1; i < s.history.size(); ++i) {
      ++steps;
      if (s.history[i].feasibility <= s.history[i - 1].feasibility * (1 + 1e-12) ||
          s.history[i].feasibility <= 1e-8)
        ++monotone;
    }
  }
  ASSERT_GT(steps, 0);
  EXPECT_GE(static_cast<double>(monotone) / steps, 0.9);
}

TEST(NlpSolve, Deterministic) {
  const auto lib = qp::library();
  const auto& p = lib[7];
  const Eigen::VectorXd w0 = Eigen::VectorXd::Constant(p.num_vars(), 0.3);
  const Solution a = solve(p, w0);
  const Solution b = solve(p, w0);
  EXPECT_EQ(a.w_star, b.w_star);
  EXPECT_EQ(a.multipliers, b.multipliers);
  EXPECT_EQ(a.inner_iterations, b.inner_iterations);
}

TEST(NlpSolve, KktResidualsOfKnownPoints) {
  const auto lib = qp::library();
  const auto& proj = lib[0];
  // at (0.5, 0.5) grad f = (1, 1) = lambda * (1, 1)
  KktResiduals r = kkt_residuals(proj, proj.x_star, Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(r.stationarity, 0.0, 1e-15);
  EXPECT_NEAR(r.feasibility, 0.0, 1e-15);
  r = kkt_residuals(proj, Eigen::Vector2d(1.0, 0.5), Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(r.feasibility, 0.5, 1e-15);
  EXPECT_NEAR(r.stationarity, 1.0, 1e-15);
  // bound-clipped: (1, 1) with lambda = 0 and grad f = (-2, -2) pushing into the upper bound
  const auto& clip = lib[1];
  r = kkt_residuals(clip, clip.x_star, Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(r.stationarity, 0.0, 1e-15);
  EXPECT_NEAR(r.complementarity, 0.0, 1e-15);
}

TEST(NlpSolve, MinimalExampleSolves) {
  const OcpSpec s = minimal_example();
  const Discretization d = Discretization::for_spec(s, extend_with_embedded(gauss_legendre(4)));
  const NlpProblem plain = build_nlp(s, d, RegConfig::off());
  const Solution from0 = solve(plain, initial_guess(s, d, InitPolicy::constant(0.0)));
  EXPECT_EQ(from0.status, SolveStatus::kConverged);
  EXPECT_NEAR(plain.controls(from0.w_star)(0, 0), 0.0, 1e-6);
  const Solution from10 = solve(plain, initial_guess(s, d, InitPolicy::constant(10.0)));
  EXPECT_EQ(from10.status, SolveStatus::kConverged);
  EXPECT_NEAR(plain.controls(from10.w_star)(0, 0), 30.0, 1e-6);
  // the spurious point is a strictly worse local minimum
  EXPECT_GT(from10.objective, from0.objective + 0.5);
  RegConfig reg;
  reg.e_max = 0.2;
  const NlpProblem regd = build_nlp(s, d, reg);
  const Solution r10 = solve(regd, initial_guess(s, d, InitPolicy::constant(10.0)));
  EXPECT_EQ(r10.status, SolveStatus::kConverged);
  EXPECT_NEAR(regd.controls(r10.w_star)(0, 0), 0.0, 1e-6);
}

TEST(NlpSolve, LogHasOneLinePerOuterIteration) {
  const auto lib = qp::library();
  std::ostringstream log;
  const Solution s = solve(lib[3], Eigen::VectorXd::Zero(lib[3].num_vars()), {}, &log);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "outer,inner,J,phi,feas,stat,rho");
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
  }
  EXPECT_EQ(lines, s.outer_iterations);
}

TEST(NlpSolve, ConfigValidation) {
  EXPECT_NO_THROW(SolverConfig{}.validate());
  auto bad = [](auto mutate) {
    SolverConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](SolverConfig& c) { c.tol_stationarity = 0.0; });
  bad([](SolverConfig& c) { c.tol_feasibility = -1.0; });
  bad([](SolverConfig& c) { c.max_outer = 0; });
  bad([](SolverConfig& c) { c.penalty_growth = 1.0; });
  bad([](SolverConfig& c) { c.memory = 0; });
  bad([](SolverConfig& c) { c.initial_penalty = 0.0; });
}

TEST(NlpSolve, RejectsWrongStartDimension) {
  const auto lib = qp::library();
  EXPECT_THROW(solve(lib[0], Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(NlpSolve, StatusNames) {
  EXPECT_EQ(to_string(SolveStatus::kConverged), "converged");
  EXPECT_NE(to_string(SolveStatus::kMaxIterations), to_string(SolveStatus::kInnerFailure));
}

}  // namespace
