#include "ocpreg/analysis.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace {

using namespace ocpreg;

const double kInf = std::numeric_limits<double>::infinity();

Discretization gl8(const OcpSpec& s) {
  return Discretization::for_spec(s, extend_with_embedded(gauss_legendre(4)));
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

TEST(Analysis, ExactToyHasNoSimulationError) {
  OcpSpec s = minimal_example();
  s.N = 4;
  const Discretization d = gl8(s);
  const NlpProblem nlp = build_nlp(s, d, RegConfig::off());
  const Eigen::VectorXd w = initial_guess(s, d, InitPolicy::constant(0.0));
  const SimReport r = sim_error(nlp, w);
  EXPECT_LE(r.e_sim, 1e-12);
  EXPECT_EQ(r.per_interval.size(), 4u);
  EXPECT_EQ(r.x_sim.size(), 5u);
  EXPECT_NEAR(r.j_sim, 0.0, 1e-12);
  for (const auto& iv : r.per_interval) EXPECT_EQ(iv.slack_min, kInf);
}

TEST(Analysis, SpuriousSolutionSimulatesBadly) {
  const OcpSpec s = minimal_example();
  const Discretization d = gl8(s);
  const NlpProblem nlp = build_nlp(s, d, RegConfig::off());
  const Solution sol = solve(nlp, initial_guess(s, d, InitPolicy::constant(10.0)));
  ASSERT_EQ(sol.status, SolveStatus::kConverged);
  const SimReport r = sim_error(sol, s, d, Eigen::VectorXd());
  // reported objective 1 - R(-30) against the simulated 1 - exp(-30)
  EXPECT_NEAR(sol.objective, 1.0 - oracle::pade44(-30.0), 1e-8);
  EXPECT_LT(sol.objective, 0.8);
  EXPECT_NEAR(r.j_sim, 1.0, 1e-9);
  EXPECT_GT(r.e_sim, 0.25);
  // both endpoints of the pair are far from the exact decay at h u = 30
  EXPECT_GT(r.per_interval[0].e_hat_norm, 0.1);
  EXPECT_GT(r.per_interval[0].true_err_norm, 0.1);
  EXPECT_EQ(r.solution_ref.model, "minimal");
}

TEST(Analysis, ReportSlackWithRegularizer) {
  const OcpSpec s = minimal_example();
  const Discretization d = Discretization::for_spec(s, heun_euler());
  RegConfig reg;
  reg.e_max = 0.2;
  const NlpProblem nlp = build_nlp(s, d, reg);
  const SimReport r = sim_error(nlp, initial_guess(s, d, InitPolicy::constant(10.0)));
  EXPECT_NEAR(r.per_interval[0].e_hat_norm, 50.0, 1e-12);
  EXPECT_NEAR(r.per_interval[0].slack_min, 0.2 - 50.0, 1e-12);
}

TEST(Analysis, SweepOffSentinelMatchesPlainSolve) {
  const OcpSpec s = minimal_example();
  const Discretization d = gl8(s);
  SweepOptions o;
  o.init = InitPolicy::constant(10.0);
  const auto rows = sweep_emax(s, d, {kInf}, o);
  ASSERT_EQ(rows.size(), 1u);
  const NlpProblem nlp = build_nlp(s, d, RegConfig::off());
  const Solution sol = solve(nlp, initial_guess(s, d, o.init));
  EXPECT_EQ(rows[0].w, sol.w_star);
  EXPECT_EQ(rows[0].J, sol.objective);
  EXPECT_EQ(rows[0].phi, 0.0);
  EXPECT_EQ(rows[0].status, "converged");
}

TEST(Analysis, SweepRemovesSpuriousSolution) {
  const OcpSpec s = minimal_example();
  const Discretization d = gl8(s);
  SweepOptions o;
  o.init = InitPolicy::constant(10.0);
  const auto rows = sweep_emax(s, d, {0.2}, o);
  ASSERT_EQ(rows.size(), 1u);
  const NlpProblem nlp = build_nlp(s, d, RegConfig::off());
  EXPECT_NEAR(nlp.controls(rows[0].w)(0, 0), 0.0, 1e-4);
}

TEST(Analysis, SweepOrderAndColdStartAgree) {
  const OcpSpec s = minimal_example();
  const Discretization d = gl8(s);
  SweepOptions o;
  o.init = InitPolicy::constant(0.0);
  o.cold_start = true;
  o.jobs = 3;
  const auto par = sweep_emax(s, d, {0.2, kInf, 1.0}, o);
  ASSERT_EQ(par.size(), 3u);
  EXPECT_EQ(par[0].e_max, kInf);
  EXPECT_EQ(par[1].e_max, 1.0);
  EXPECT_EQ(par[2].e_max, 0.2);
  o.jobs = 1;
  const auto seq = sweep_emax(s, d, {0.2, kInf, 1.0}, o);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(par[i].w, seq[i].w);
}

TEST(Analysis, SweepRejectsBadValues) {
  const OcpSpec s = minimal_example();
  EXPECT_THROW(sweep_emax(s, gl8(s), {}, {}), AnalysisError);
  EXPECT_THROW(sweep_emax(s, gl8(s), {-1.0}, {}), AnalysisError);
}

TEST(Analysis, ScanShapes) {
  const OcpSpec s = minimal_example();
  const Discretization d = gl8(s);
  const auto grid = linear_grid(0.0, 30.0, 301);
  ASSERT_EQ(grid.size(), 301u);
  const auto plain = feasible_set_scan(s, d, grid);
  ASSERT_EQ(plain.size(), 301u);
  EXPECT_EQ(plain.front().J, 0.0);
  EXPECT_EQ(plain.front().e_hat_norm, 0.0);
  // J over the scan equals 1 - R(-u) of the Pade approximant
  for (const auto& r : plain) EXPECT_NEAR(r.J, 1.0 - oracle::pade44(-r.u), 1e-12);
  std::size_t peak = 0;
  for (std::size_t i = 1; i < plain.size(); ++i)
    if (plain[i].J > plain[peak].J) peak = i;
  EXPECT_GT(peak, 0u);
  EXPECT_LT(peak, plain.size() - 1);
  EXPECT_LT(plain.back().J, plain[peak].J);
  for (double q : {1.0, 2.0}) {
    RegConfig reg;
    reg.e_max = 0.2;
    reg.q = q;
    const auto with = feasible_set_scan(s, d, grid, reg);
    EXPECT_GT(with.back().J_reg, with.front().J_reg);
  }
}

TEST(Analysis, ScanSinglePointAndUnsupported) {
  const OcpSpec s = minimal_example();
  const auto one = feasible_set_scan(s, gl8(s), linear_grid(3.0, 30.0, 1));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].u, 3.0);
  const OcpSpec c = catalyst_mixing();
  EXPECT_THROW(feasible_set_scan(c, Discretization::for_spec(c, fehlberg45()), {0.5}),
               AnalysisError);
}

TEST(Analysis, CsvHeaders) {
  std::ostringstream a, b, c;
  write_sweep_csv(a, {SweepRow{kInf, 1.0, 0.0, 1.0, 0.5, 3, "converged", {}}});
  write_scan_csv(b, {});
  SimReport rep;
  rep.per_interval.push_back({0, 1.0, 2.0, kInf});
  write_report_csv(c, rep);
  EXPECT_EQ(first_line(a.str()), "e_max,J,phi,J_sim,E_sim,iters,status");
  EXPECT_EQ(first_line(b.str()), "u,J,J_reg,e_hat_norm,true_err_norm");
  EXPECT_EQ(first_line(c.str()), "k,e_hat_norm,true_err_norm,slack_min");
  EXPECT_NE(a.str().find("inf,1,0,1,0.5,3,converged"), std::string::npos);
  EXPECT_NE(c.str().find("0,1,2,inf"), std::string::npos);
}

class CatalystSolves : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spec_ = new OcpSpec(catalyst_mixing());
    disc_ = new Discretization(Discretization::for_spec(*spec_, fehlberg45()));
    RegConfig reg;
    reg.e_max = 1e-2;
    nlp_ = new NlpProblem(build_nlp(*spec_, *disc_, reg));
    SolverConfig cfg;
    cfg.tol_feasibility = 1e-10;
    sol_ = new Solution(
        solve(*nlp_, initial_guess(*spec_, *disc_, InitPolicy::constant(0.5)), cfg));
  }
  static void TearDownTestSuite() {
    delete sol_;
    delete nlp_;
    delete disc_;
    delete spec_;
  }
  static OcpSpec* spec_;
  static Discretization* disc_;
  static NlpProblem* nlp_;
  static Solution* sol_;
};
OcpSpec* CatalystSolves::spec_ = nullptr;
Discretization* CatalystSolves::disc_ = nullptr;
NlpProblem* CatalystSolves::nlp_ = nullptr;
Solution* CatalystSolves::sol_ = nullptr;

TEST_F(CatalystSolves, LiftingConsistency) {
  ASSERT_EQ(sol_->status, SolveStatus::kConverged);
  const Eigen::MatrixXd nodes = nlp_->nodes(sol_->w_star);
  const Eigen::MatrixXd u = nlp_->controls(sol_->w_star);
  Eigen::VectorXd x = spec_->x0;
  const double h = nlp_->step(sol_->w_star);
  for (int k = 0; k < spec_->N; ++k) {
    x = rk_step(spec_->model, disc_->pair.base, x, u.col(k), h).x_next;
    EXPECT_LE((x - nodes.col(k + 1)).cwiseAbs().maxCoeff(), 1e-8 * spec_->N) << k;
  }
}

TEST_F(CatalystSolves, EstimateTracksTrueError) {
  ASSERT_EQ(sol_->status, SolveStatus::kConverged);
  const SimReport r = sim_error(*nlp_, sol_->w_star);
  int checked = 0;
  for (const auto& iv : r.per_interval) {
    // estimates at rounding level carry no information
    if (iv.e_hat_norm > 1e-2 * spec_->omega.norm() || iv.e_hat_norm < 1e-11) continue;
    ++checked;
    EXPECT_LE(iv.e_hat_norm, 4.0 * iv.true_err_norm) << iv.k;
    EXPECT_LE(iv.true_err_norm, 4.0 * iv.e_hat_norm) << iv.k;
    EXPECT_GE(iv.slack_min, -1e-8) << iv.k;
  }
  EXPECT_GT(checked, 0);
}

TEST_F(CatalystSolves, InvariantAtNodes) {
  const Eigen::MatrixXd nodes = nlp_->nodes(sol_->w_star);
  for (Eigen::Index k = 0; k < nodes.cols(); ++k) EXPECT_NEAR(nodes.col(k).sum(), 1.0, 1e-8);
}

}  // namespace

namespace {

TEST(AnalysisSlow, CatalystSweepTradesObjectiveForAccuracy) {
  const OcpSpec s = catalyst_mixing();
  SweepOptions o;
  o.init = InitPolicy::constant(0.5);
  const auto rows =
      sweep_emax(s, Discretization::for_spec(s, fehlberg45()), {1e-3, 1e-2, 1e-1, 1, 10, 100}, o);
  ASSERT_EQ(rows.size(), 6u);
  int inversions = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].status, "converged") << rows[i].e_max;
    if (rows[i].E_sim > rows[i - 1].E_sim) ++inversions;
  }
  EXPECT_LE(inversions, 1);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

}  // namespace
