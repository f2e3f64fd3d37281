#pragma once

#include "ocpreg/integrate.hpp"
#include "ocpreg/nlpsolve.hpp"
#include "ocpreg/transcribe.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocpreg {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntervalReport {
  int k = 0;
  double e_hat_norm = 0.0;     // ||e_hat_k||_2
  double true_err_norm = 0.0;  // ||embedded endpoint - reference||_2, started from x_k
  double slack_min = 0.0;      // min_c (E_max - |e_hat_k|)_c, +inf with the regularizer off
};

struct SolutionRef {
  std::string model;
  std::string tableau;
  int N = 0;
  double e_max = 0.0;
  double p = 2.0;
  double q = 2.0;
  std::string init;
};

struct SimReport {
  double e_sim = 0.0;  // (1/N) sum_k ||Omega^-1 (x_sim(t_{k+1}) - x_{k+1})||_2
  double j_sim = 0.0;  // Mayer + re-integrated Lagrange term along x_sim
  std::vector<IntervalReport> per_interval;
  std::vector<Eigen::VectorXd> x_sim;  // simulated states at the shooting nodes
  SolutionRef solution_ref;
};

/// Re-simulates the solved controls from x0 with the reference simulator.
/// `omega` empty selects the OCP default weights.
SimReport sim_error(const NlpProblem& nlp, const Eigen::VectorXd& w,
                    const Eigen::VectorXd& omega = {}, double rtol = 1e-10);

SimReport sim_error(const Solution& sol, const OcpSpec& spec, const Discretization& disc,
                    const Eigen::VectorXd& omega, const RegConfig& reg = RegConfig::off());

struct SweepOptions {
  RegConfig reg;  // omega, p, q; e_max is overwritten per row
  InitPolicy init;
  SolverConfig solver;
  bool cold_start = false;
  int jobs = 1;  // cold start only
};

struct SweepRow {
  double e_max = 0.0;
  double J = 0.0;
  double phi = 0.0;
  double J_sim = 0.0;
  double E_sim = 0.0;
  int iters = 0;
  std::string status;
  Eigen::VectorXd w;
};

/// One solve per value, infinity meaning "regularizer off". Rows come back in
/// descending e_max order; warm starts chain along that order.
std::vector<SweepRow> sweep_emax(const OcpSpec& spec, const Discretization& disc,
                                 std::vector<double> values, const SweepOptions& opts);

struct ScanRow {
  double u = 0.0;
  double J = 0.0;
  double J_reg = 0.0;
  double e_hat_norm = 0.0;
  double true_err_norm = 0.0;  // propagated method endpoint vs reference
  bool ok = true;
};

/// Objective over the feasible set of a problem with a single control value.
std::vector<ScanRow> feasible_set_scan(const OcpSpec& spec, const Discretization& disc,
                                       const std::vector<double>& u_grid,
                                       const RegConfig& reg = RegConfig::off());

/// n points from lo to hi inclusive; n = 1 gives {lo}.
std::vector<double> linear_grid(double lo, double hi, int n);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
void write_scan_csv(std::ostream& os, const std::vector<ScanRow>& rows);
void write_report_csv(std::ostream& os, const SimReport& report);

}  // namespace ocpreg
