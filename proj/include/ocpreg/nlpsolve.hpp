#pragma once

#include <Eigen/Core>

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace ocpreg {

/// min f(w)  s.t.  c_eq(w) = 0,  c_in(w) >= 0,  lo <= w <= hi.
///
/// Derivatives are exact first derivatives; no second-order information is
/// requested.
class SmoothNlp {
 public:
  virtual ~SmoothNlp() = default;

  virtual Eigen::Index num_vars() const = 0;
  virtual Eigen::Index num_eq() const = 0;
  virtual Eigen::Index num_ineq() const { return 0; }

  virtual Eigen::VectorXd lower_bounds() const = 0;
  virtual Eigen::VectorXd upper_bounds() const = 0;

  virtual double objective(const Eigen::VectorXd& w) const = 0;
  virtual Eigen::VectorXd objective_gradient(const Eigen::VectorXd& w) const = 0;

  virtual Eigen::VectorXd eq_residuals(const Eigen::VectorXd& w) const = 0;
  virtual Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd& w) const = 0;

  virtual Eigen::VectorXd ineq_residuals(const Eigen::VectorXd& /*w*/) const {
    return Eigen::VectorXd(0);
  }
  virtual Eigen::MatrixXd ineq_jacobian(const Eigen::VectorXd& /*w*/) const {
    return Eigen::MatrixXd(0, num_vars());
  }

  /// Part of objective() reported separately as "phi" (zero by default).
  virtual double regularization(const Eigen::VectorXd& /*w*/) const { return 0.0; }
};

struct SolverConfig {
  double tol_stationarity = 1e-8;
  double tol_feasibility = 1e-8;
  int max_outer = 60;
  int max_inner = 400;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double max_penalty = 1e12;
  int memory = 20;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;

  /// Throws std::invalid_argument on nonpositive fields or growth <= 1.
  void validate() const;
};

enum class SolveStatus { kConverged, kMaxIterations, kInnerFailure };

std::string to_string(SolveStatus s);

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

struct IterationLog {
  int outer = 0;
  int inner = 0;
  double objective = 0.0;  // f(w) - phi(w)
  double phi = 0.0;
  double feasibility = 0.0;
  double stationarity = 0.0;
  double penalty = 0.0;
};

struct Solution {
  Eigen::VectorXd w_star;
  Eigen::VectorXd multipliers;       // equality constraints
  Eigen::VectorXd ineq_multipliers;  // >= 0 at a KKT point
  KktResiduals kkt;
  SolveStatus status = SolveStatus::kMaxIterations;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double objective = 0.0;  // f(w*) - phi(w*)
  double phi = 0.0;
  std::vector<IterationLog> history;
  std::string message;
};

/// Residuals of the first-order conditions with the Lagrangian
///   L = f - lambda^T c_eq - mu^T c_in.
/// stationarity: inf-norm of P(w - grad L) - w, P the projection on the box;
/// feasibility: inf-norm of c_eq and of the negative part of c_in;
/// complementarity: inf-norm of min(gap, implied bound multiplier) over
/// bounds and of min(c_in, mu) over inequalities.
KktResiduals kkt_residuals(const SmoothNlp& nlp, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& multipliers,
                           const Eigen::VectorXd& ineq_multipliers = Eigen::VectorXd());

/// Augmented-Lagrangian solve with projected limited-memory quasi-Newton
/// inner iterations. Deterministic: identical inputs give identical iterates.
/// If `log` is non-null a CSV line `outer,inner,J,phi,feas,stat,rho` is
/// written per outer iteration.
Solution solve(const SmoothNlp& nlp, const Eigen::VectorXd& w0, const SolverConfig& cfg = {},
               std::ostream* log = nullptr);

}  // namespace ocpreg
