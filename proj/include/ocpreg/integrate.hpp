#pragma once

#include "ocpreg/models.hpp"
#include "ocpreg/tableau.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

namespace ocpreg {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newton failed on the implicit stage equations.
class NewtonError : public IntegrationError {
 public:
  NewtonError(const std::string& what, double residual)
      : IntegrationError(what), residual(residual) {}
  double residual;
};

struct NewtonOptions {
  double tol = 1e-12;  // on the scaled residual, scale = 1 + |x_k|
  int max_iters = 50;
  int max_halvings = 10;
};

/// One Runge-Kutta step. Column i of `stages_k` / `z` is stage i.
struct StepResult {
  Eigen::VectorXd x_next;
  Eigen::MatrixXd stages_k;
  Eigen::MatrixXd z;
  int newton_iters = 0;
};

StepResult rk_step(const OdeModel& model, const Tableau& tableau, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u, double h, const NewtonOptions& opts = {});

/// e_hat = h * sum_i (b_hat_i - b_i) k_i
Eigen::VectorXd embedded_estimate(const StepResult& step, const EmbeddedTableau& pair, double h);

/// x + h * sum_i b_hat_i k_i, the endpoint of the embedded method.
Eigen::VectorXd embedded_endpoint(const Eigen::VectorXd& x, const StepResult& step,
                                  const EmbeddedTableau& pair, double h);

/// Piecewise-constant control: u(t) = values.col(k) on [times[k], times[k+1]).
struct PiecewiseControl {
  std::vector<double> times;  // N + 1 breakpoints
  Eigen::MatrixXd values;     // nu x N

  static PiecewiseControl constant(const Eigen::VectorXd& u, double t0, double t1);
};

struct SimOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  std::vector<double> query_times;  // empty: control breakpoints
  int max_steps = 1'000'000;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;  // states at t
  int accepted_steps = 0;
  int rejected_steps = 0;
};

/// High-accuracy reference simulation with Dormand-Prince 5(4) and PI step
/// control. Control breakpoints and query times are hit exactly by step
/// truncation, never by interpolation.
Trajectory simulate_adaptive(const OdeModel& model, const PiecewiseControl& control,
                             const Eigen::VectorXd& x0, const SimOptions& opts = {});

/// rk_step endpoint minus the reference solution (rtol 1e-12) from x over h.
Eigen::VectorXd true_local_error(const OdeModel& model, const Tableau& tableau,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& u, double h);

/// Reference solution over one interval of constant control.
Eigen::VectorXd reference_endpoint(const OdeModel& model, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u, double h, double rtol = 1e-12,
                                   double atol = 1e-14);

}  // namespace ocpreg
