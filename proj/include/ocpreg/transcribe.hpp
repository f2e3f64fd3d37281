#pragma once

#include "ocpreg/integrate.hpp"
#include "ocpreg/models.hpp"
#include "ocpreg/nlpsolve.hpp"
#include "ocpreg/tableau.hpp"

#include <Eigen/Core>

#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace ocpreg {

class TranscriptionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// N equidistant intervals, one step of `pair` per interval, piecewise
/// constant control.
struct Discretization {
  int N = 1;
  EmbeddedTableau pair;
  bool free_time = false;

  /// N and free_time taken from the OCP.
  static Discretization for_spec(const OcpSpec& spec, EmbeddedTableau pair);
};

/// phi(w) = || diag(E_max)^-1 E_hat(w) ||_p^q with E_max = e_max * (omega, ..., omega).
struct RegConfig {
  double e_max = std::numeric_limits<double>::infinity();  // infinity: off
  Eigen::VectorXd omega;
  double p = 2.0;
  double q = 2.0;

  static RegConfig off() { return {}; }
  bool enabled() const { return e_max < std::numeric_limits<double>::infinity(); }

  /// Length N*nx vector e_max * (omega, ..., omega).
  Eigen::VectorXd e_max_vector(int N) const;
};

/// Position of each block of w = (x_0..x_N, z_0..z_{N-1}, u_0..u_{N-1} [, t_f]).
struct Layout {
  int nx = 0;
  int nu = 0;
  int d = 0;
  int N = 0;
  bool free_time = false;

  Eigen::Index x(int k) const { return static_cast<Eigen::Index>(k) * nx; }
  Eigen::Index z(int k, int i = 0) const {
    return static_cast<Eigen::Index>(N + 1) * nx + (static_cast<Eigen::Index>(k) * d + i) * nx;
  }
  Eigen::Index u(int k) const {
    return static_cast<Eigen::Index>(N + 1) * nx + static_cast<Eigen::Index>(N) * d * nx +
           static_cast<Eigen::Index>(k) * nu;
  }
  Eigen::Index tf() const { return u(N); }
  Eigen::Index size() const { return u(N) + (free_time ? 1 : 0); }

  /// Variables an interval depends on: x_k, x_{k+1}, z_k, u_k [, t_f].
  std::vector<Eigen::Index> interval_indices(int k) const;
};

/// The multiple-shooting NLP
///   min J(w) + phi(w)
///   s.t. x_0 = x0_bar, per interval: z_ki = x_k + h sum_j a_ij f(z_kj, u_k),
///        x_{k+1} = x_k + h sum_i b_i f(z_ki, u_k),  h(x_k, u_k) >= 0,  bounds.
class NlpProblem final : public SmoothNlp {
 public:
  NlpProblem(OcpSpec spec, Discretization disc, RegConfig reg);

  Eigen::Index num_vars() const override { return layout_.size(); }
  Eigen::Index num_eq() const override;
  Eigen::Index num_ineq() const override;
  Eigen::VectorXd lower_bounds() const override { return lo_; }
  Eigen::VectorXd upper_bounds() const override { return hi_; }

  double objective(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd eq_residuals(const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd& w) const override;
  Eigen::VectorXd ineq_residuals(const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd ineq_jacobian(const Eigen::VectorXd& w) const override;
  double regularization(const Eigen::VectorXd& w) const override { return phi(w); }

  /// Dual-scalar evaluation of the whole objective / equality residuals.
  Dual objective(std::span<const Dual> w) const;
  std::vector<Dual> eq_residuals(std::span<const Dual> w) const;

  /// J(w): Mayer term plus Lagrange quadrature, without phi.
  double cost(const Eigen::VectorXd& w) const;
  double phi(const Eigen::VectorXd& w) const;
  /// E_hat(w) = (e_hat_0, ..., e_hat_{N-1}), length N*nx.
  Eigen::VectorXd error_estimates(const Eigen::VectorXd& w) const;

  double horizon(const Eigen::VectorXd& w) const;
  double step(const Eigen::VectorXd& w) const { return horizon(w) / layout_.N; }
  Eigen::MatrixXd nodes(const Eigen::VectorXd& w) const;     // nx x (N+1)
  Eigen::MatrixXd controls(const Eigen::VectorXd& w) const;  // nu x N
  Eigen::MatrixXd stages(const Eigen::VectorXd& w, int k) const;  // nx x d

  const Layout& layout() const { return layout_; }
  const OcpSpec& spec() const { return spec_; }
  const Discretization& disc() const { return disc_; }
  const RegConfig& reg() const { return reg_; }

 private:
  template <class T>
  struct IntervalOut;

  template <class T>
  void eval_interval(std::span<const T> local, IntervalOut<T>& out) const;
  template <class T>
  T cost_t(std::span<const T> w) const;
  template <class T>
  std::vector<T> estimates_t(std::span<const T> w) const;
  template <class T>
  std::vector<T> eq_residuals_t(std::span<const T> w) const;
  std::vector<double> gather(const Eigen::VectorXd& w, int k) const;

  OcpSpec spec_;
  Discretization disc_;
  RegConfig reg_;
  Layout layout_;
  Eigen::VectorXd lo_, hi_;
  Eigen::VectorXd e_max_vec_;
};

/// Throws TranscriptionError on inconsistent dimensions, e_max <= 0, or an
/// enabled regularizer with p = infinity.
NlpProblem build_nlp(const OcpSpec& spec, const Discretization& disc, const RegConfig& reg);

/// || E_hat ./ e_max_vec ||_p^q; p may be infinity (max-abs).
template <class T>
T phi_value(std::span<const T> e_hat, const Eigen::VectorXd& e_max_vec, double p, double q);

/// phi at w for `reg` (0 when reg is off).
double eval_phi(const NlpProblem& nlp, const Eigen::VectorXd& w, const RegConfig& reg);

/// E_max - |E_hat(w)|, componentwise.
Eigen::VectorXd phi_limit_constraint(const NlpProblem& nlp, const Eigen::VectorXd& w,
                                     const RegConfig& reg);

struct InitPolicy {
  enum class Kind { kConstantControl, kForwardSimulate };
  Kind kind = Kind::kConstantControl;
  double value = 0.0;  // control value (clipped to bounds)

  static InitPolicy constant(double u) { return {Kind::kConstantControl, u}; }
  static InitPolicy simulate(double u) { return {Kind::kForwardSimulate, u}; }
};

/// Initial point: constant control, states and stages from chained rk_step
/// (constant-control policy) or from the reference simulator.
Eigen::VectorXd initial_guess(const OcpSpec& spec, const Discretization& disc,
                              const InitPolicy& policy);

}  // namespace ocpreg
