#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace ocpreg {

class TableauError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Butcher tableau (A, b, c) of a Runge-Kutta method of classical order `order`.
struct Tableau {
  std::string name;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  int order = 1;
  bool is_explicit = false;

  int stages() const { return static_cast<int>(b.size()); }
};

/// A tableau with a second set of weights sharing its stages.
///
/// `base.b` propagates the solution; `b_hat` gives the embedded result of
/// order `embedded_order` used only for error estimation.
struct EmbeddedTableau {
  Tableau base;
  Eigen::VectorXd b_hat;
  int embedded_order = 1;

  const std::string& name() const { return base.name; }
  int stages() const { return base.stages(); }
};

/// Gamma0 used when an implicit tableau is extended without an explicit choice.
inline constexpr double kDefaultGamma0 = 0.1;

EmbeddedTableau heun_euler();
EmbeddedTableau fehlberg45();
EmbeddedTableau dormand_prince54();

/// Gauss-Legendre collocation, s in 1..4, order 2s.
Tableau gauss_legendre(int s);
/// Radau IIA collocation, s in 1..3, order 2s-1.
Tableau radau2a(int s);

/// Prepends a stage c0 = 0 with a zero row in A and zero base weight, and
/// solves for embedded weights (gamma0, b_hat) of order d = t.stages():
///   gamma0 * [k == 1] + sum_i b_hat_i c_i^(k-1) = 1/k,   k = 1..d.
EmbeddedTableau extend_with_embedded(const Tableau& t, double gamma0 = kDefaultGamma0);

struct OrderCondition {
  std::string id;  // "tree:[[],[]]", "B(6)", "C(3)@2", "D(4)@1", ...
  int order = 0;
  double residual = 0.0;  // signed: computed minus required
};

/// Residuals of all order conditions up to `order` for weights `weights` on
/// stages (A, c). Rooted-tree conditions are enumerated up to order 5; above
/// that the quadrature conditions B(k) and the simplifying assumptions C, D
/// (Butcher) certify the order.
std::vector<OrderCondition> check_order_conditions(const Eigen::MatrixXd& A,
                                                   const Eigen::VectorXd& weights,
                                                   const Eigen::VectorXd& c, int order);
std::vector<OrderCondition> check_order_conditions(const Tableau& t, int order);

double max_abs_residual(const std::vector<OrderCondition>& conditions);

/// max_i |c_i - sum_j A_ij|
double row_sum_defect(const Tableau& t);

/// True iff A is strictly lower triangular.
bool strictly_lower_triangular(const Eigen::MatrixXd& A);

/// Butcher-array text layout: c | A rows, then b (and b_hat) below the rule.
std::string format_butcher(const Tableau& t);
std::string format_butcher(const EmbeddedTableau& t);

}  // namespace ocpreg
