#pragma once

#include "ocpreg/nlpsolve.hpp"

#include <Eigen/Dense>

#include <limits>
#include <random>
#include <string>
#include <vector>

namespace qp {

/// min 1/2 x^T Q x + c^T x  s.t.  A x = b,  lo <= x <= hi, with a known optimum.
class QuadraticProgram final : public ocpreg::SmoothNlp {
 public:
  std::string name;
  Eigen::MatrixXd Q, A;
  Eigen::VectorXd c, b, lo, hi, x_star;

  Eigen::Index num_vars() const override { return Q.rows(); }
  Eigen::Index num_eq() const override { return A.rows(); }
  Eigen::VectorXd lower_bounds() const override { return lo; }
  Eigen::VectorXd upper_bounds() const override { return hi; }
  double objective(const Eigen::VectorXd& x) const override {
    return 0.5 * x.dot(Q * x) + c.dot(x);
  }
  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const override {
    return Q * x + c;
  }
  Eigen::VectorXd eq_residuals(const Eigen::VectorXd& x) const override { return A * x - b; }
  Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd&) const override { return A; }
};

/// Optimum planted through the KKT conditions: x* with some components on
/// their bounds, multipliers chosen, and c solved for so that
///   Q x* + c - A^T lambda - z_lo + z_hi = 0.
inline QuadraticProgram planted(const std::string& name, int n, int m, int active,
                                unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = u(gen);
    return M;
  };
  QuadraticProgram p;
  p.name = name;
  const Eigen::MatrixXd M = rnd(n, n);
  p.Q = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
  p.A = rnd(m, n);
  p.lo = Eigen::VectorXd::Constant(n, -2.0);
  p.hi = Eigen::VectorXd::Constant(n, 2.0);
  p.x_star = 0.5 * rnd(n, 1);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < active; ++i) {
    const bool upper = i % 2 == 0;
    p.x_star[i] = upper ? p.hi[i] : p.lo[i];
    z[i] = (upper ? -1.0 : 1.0) * (0.5 + 0.5 * std::abs(u(gen)));  // z_lo - z_hi
  }
  const Eigen::VectorXd lambda = rnd(m, 1);
  p.c = -p.Q * p.x_star + p.A.transpose() * lambda + z;
  p.b = p.A * p.x_star;
  return p;
}

inline std::vector<QuadraticProgram> library() {
  std::vector<QuadraticProgram> lib;
  const double inf = std::numeric_limits<double>::infinity();
  {
    // min x^2 + y^2, x + y = 1
    QuadraticProgram p;
    p.name = "two-var projection";
    p.Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    p.c = Eigen::VectorXd::Zero(2);
    p.A = Eigen::MatrixXd::Ones(1, 2);
    p.b = Eigen::VectorXd::Ones(1);
    p.lo = Eigen::VectorXd::Constant(2, -inf);
    p.hi = Eigen::VectorXd::Constant(2, inf);
    p.x_star = Eigen::Vector2d(0.5, 0.5);
    lib.push_back(p);
  }
  {
    // min (x-2)^2 + (y-2)^2, x = y, x, y in [0, 1]
    QuadraticProgram p;
    p.name = "bound-clipped diagonal";
    p.Q = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    p.c = Eigen::Vector2d(-4.0, -4.0);
    p.A = Eigen::RowVector2d(1.0, -1.0);
    p.b = Eigen::VectorXd::Zero(1);
    p.lo = Eigen::VectorXd::Zero(2);
    p.hi = Eigen::VectorXd::Ones(2);
    p.x_star = Eigen::Vector2d(1.0, 1.0);
    lib.push_back(p);
  }
  lib.push_back(planted("planted n3 m1", 3, 1, 0, 11));
  lib.push_back(planted("planted n4 m2", 4, 2, 1, 12));
  lib.push_back(planted("planted n5 m2", 5, 2, 2, 13));
  lib.push_back(planted("planted n6 m3", 6, 3, 2, 14));
  lib.push_back(planted("planted n8 m3", 8, 3, 3, 15));
  lib.push_back(planted("planted n10 m4", 10, 4, 4, 16));
  lib.push_back(planted("planted n12 m6", 12, 6, 3, 17));
  lib.push_back(planted("planted n15 m5", 15, 5, 6, 18));
  return lib;
}

}  // namespace qp
