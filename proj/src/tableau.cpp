#include "ocpreg/tableau.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>

namespace ocpreg {

namespace {

Tableau make_tableau(std::string name, Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::VectorXd c,
                     int order) {
  Tableau t;
  t.name = std::move(name);
  t.is_explicit = strictly_lower_triangular(A);
  t.A = std::move(A);
  t.b = std::move(b);
  t.c = std::move(c);
  t.order = order;
  return t;
}

// Coefficients of P_s(2x - 1) in the monomial basis, lowest degree first.
std::vector<double> shifted_legendre(int s) {
  std::vector<double> coef(static_cast<std::size_t>(s) + 1);
  for (int k = 0; k <= s; ++k) {
    double binom_sk = 1.0;
    for (int i = 1; i <= k; ++i) binom_sk = binom_sk * (s - k + i) / i;
    double binom_skk = 1.0;
    for (int i = 1; i <= k; ++i) binom_skk = binom_skk * (s + i) / i;
    coef[k] = (((s + k) % 2 == 0) ? 1.0 : -1.0) * binom_sk * binom_skk;
  }
  return coef;
}

double horner(const std::vector<double>& coef, double x, double* deriv = nullptr) {
  double p = 0.0;
  double dp = 0.0;
  for (auto it = coef.rbegin(); it != coef.rend(); ++it) {
    dp = dp * x + p;
    p = p * x + *it;
  }
  if (deriv) *deriv = dp;
  return p;
}

// Real roots of a polynomial known to have only simple real roots, ascending.
Eigen::VectorXd real_roots(const std::vector<double>& coef) {
  const int n = static_cast<int>(coef.size()) - 1;
  Eigen::VectorXd roots(n);
  if (n == 1) {
    roots[0] = -coef[0] / coef[1];
    return roots;
  }
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) companion(i, n - 1) = -coef[i] / coef[n];
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()[i].real();
    for (int it = 0; it < 20; ++it) {
      double dp = 0.0;
      const double p = horner(coef, x, &dp);
      if (dp == 0.0) break;
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-17) break;
    }
    roots[i] = x;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

// Transposed Vandermonde matrix V(k, j) = c_j^k, k = 0..n-1.
Eigen::MatrixXd vandermonde(const Eigen::VectorXd& c) {
  const Eigen::Index n = c.size();
  Eigen::MatrixXd V(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double p = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      V(k, j) = p;
      p *= c[j];
    }
  }
  return V;
}

Tableau collocation(std::string name, const Eigen::VectorXd& c, int order) {
  const Eigen::Index s = c.size();
  const Eigen::MatrixXd V = vandermonde(c);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  Eigen::VectorXd rhs(s);
  for (Eigen::Index k = 0; k < s; ++k) rhs[k] = 1.0 / static_cast<double>(k + 1);
  const Eigen::VectorXd b = lu.solve(rhs);
  Eigen::MatrixXd A(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index k = 0; k < s; ++k)
      rhs[k] = std::pow(c[i], static_cast<double>(k + 1)) / static_cast<double>(k + 1);
    A.row(i) = lu.solve(rhs).transpose();
  }
  return make_tableau(std::move(name), A, b, c, order);
}

// Rooted trees up to order 5, in canonical form (children sorted by index).
struct RootedTree {
  int order = 1;
  std::vector<int> children;
  double gamma = 1.0;
  std::string label;
};

const std::vector<RootedTree>& rooted_trees() {
  static const std::vector<RootedTree> trees = [] {
    std::vector<RootedTree> out;
    for (int n = 1; n <= 5; ++n) {
      const std::size_t known = out.size();
      std::vector<int> current;
      std::function<void(int, int)> extend = [&](int remaining, int min_index) {
        if (remaining == 0) {
          RootedTree t;
          t.order = n;
          t.children = current;
          t.gamma = n;
          t.label = "[";
          for (std::size_t i = 0; i < current.size(); ++i) {
            const RootedTree& ch = out[current[i]];
            t.gamma *= ch.gamma;
            if (i) t.label += ",";
            t.label += ch.label;
          }
          t.label += "]";
          out.push_back(std::move(t));
          return;
        }
        for (std::size_t i = min_index; i < known; ++i) {
          if (out[i].order > remaining) continue;
          current.push_back(static_cast<int>(i));
          extend(remaining - out[i].order, static_cast<int>(i));
          current.pop_back();
        }
      };
      extend(n - 1, 0);
    }
    return out;
  }();
  return trees;
}

}  // namespace

bool strictly_lower_triangular(const Eigen::MatrixXd& A) {
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = i; j < A.cols(); ++j)
      if (A(i, j) != 0.0) return false;
  return true;
}

double row_sum_defect(const Tableau& t) {
  return (t.c - t.A.rowwise().sum()).cwiseAbs().maxCoeff();
}

EmbeddedTableau heun_euler() {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, 0.0, 1.0, 0.0;
  EmbeddedTableau e;
  e.base = make_tableau("heun_euler", A, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.0, 1.0), 2);
  e.b_hat = Eigen::Vector2d(1.0, 0.0);
  e.embedded_order = 1;
  return e;
}

EmbeddedTableau fehlberg45() {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6, 6);
  A(1, 0) = 1.0 / 4.0;
  A(2, 0) = 3.0 / 32.0;
  A(2, 1) = 9.0 / 32.0;
  A(3, 0) = 1932.0 / 2197.0;
  A(3, 1) = -7200.0 / 2197.0;
  A(3, 2) = 7296.0 / 2197.0;
  A(4, 0) = 439.0 / 216.0;
  A(4, 1) = -8.0;
  A(4, 2) = 3680.0 / 513.0;
  A(4, 3) = -845.0 / 4104.0;
  A(5, 0) = -8.0 / 27.0;
  A(5, 1) = 2.0;
  A(5, 2) = -3544.0 / 2565.0;
  A(5, 3) = 1859.0 / 4104.0;
  A(5, 4) = -11.0 / 40.0;
  Eigen::VectorXd c(6);
  c << 0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0;
  // The fifth-order weights propagate the solution.
  Eigen::VectorXd b(6);
  b << 16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0;
  Eigen::VectorXd b_hat(6);
  b_hat << 25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0;
  EmbeddedTableau e;
  e.base = make_tableau("fehlberg45", A, b, c, 5);
  e.b_hat = b_hat;
  e.embedded_order = 4;
  return e;
}

EmbeddedTableau dormand_prince54() {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(7, 7);
  A(1, 0) = 1.0 / 5.0;
  A(2, 0) = 3.0 / 40.0;
  A(2, 1) = 9.0 / 40.0;
  A(3, 0) = 44.0 / 45.0;
  A(3, 1) = -56.0 / 15.0;
  A(3, 2) = 32.0 / 9.0;
  A(4, 0) = 19372.0 / 6561.0;
  A(4, 1) = -25360.0 / 2187.0;
  A(4, 2) = 64448.0 / 6561.0;
  A(4, 3) = -212.0 / 729.0;
  A(5, 0) = 9017.0 / 3168.0;
  A(5, 1) = -355.0 / 33.0;
  A(5, 2) = 46732.0 / 5247.0;
  A(5, 3) = 49.0 / 176.0;
  A(5, 4) = -5103.0 / 18656.0;
  A(6, 0) = 35.0 / 384.0;
  A(6, 2) = 500.0 / 1113.0;
  A(6, 3) = 125.0 / 192.0;
  A(6, 4) = -2187.0 / 6784.0;
  A(6, 5) = 11.0 / 84.0;
  Eigen::VectorXd c(7);
  c << 0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0;
  Eigen::VectorXd b(7);
  b << 35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0;
  Eigen::VectorXd b_hat(7);
  b_hat << 5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0,
      187.0 / 2100.0, 1.0 / 40.0;
  EmbeddedTableau e;
  e.base = make_tableau("dormand_prince54", A, b, c, 5);
  e.b_hat = b_hat;
  e.embedded_order = 4;
  return e;
}

Tableau gauss_legendre(int s) {
  if (s < 1 || s > 4)
    throw TableauError(fmt::format("gauss_legendre: unsupported stage count {}", s));
  const Eigen::VectorXd c = real_roots(shifted_legendre(s));
  return collocation(fmt::format("gauss_legendre{}", s), c, 2 * s);
}

Tableau radau2a(int s) {
  if (s < 1 || s > 3) throw TableauError(fmt::format("radau2a: unsupported stage count {}", s));
  std::vector<double> poly = shifted_legendre(s);
  const std::vector<double> lower = shifted_legendre(s - 1);
  for (std::size_t k = 0; k < lower.size(); ++k) poly[k] -= lower[k];
  Eigen::VectorXd c = real_roots(poly);
  c[s - 1] = 1.0;
  return collocation(fmt::format("radau2a{}", s), c, 2 * s - 1);
}

EmbeddedTableau extend_with_embedded(const Tableau& t, double gamma0) {
  if (gamma0 == 0.0 || !std::isfinite(gamma0))
    throw TableauError("extend_with_embedded: gamma0 must be a nonzero finite value");
  const int d = t.stages();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(t.c[i] - t.c[j]) < 1e-10)
        throw TableauError(fmt::format(
            "extend_with_embedded: nodes c[{}] and c[{}] coincide, Vandermonde system is singular",
            i, j));

  Eigen::VectorXd rhs(d);
  for (int k = 0; k < d; ++k) rhs[k] = 1.0 / static_cast<double>(k + 1);
  rhs[0] -= gamma0;
  const Eigen::VectorXd b_hat_tail = vandermonde(t.c).fullPivLu().solve(rhs);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d + 1, d + 1);
  A.bottomRightCorner(d, d) = t.A;
  Eigen::VectorXd b(d + 1), c(d + 1), b_hat(d + 1);
  b << 0.0, t.b;
  c << 0.0, t.c;
  b_hat << gamma0, b_hat_tail;

  EmbeddedTableau e;
  e.base = make_tableau(t.name + "+emb", A, b, c, t.order);
  e.b_hat = b_hat;
  e.embedded_order = d;
  return e;
}

std::vector<OrderCondition> check_order_conditions(const Eigen::MatrixXd& A,
                                                   const Eigen::VectorXd& weights,
                                                   const Eigen::VectorXd& c, int order) {
  std::vector<OrderCondition> out;
  const Eigen::Index s = weights.size();
  const auto& trees = rooted_trees();
  std::vector<Eigen::VectorXd> phi(trees.size());
  for (std::size_t t = 0; t < trees.size(); ++t) {
    phi[t] = Eigen::VectorXd::Ones(s);
    for (int child : trees[t].children) phi[t] = phi[t].cwiseProduct(A * phi[child]);
    if (trees[t].order > order) continue;
    out.push_back({"tree:" + trees[t].label, trees[t].order,
                   weights.dot(phi[t]) - 1.0 / trees[t].gamma});
  }
  if (order <= 5) return out;

  for (int k = 6; k <= order; ++k)
    out.push_back({fmt::format("B({})", k), k,
                   weights.dot(c.array().pow(k - 1).matrix()) - 1.0 / k});
  const int eta = (order - 1) / 2;  // ceil((order - 2) / 2)
  const int zeta = order - 1 - eta;
  for (int k = 1; k <= eta; ++k) {
    const Eigen::VectorXd lhs = A * c.array().pow(k - 1).matrix();
    for (Eigen::Index i = 0; i < s; ++i)
      out.push_back({fmt::format("C({})@{}", k, i), order, lhs[i] - std::pow(c[i], k) / k});
  }
  for (int k = 1; k <= zeta; ++k) {
    const Eigen::VectorXd lhs =
        A.transpose() * weights.cwiseProduct(c.array().pow(k - 1).matrix());
    for (Eigen::Index j = 0; j < s; ++j)
      out.push_back({fmt::format("D({})@{}", k, j), order,
                     lhs[j] - weights[j] * (1.0 - std::pow(c[j], k)) / k});
  }
  return out;
}

std::vector<OrderCondition> check_order_conditions(const Tableau& t, int order) {
  return check_order_conditions(t.A, t.b, t.c, order);
}

double max_abs_residual(const std::vector<OrderCondition>& conditions) {
  double m = 0.0;
  for (const auto& cond : conditions) m = std::max(m, std::abs(cond.residual));
  return m;
}

namespace {

std::string format_rows(const Tableau& t, const Eigen::VectorXd* b_hat) {
  constexpr int kw = 12;
  std::string out;
  for (int i = 0; i < t.stages(); ++i) {
    out += fmt::format("{:>{}.6g} |", t.c[i], kw);
    for (int j = 0; j < t.stages(); ++j) out += fmt::format(" {:>{}.6g}", t.A(i, j), kw);
    out += '\n';
  }
  out += std::string(kw + 1, '-') + "+" + std::string((kw + 1) * t.stages(), '-') + '\n';
  auto weight_row = [&](const Eigen::VectorXd& w) {
    out += std::string(kw, ' ') + " |";
    for (int j = 0; j < t.stages(); ++j) out += fmt::format(" {:>{}.6g}", w[j], kw);
    out += '\n';
  };
  weight_row(t.b);
  if (b_hat) weight_row(*b_hat);
  return out;
}

}  // namespace

std::string format_butcher(const Tableau& t) {
  return fmt::format("{} (stages {}, order {}, {})\n", t.name, t.stages(), t.order,
                     t.is_explicit ? "explicit" : "implicit") +
         format_rows(t, nullptr);
}

std::string format_butcher(const EmbeddedTableau& t) {
  return fmt::format("{} (stages {}, order {}({}), {})\n", t.name(), t.stages(), t.base.order,
                     t.embedded_order, t.base.is_explicit ? "explicit" : "implicit") +
         format_rows(t.base, &t.b_hat);
}

}  // namespace ocpreg
