#pragma once

// Forward-mode automatic differentiation with a fixed-width dual scalar.
//
// Functions that should be differentiable are written once as templates over
// the scalar type and instantiated with `double` for values and with
// `Dual<W>` for W directional derivatives at a time. Jacobians of wider maps
// are assembled by sweeping the seed directions in batches of W.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocpreg::ad {

/// Seed width used by the type-erased model and transcription callbacks.
inline constexpr int kWidth = 8;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <int W>
struct Dual {
  static_assert(W >= 1);
  static constexpr int width = W;

  double val = 0.0;
  std::array<double, W> der{};

  constexpr Dual() = default;
  constexpr Dual(double v) : val(v) {}  // NOLINT: implicit promotion of constants

  static Dual variable(double v, int direction) {
    Dual d(v);
    d.der[direction] = 1.0;
    return d;
  }

  Dual& operator+=(const Dual& o) {
    val += o.val;
    for (int i = 0; i < W; ++i) der[i] += o.der[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    for (int i = 0; i < W; ++i) der[i] -= o.der[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < W; ++i) der[i] = der[i] * o.val + val * o.der[i];
    val *= o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.val;
    const double q = val * inv;
    for (int i = 0; i < W; ++i) der[i] = (der[i] - q * o.der[i]) * inv;
    val = q;
    return *this;
  }
};

using Scalar = Dual<kWidth>;

template <class T>
struct is_dual : std::false_type {};
template <int W>
struct is_dual<Dual<W>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

inline double value_of(double x) { return x; }
template <int W>
double value_of(const Dual<W>& x) {
  return x.val;
}

// Applies a scalar function with known derivative: result.der = fprime * x.der.
template <int W>
Dual<W> chain(const Dual<W>& x, double fx, double fprime) {
  Dual<W> r(fx);
  for (int i = 0; i < W; ++i) r.der[i] = fprime * x.der[i];
  return r;
}

template <int W>
Dual<W> operator-(const Dual<W>& x) {
  return chain(x, -x.val, -1.0);
}
template <int W>
Dual<W> operator+(const Dual<W>& x) {
  return x;
}

template <int W>
Dual<W> operator+(Dual<W> a, const Dual<W>& b) {
  return a += b;
}
template <int W>
Dual<W> operator-(Dual<W> a, const Dual<W>& b) {
  return a -= b;
}
template <int W>
Dual<W> operator*(Dual<W> a, const Dual<W>& b) {
  return a *= b;
}
template <int W>
Dual<W> operator/(Dual<W> a, const Dual<W>& b) {
  return a /= b;
}

template <int W>
Dual<W> operator+(Dual<W> a, double b) {
  a.val += b;
  return a;
}
template <int W>
Dual<W> operator+(double a, Dual<W> b) {
  b.val += a;
  return b;
}
template <int W>
Dual<W> operator-(Dual<W> a, double b) {
  a.val -= b;
  return a;
}
template <int W>
Dual<W> operator-(double a, const Dual<W>& b) {
  return chain(b, a - b.val, -1.0);
}
template <int W>
Dual<W> operator*(const Dual<W>& a, double b) {
  return chain(a, a.val * b, b);
}
template <int W>
Dual<W> operator*(double a, const Dual<W>& b) {
  return chain(b, a * b.val, a);
}
template <int W>
Dual<W> operator/(const Dual<W>& a, double b) {
  return chain(a, a.val / b, 1.0 / b);
}
template <int W>
Dual<W> operator/(double a, const Dual<W>& b) {
  const double q = a / b.val;
  return chain(b, q, -q / b.val);
}

template <int W>
bool operator<(const Dual<W>& a, const Dual<W>& b) {
  return a.val < b.val;
}
template <int W>
bool operator>(const Dual<W>& a, const Dual<W>& b) {
  return a.val > b.val;
}
template <int W>
bool operator<(const Dual<W>& a, double b) {
  return a.val < b;
}
template <int W>
bool operator>(const Dual<W>& a, double b) {
  return a.val > b;
}

template <int W>
Dual<W> exp(const Dual<W>& x) {
  const double e = std::exp(x.val);
  return chain(x, e, e);
}
template <int W>
Dual<W> log(const Dual<W>& x) {
  return chain(x, std::log(x.val), 1.0 / x.val);
}
template <int W>
Dual<W> sin(const Dual<W>& x) {
  return chain(x, std::sin(x.val), std::cos(x.val));
}
template <int W>
Dual<W> cos(const Dual<W>& x) {
  return chain(x, std::cos(x.val), -std::sin(x.val));
}
template <int W>
Dual<W> sqrt(const Dual<W>& x) {
  const double s = std::sqrt(x.val);
  return chain(x, s, 0.5 / s);
}
// d|x|/dx is taken as 0 at x = 0.
template <int W>
Dual<W> abs(const Dual<W>& x) {
  const double sign = x.val > 0.0 ? 1.0 : (x.val < 0.0 ? -1.0 : 0.0);
  return chain(x, std::abs(x.val), sign);
}
template <int W>
Dual<W> pow(const Dual<W>& x, double e) {
  if (e == 0.0) return Dual<W>(1.0);
  const double p = std::pow(x.val, e);
  const double dp = (x.val == 0.0 && e > 1.0) ? 0.0 : e * std::pow(x.val, e - 1.0);
  return chain(x, p, dp);
}
template <int W>
Dual<W> pow(const Dual<W>& x, const Dual<W>& e) {
  // x^e = exp(e log x), valid for x > 0
  return exp(e * log(x));
}
template <int W>
Dual<W> pow(double x, const Dual<W>& e) {
  const double p = std::pow(x, e.val);
  return chain(e, p, p * std::log(x));
}

template <int W>
bool isfinite(const Dual<W>& x) {
  if (!std::isfinite(x.val)) return false;
  for (double d : x.der)
    if (!std::isfinite(d)) return false;
  return true;
}

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value in ") + what);
}

}  // namespace detail

/// Jacobian of `f` at `x` by forward sweeps of W seed directions each.
///
/// `f` is a generic callable `std::vector<T> f(std::span<const T>)` that is
/// invoked with `T = Dual<W>`.
template <int W = kWidth, class F>
Eigen::MatrixXd jacobian(F&& f, const Eigen::VectorXd& x) {
  using D = Dual<W>;
  const Eigen::Index n = x.size();
  std::vector<D> xd(static_cast<std::size_t>(n));
  Eigen::MatrixXd jac;
  bool sized = false;
  if (n == 0) {
    const auto y = f(std::span<const D>(xd));
    return Eigen::MatrixXd(static_cast<Eigen::Index>(y.size()), 0);
  }
  for (Eigen::Index start = 0; start < n; start += W) {
    for (Eigen::Index j = 0; j < n; ++j) {
      xd[j] = D(x[j]);
      const Eigen::Index dir = j - start;
      if (dir >= 0 && dir < W) xd[j].der[dir] = 1.0;
    }
    const std::vector<D> y = f(std::span<const D>(xd));
    if (!sized) {
      jac.setZero(static_cast<Eigen::Index>(y.size()), n);
      sized = true;
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      detail::require_finite(y[i].val, "jacobian evaluation");
      for (Eigen::Index dir = 0; dir < W && start + dir < n; ++dir) {
        detail::require_finite(y[i].der[dir], "jacobian derivative");
        jac(static_cast<Eigen::Index>(i), start + dir) = y[i].der[dir];
      }
    }
  }
  return jac;
}

/// Gradient of a scalar generic callable `T f(std::span<const T>)`.
template <int W = kWidth, class F>
Eigen::VectorXd gradient(F&& f, const Eigen::VectorXd& x) {
  auto wrapped = [&f](auto xs) {
    using T = typename decltype(xs)::value_type;
    return std::vector<std::remove_cv_t<T>>{f(xs)};
  };
  const Eigen::MatrixXd j = jacobian<W>(wrapped, x);
  return j.row(0).transpose();
}

}  // namespace ocpreg::ad
