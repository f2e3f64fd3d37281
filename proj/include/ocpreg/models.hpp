#pragma once

#include "ocpreg/ad.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocpreg {

using Dual = ad::Scalar;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A map (x, u) -> out evaluable on plain and dual scalars.
///
/// Built from one generic callable `void(span<const T> x, span<const T> u,
/// span<T> out)`, instantiated for `double` and `Dual`.
class VectorMap {
 public:
  template <class T>
  using Fn = std::function<void(std::span<const T>, std::span<const T>, std::span<T>)>;

  VectorMap() = default;

  template <class F>
  VectorMap(int out_dim, F f)
      : out_dim_(out_dim),
        real_([f](std::span<const double> x, std::span<const double> u, std::span<double> o) {
          f(x, u, o);
        }),
        dual_([f](std::span<const Dual> x, std::span<const Dual> u, std::span<Dual> o) {
          f(x, u, o);
        }) {}

  int out_dim() const { return out_dim_; }
  explicit operator bool() const { return static_cast<bool>(real_); }

  template <class T>
  void operator()(std::span<const T> x, std::span<const T> u, std::span<T> out) const {
    if constexpr (std::is_same_v<T, double>) {
      real_(x, u, out);
    } else {
      static_assert(std::is_same_v<T, Dual>, "VectorMap supports double and ocpreg::Dual");
      dual_(x, u, out);
    }
  }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(out_dim_);
    real_(std::span<const double>(x.data(), x.size()), std::span<const double>(u.data(), u.size()),
          std::span<double>(out.data(), out.size()));
    return out;
  }

 private:
  int out_dim_ = 0;
  Fn<double> real_;
  Fn<Dual> dual_;
};

/// a^T x = r along every trajectory.
struct LinearInvariant {
  Eigen::VectorXd a;
  double r = 0.0;
};

struct OdeModel {
  std::string name;
  int nx = 0;
  int nu = 0;
  VectorMap f;  // (x, u) -> xdot
  std::vector<LinearInvariant> linear_invariants;
};

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

/// Free horizon. Nonpositive bounds select the defaults [0.1 guess, 10 guess].
struct FreeTime {
  double guess = 1.0;
  double lo = 0.0;
  double hi = 0.0;

  double lower() const { return lo > 0.0 ? lo : 0.1 * guess; }
  double upper() const { return hi > 0.0 ? hi : 10.0 * guess; }
};

/// Continuous-time OCP: min  int l(x,u) dt + E(x(t_f))  s.t. dynamics, bounds,
/// path constraints h(x,u) >= 0, x(0) = x0.
struct OcpSpec {
  OdeModel model;
  Eigen::VectorXd x0;
  double t_f = 1.0;
  std::optional<FreeTime> free_time;
  VectorMap lagrange;  // out dim 1, optional
  VectorMap mayer;     // out dim 1, called with empty u
  VectorMap path;      // optional, h(x,u) >= 0 enforced at shooting nodes
  Box u_bounds;
  std::optional<Box> x_bounds;
  int N = 1;
  Eigen::VectorXd omega;  // default error weights

  /// Horizon guess (fixed horizon, or free-time initial guess).
  double horizon() const { return free_time ? free_time->guess : t_f; }

  /// Throws ModelError naming the first violated invariant.
  void validate() const;
};

/// min 1 - x(1), xdot = -u x, x(0) = 1, u in [0, 30], one interval.
OcpSpec minimal_example();

/// Catalyst mixing (A <-> B -> C), minimizing -c(1).
OcpSpec catalyst_mixing();

/// Scalar test problem xdot = -lambda x used for convergence studies.
OdeModel linear_decay(double lambda = 1.0);

class ModelRegistry {
 public:
  struct Handle {
    std::string name;
  };

  /// Registry with "minimal" and "catalyst".
  static ModelRegistry with_builtins();

  Handle register_model(OcpSpec spec);
  bool contains(const std::string& name) const;
  const OcpSpec& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, OcpSpec> specs_;
};

}  // namespace ocpreg
