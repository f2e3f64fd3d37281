#include "ocpreg/models.hpp"

#include <fmt/format.h>

#include <cmath>

namespace ocpreg {

void OcpSpec::validate() const {
  const auto& m = model;
  if (m.name.empty()) throw ModelError("model name must not be empty");
  if (m.nx < 1) throw ModelError(fmt::format("model '{}': nx must be >= 1", m.name));
  if (m.nu < 0) throw ModelError(fmt::format("model '{}': nu must be >= 0", m.name));
  if (!m.f) throw ModelError(fmt::format("model '{}': missing dynamics", m.name));
  if (m.f.out_dim() != m.nx)
    throw ModelError(fmt::format("model '{}': dynamics output dimension {} != nx {}", m.name,
                                 m.f.out_dim(), m.nx));
  for (const auto& inv : m.linear_invariants)
    if (inv.a.size() != m.nx)
      throw ModelError(fmt::format("model '{}': linear invariant has wrong dimension", m.name));
  if (x0.size() != m.nx)
    throw ModelError(fmt::format("model '{}': x0 has dimension {}, expected {}", m.name,
                                 x0.size(), m.nx));
  if (N < 1) throw ModelError(fmt::format("model '{}': N must be >= 1", m.name));
  if (free_time) {
    if (!(free_time->guess > 0.0))
      throw ModelError(fmt::format("model '{}': free-time guess must be > 0", m.name));
    if (!(free_time->lower() <= free_time->guess && free_time->guess <= free_time->upper()))
      throw ModelError(fmt::format("model '{}': invalid free-time bounds", m.name));
  } else if (!(t_f > 0.0)) {
    throw ModelError(fmt::format("model '{}': t_f must be > 0", m.name));
  }
  auto check_box = [&](const Box& box, Eigen::Index dim, const char* what) {
    if (box.lo.size() != dim || box.hi.size() != dim)
      throw ModelError(fmt::format("model '{}': {} bounds have wrong dimension", m.name, what));
    for (Eigen::Index i = 0; i < dim; ++i)
      if (!(box.lo[i] <= box.hi[i]))
        throw ModelError(
            fmt::format("model '{}': {} bound {} has lo > hi", m.name, what, i));
  };
  check_box(u_bounds, m.nu, "control");
  if (x_bounds) check_box(*x_bounds, m.nx, "state");
  if (mayer && mayer.out_dim() != 1)
    throw ModelError(fmt::format("model '{}': Mayer term must be scalar", m.name));
  if (lagrange && lagrange.out_dim() != 1)
    throw ModelError(fmt::format("model '{}': Lagrange term must be scalar", m.name));
  if (omega.size() != m.nx)
    throw ModelError(fmt::format("model '{}': omega has dimension {}, expected {}", m.name,
                                 omega.size(), m.nx));
  if ((omega.array() <= 0.0).any())
    throw ModelError(fmt::format("model '{}': omega must be positive", m.name));
}

OcpSpec minimal_example() {
  OcpSpec spec;
  spec.model.name = "minimal";
  spec.model.nx = 1;
  spec.model.nu = 1;
  spec.model.f = VectorMap(1, [](auto x, auto u, auto out) { out[0] = -u[0] * x[0]; });
  spec.x0 = Eigen::VectorXd::Ones(1);
  spec.t_f = 1.0;
  spec.N = 1;
  spec.mayer = VectorMap(1, [](auto x, auto, auto out) { out[0] = 1.0 - x[0]; });
  spec.u_bounds = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 30.0)};
  spec.omega = Eigen::VectorXd::Ones(1);
  return spec;
}

namespace {
constexpr double k1 = 50.0;
constexpr double k2 = 1.0;
constexpr double k3 = 1.0;
}  // namespace

OcpSpec catalyst_mixing() {
  OcpSpec spec;
  spec.model.name = "catalyst";
  spec.model.nx = 3;
  spec.model.nu = 1;
  spec.model.f = VectorMap(3, [](auto x, auto u, auto out) {
    const auto reaction = k1 * x[0] - k2 * x[1];
    const auto decay = (1.0 - u[0]) * k3 * x[1];
    out[0] = -u[0] * reaction;
    out[1] = u[0] * reaction - decay;
    out[2] = decay;
  });
  spec.model.linear_invariants.push_back({Eigen::Vector3d(1.0, 1.0, 1.0), 1.0});
  spec.x0 = Eigen::Vector3d(1.0, 0.0, 0.0);
  spec.t_f = 1.0;
  spec.N = 20;
  // maximize c(t_f)
  spec.mayer = VectorMap(1, [](auto x, auto, auto out) { out[0] = -x[2]; });
  spec.u_bounds = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0)};
  spec.omega = Eigen::Vector3d(1.0, 1.0, 1.0);
  return spec;
}

OdeModel linear_decay(double lambda) {
  OdeModel m;
  m.name = "linear_decay";
  m.nx = 1;
  m.nu = 0;
  m.f = VectorMap(1, [lambda](auto x, auto, auto out) { out[0] = -lambda * x[0]; });
  return m;
}

ModelRegistry ModelRegistry::with_builtins() {
  ModelRegistry r;
  r.register_model(minimal_example());
  r.register_model(catalyst_mixing());
  return r;
}

ModelRegistry::Handle ModelRegistry::register_model(OcpSpec spec) {
  spec.validate();
  const std::string name = spec.model.name;
  if (specs_.contains(name))
    throw ModelError(fmt::format("model '{}' is already registered", name));
  specs_.emplace(name, std::move(spec));
  return Handle{name};
}

bool ModelRegistry::contains(const std::string& name) const { return specs_.contains(name); }

const OcpSpec& ModelRegistry::get(const std::string& name) const {
  const auto it = specs_.find(name);
  if (it == specs_.end()) throw ModelError(fmt::format("unknown model '{}'", name));
  return it->second;
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, spec] : specs_) out.push_back(name);
  return out;
}

}  // namespace ocpreg
