#include "ocpreg/transcribe.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace ocpreg {

Discretization Discretization::for_spec(const OcpSpec& spec, EmbeddedTableau pair) {
  Discretization d;
  d.N = spec.N;
  d.pair = std::move(pair);
  d.free_time = spec.free_time.has_value();
  return d;
}

Eigen::VectorXd RegConfig::e_max_vector(int N) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(N) * omega.size());
  for (int k = 0; k < N; ++k) v.segment(k * omega.size(), omega.size()) = e_max * omega;
  return v;
}

std::vector<Eigen::Index> Layout::interval_indices(int k) const {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>((2 + d) * nx + nu + 1));
  for (int i = 0; i < nx; ++i) idx.push_back(x(k) + i);
  for (int i = 0; i < nx; ++i) idx.push_back(x(k + 1) + i);
  for (int i = 0; i < d * nx; ++i) idx.push_back(z(k) + i);
  for (int i = 0; i < nu; ++i) idx.push_back(u(k) + i);
  if (free_time) idx.push_back(tf());
  return idx;
}

template <class T>
T phi_value(std::span<const T> e_hat, const Eigen::VectorXd& e_max_vec, double p, double q) {
  using std::abs;
  using std::pow;
  if (static_cast<Eigen::Index>(e_hat.size()) != e_max_vec.size())
    throw TranscriptionError("phi: estimate and E_max dimensions differ");
  if (std::isinf(p)) {
    T m(0.0);
    for (std::size_t j = 0; j < e_hat.size(); ++j) {
      const T s = abs(e_hat[j] / e_max_vec[static_cast<Eigen::Index>(j)]);
      if (ad::value_of(s) > ad::value_of(m)) m = s;
    }
    if (ad::value_of(m) == 0.0) return T(0.0);
    return q == 1.0 ? m : pow(m, q);
  }
  T sum(0.0);
  for (std::size_t j = 0; j < e_hat.size(); ++j) {
    const T s = e_hat[j] / e_max_vec[static_cast<Eigen::Index>(j)];
    sum += p == 2.0 ? s * s : (p == 1.0 ? abs(s) : pow(abs(s), p));
  }
  if (ad::value_of(sum) == 0.0) return T(0.0);
  return q == p ? sum : pow(sum, q / p);
}

template double phi_value<double>(std::span<const double>, const Eigen::VectorXd&, double, double);
template Dual phi_value<Dual>(std::span<const Dual>, const Eigen::VectorXd&, double, double);

namespace {

// d phi / d E_hat
Eigen::VectorXd phi_gradient(const Eigen::VectorXd& e_hat, const Eigen::VectorXd& e_max_vec,
                             double p, double q) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(e_hat.size());
  const Eigen::VectorXd s = e_hat.cwiseQuotient(e_max_vec);
  if (std::isinf(p)) {
    Eigen::Index j = 0;
    const double m = s.cwiseAbs().maxCoeff(&j);
    if (m == 0.0) return g;
    g[j] = q * std::pow(m, q - 1.0) * (s[j] > 0.0 ? 1.0 : -1.0) / e_max_vec[j];
    return g;
  }
  const double sum = s.cwiseAbs().array().pow(p).sum();
  if (sum == 0.0) return g;
  const double outer = q * std::pow(sum, q / p - 1.0);
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (s[j] == 0.0) continue;
    const double sign = s[j] > 0.0 ? 1.0 : -1.0;
    g[j] = outer * std::pow(std::abs(s[j]), p - 1.0) * sign / e_max_vec[j];
  }
  return g;
}

template <class T>
std::span<const T> view(const std::vector<T>& v) {
  return std::span<const T>(v.data(), v.size());
}

}  // namespace

template <class T>
struct NlpProblem::IntervalOut {
  std::vector<T> residuals;  // (d+1)*nx: stage equations, then endpoint equation
  std::vector<T> e_hat;      // nx
  T lagrange{0.0};
};

NlpProblem::NlpProblem(OcpSpec spec, Discretization disc, RegConfig reg)
    : spec_(std::move(spec)), disc_(std::move(disc)), reg_(std::move(reg)) {
  spec_.validate();
  const auto& pair = disc_.pair;
  const int d = pair.stages();
  if (disc_.N < 1) throw TranscriptionError("N must be >= 1");
  if (d < 1 || pair.base.A.rows() != d || pair.base.A.cols() != d || pair.base.c.size() != d ||
      pair.b_hat.size() != d)
    throw TranscriptionError("embedded tableau has inconsistent dimensions");
  if (disc_.free_time != spec_.free_time.has_value())
    throw TranscriptionError("free_time flag does not match the OCP horizon");
  if (std::isnan(reg_.e_max) || reg_.e_max <= 0.0)
    throw TranscriptionError(fmt::format("e_max must be positive, got {}", reg_.e_max));
  if (reg_.omega.size() == 0) reg_.omega = spec_.omega;
  if (reg_.omega.size() != spec_.model.nx)
    throw TranscriptionError(fmt::format("omega has dimension {}, expected {}", reg_.omega.size(),
                                         spec_.model.nx));
  if ((reg_.omega.array() <= 0.0).any()) throw TranscriptionError("omega must be positive");
  if (!(reg_.p >= 1.0) || !(reg_.q >= 1.0))
    throw TranscriptionError("regularizer exponents p and q must be >= 1");
  if (reg_.enabled() && std::isinf(reg_.p))
    throw TranscriptionError("p = infinity is not differentiable and cannot be optimized");
  if (std::isinf(reg_.q)) throw TranscriptionError("q must be finite");

  layout_ = Layout{spec_.model.nx, spec_.model.nu, d, disc_.N, disc_.free_time};
  const double inf = std::numeric_limits<double>::infinity();
  lo_ = Eigen::VectorXd::Constant(layout_.size(), -inf);
  hi_ = Eigen::VectorXd::Constant(layout_.size(), inf);
  for (int k = 0; k < layout_.N; ++k) {
    lo_.segment(layout_.u(k), layout_.nu) = spec_.u_bounds.lo;
    hi_.segment(layout_.u(k), layout_.nu) = spec_.u_bounds.hi;
  }
  if (spec_.x_bounds)
    for (int k = 0; k <= layout_.N; ++k) {
      lo_.segment(layout_.x(k), layout_.nx) = spec_.x_bounds->lo;
      hi_.segment(layout_.x(k), layout_.nx) = spec_.x_bounds->hi;
    }
  if (layout_.free_time) {
    lo_[layout_.tf()] = spec_.free_time->lower();
    hi_[layout_.tf()] = spec_.free_time->upper();
  }
  if (reg_.enabled()) e_max_vec_ = reg_.e_max_vector(layout_.N);
}

Eigen::Index NlpProblem::num_eq() const {
  return static_cast<Eigen::Index>(layout_.nx) * (1 + layout_.N * (layout_.d + 1));
}

Eigen::Index NlpProblem::num_ineq() const {
  return spec_.path ? static_cast<Eigen::Index>(spec_.path.out_dim()) * layout_.N : 0;
}

template <class T>
void NlpProblem::eval_interval(std::span<const T> local, IntervalOut<T>& out) const {
  const int nx = layout_.nx;
  const int nu = layout_.nu;
  const int d = layout_.d;
  const Tableau& tab = disc_.pair.base;
  const auto x = local.subspan(0, nx);
  const auto x_next = local.subspan(nx, nx);
  const auto z = local.subspan(2 * nx, static_cast<std::size_t>(d) * nx);
  const auto u = local.subspan(static_cast<std::size_t>(2 + d) * nx, nu);
  const T h = (layout_.free_time ? local.back() : T(spec_.t_f)) / static_cast<double>(layout_.N);

  std::vector<T> k(static_cast<std::size_t>(d) * nx);
  for (int i = 0; i < d; ++i)
    spec_.model.f(z.subspan(static_cast<std::size_t>(i) * nx, nx), u,
                  std::span<T>(k).subspan(static_cast<std::size_t>(i) * nx, nx));

  out.residuals.assign(static_cast<std::size_t>(d + 1) * nx, T(0.0));
  out.e_hat.assign(nx, T(0.0));
  for (int c = 0; c < nx; ++c) {
    for (int i = 0; i < d; ++i) {
      T acc(0.0);
      for (int j = 0; j < d; ++j)
        if (tab.A(i, j) != 0.0) acc += tab.A(i, j) * k[j * nx + c];
      out.residuals[i * nx + c] = z[i * nx + c] - x[c] - h * acc;
    }
    T incr(0.0);
    T diff(0.0);
    for (int i = 0; i < d; ++i) {
      if (tab.b[i] != 0.0) incr += tab.b[i] * k[i * nx + c];
      const double db = disc_.pair.b_hat[i] - tab.b[i];
      if (db != 0.0) diff += db * k[i * nx + c];
    }
    out.residuals[d * nx + c] = x_next[c] - x[c] - h * incr;
    out.e_hat[c] = h * diff;
  }

  out.lagrange = T(0.0);
  if (spec_.lagrange) {
    T l[1];
    for (int i = 0; i < d; ++i) {
      if (tab.b[i] == 0.0) continue;
      spec_.lagrange(z.subspan(static_cast<std::size_t>(i) * nx, nx), u, std::span<T>(l, 1));
      out.lagrange += tab.b[i] * l[0];
    }
    out.lagrange = h * out.lagrange;
  }
}

namespace {

template <class T>
std::vector<T> gather_t(std::span<const T> w, const std::vector<Eigen::Index>& idx) {
  std::vector<T> v;
  v.reserve(idx.size());
  for (Eigen::Index i : idx) v.push_back(w[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

std::vector<double> NlpProblem::gather(const Eigen::VectorXd& w, int k) const {
  return gather_t(std::span<const double>(w.data(), w.size()), layout_.interval_indices(k));
}

template <class T>
T NlpProblem::cost_t(std::span<const T> w) const {
  T j(0.0);
  if (spec_.mayer) {
    T m[1];
    spec_.mayer(w.subspan(layout_.x(layout_.N), layout_.nx), std::span<const T>(),
                std::span<T>(m, 1));
    j += m[0];
  }
  if (spec_.lagrange) {
    IntervalOut<T> out;
    for (int k = 0; k < layout_.N; ++k) {
      const std::vector<T> local = gather_t(w, layout_.interval_indices(k));
      eval_interval(view(local), out);
      j += out.lagrange;
    }
  }
  return j;
}

template <class T>
std::vector<T> NlpProblem::estimates_t(std::span<const T> w) const {
  std::vector<T> e;
  e.reserve(static_cast<std::size_t>(layout_.N) * layout_.nx);
  IntervalOut<T> out;
  for (int k = 0; k < layout_.N; ++k) {
    const std::vector<T> local = gather_t(w, layout_.interval_indices(k));
    eval_interval(view(local), out);
    e.insert(e.end(), out.e_hat.begin(), out.e_hat.end());
  }
  return e;
}

template <class T>
std::vector<T> NlpProblem::eq_residuals_t(std::span<const T> w) const {
  std::vector<T> r;
  r.reserve(static_cast<std::size_t>(num_eq()));
  for (int c = 0; c < layout_.nx; ++c) r.push_back(w[layout_.x(0) + c] - spec_.x0[c]);
  IntervalOut<T> out;
  for (int k = 0; k < layout_.N; ++k) {
    const std::vector<T> local = gather_t(w, layout_.interval_indices(k));
    eval_interval(view(local), out);
    r.insert(r.end(), out.residuals.begin(), out.residuals.end());
  }
  return r;
}

double NlpProblem::cost(const Eigen::VectorXd& w) const {
  return cost_t(std::span<const double>(w.data(), w.size()));
}

Eigen::VectorXd NlpProblem::error_estimates(const Eigen::VectorXd& w) const {
  const std::vector<double> e = estimates_t(std::span<const double>(w.data(), w.size()));
  return Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
}

double NlpProblem::phi(const Eigen::VectorXd& w) const {
  if (!reg_.enabled()) return 0.0;
  const Eigen::VectorXd e = error_estimates(w);
  return phi_value(std::span<const double>(e.data(), e.size()), e_max_vec_, reg_.p, reg_.q);
}

double NlpProblem::objective(const Eigen::VectorXd& w) const { return cost(w) + phi(w); }

Dual NlpProblem::objective(std::span<const Dual> w) const {
  Dual j = cost_t(w);
  if (reg_.enabled()) {
    const std::vector<Dual> e = estimates_t(w);
    j += phi_value(view(e), e_max_vec_, reg_.p, reg_.q);
  }
  return j;
}

std::vector<Dual> NlpProblem::eq_residuals(std::span<const Dual> w) const {
  return eq_residuals_t(w);
}

Eigen::VectorXd NlpProblem::objective_gradient(const Eigen::VectorXd& w) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout_.size());
  const int nx = layout_.nx;
  if (spec_.mayer) {
    const Eigen::VectorXd xN = w.segment(layout_.x(layout_.N), nx);
    auto mayer = [this](auto xs) {
      using T = typename decltype(xs)::value_type;
      T m[1];
      spec_.mayer(xs, std::span<const T>(), std::span<T>(m, 1));
      return m[0];
    };
    g.segment(layout_.x(layout_.N), nx) += ad::gradient(mayer, xN);
  }
  if (!spec_.lagrange && !reg_.enabled()) return g;

  Eigen::VectorXd dphi;
  if (reg_.enabled()) dphi = phi_gradient(error_estimates(w), e_max_vec_, reg_.p, reg_.q);

  for (int k = 0; k < layout_.N; ++k) {
    const std::vector<Eigen::Index> idx = layout_.interval_indices(k);
    const std::vector<double> local = gather(w, k);
    // rows 0..nx-1: e_hat, row nx: Lagrange contribution
    auto f = [this](auto v) {
      using T = typename decltype(v)::value_type;
      IntervalOut<T> out;
      eval_interval(v, out);
      std::vector<T> r = out.e_hat;
      r.push_back(out.lagrange);
      return r;
    };
    const Eigen::MatrixXd jac =
        ad::jacobian(f, Eigen::Map<const Eigen::VectorXd>(local.data(), local.size()));
    Eigen::VectorXd contrib = jac.row(nx).transpose();
    if (reg_.enabled()) contrib += jac.topRows(nx).transpose() * dphi.segment(k * nx, nx);
    for (std::size_t j = 0; j < idx.size(); ++j) g[idx[j]] += contrib[static_cast<Eigen::Index>(j)];
  }
  return g;
}

Eigen::VectorXd NlpProblem::eq_residuals(const Eigen::VectorXd& w) const {
  const std::vector<double> r = eq_residuals_t(std::span<const double>(w.data(), w.size()));
  return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

Eigen::MatrixXd NlpProblem::eq_jacobian(const Eigen::VectorXd& w) const {
  const int nx = layout_.nx;
  const int block = (layout_.d + 1) * nx;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(num_eq(), layout_.size());
  jac.block(0, layout_.x(0), nx, nx).setIdentity();
  auto f = [this](auto v) {
    using T = typename decltype(v)::value_type;
    IntervalOut<T> out;
    eval_interval(v, out);
    return out.residuals;
  };
  for (int k = 0; k < layout_.N; ++k) {
    const std::vector<Eigen::Index> idx = layout_.interval_indices(k);
    const std::vector<double> local = gather(w, k);
    const Eigen::MatrixXd local_jac =
        ad::jacobian(f, Eigen::Map<const Eigen::VectorXd>(local.data(), local.size()));
    const Eigen::Index row0 = nx + static_cast<Eigen::Index>(k) * block;
    for (std::size_t j = 0; j < idx.size(); ++j)
      jac.block(row0, idx[j], block, 1) += local_jac.col(static_cast<Eigen::Index>(j));
  }
  return jac;
}

Eigen::VectorXd NlpProblem::ineq_residuals(const Eigen::VectorXd& w) const {
  const Eigen::Index m = num_ineq();
  Eigen::VectorXd r(m);
  if (m == 0) return r;
  const int nh = spec_.path.out_dim();
  for (int k = 0; k < layout_.N; ++k)
    r.segment(static_cast<Eigen::Index>(k) * nh, nh) =
        spec_.path(Eigen::VectorXd(w.segment(layout_.x(k), layout_.nx)),
                   Eigen::VectorXd(w.segment(layout_.u(k), layout_.nu)));
  return r;
}

Eigen::MatrixXd NlpProblem::ineq_jacobian(const Eigen::VectorXd& w) const {
  const Eigen::Index m = num_ineq();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, layout_.size());
  if (m == 0) return jac;
  const int nx = layout_.nx;
  const int nu = layout_.nu;
  const int nh = spec_.path.out_dim();
  auto f = [this, nx, nu, nh](auto v) {
    using T = typename decltype(v)::value_type;
    std::vector<T> out(static_cast<std::size_t>(nh));
    spec_.path(v.subspan(0, nx), v.subspan(nx, nu), std::span<T>(out));
    return out;
  };
  for (int k = 0; k < layout_.N; ++k) {
    Eigen::VectorXd local(nx + nu);
    local << w.segment(layout_.x(k), nx), w.segment(layout_.u(k), nu);
    const Eigen::MatrixXd lj = ad::jacobian(f, local);
    const Eigen::Index row0 = static_cast<Eigen::Index>(k) * nh;
    jac.block(row0, layout_.x(k), nh, nx) = lj.leftCols(nx);
    jac.block(row0, layout_.u(k), nh, nu) = lj.rightCols(nu);
  }
  return jac;
}

double NlpProblem::horizon(const Eigen::VectorXd& w) const {
  return layout_.free_time ? w[layout_.tf()] : spec_.t_f;
}

Eigen::MatrixXd NlpProblem::nodes(const Eigen::VectorXd& w) const {
  return Eigen::Map<const Eigen::MatrixXd>(w.data(), layout_.nx, layout_.N + 1);
}

Eigen::MatrixXd NlpProblem::controls(const Eigen::VectorXd& w) const {
  return Eigen::Map<const Eigen::MatrixXd>(w.data() + layout_.u(0), layout_.nu, layout_.N);
}

Eigen::MatrixXd NlpProblem::stages(const Eigen::VectorXd& w, int k) const {
  return Eigen::Map<const Eigen::MatrixXd>(w.data() + layout_.z(k), layout_.nx, layout_.d);
}

NlpProblem build_nlp(const OcpSpec& spec, const Discretization& disc, const RegConfig& reg) {
  return NlpProblem(spec, disc, reg);
}

double eval_phi(const NlpProblem& nlp, const Eigen::VectorXd& w, const RegConfig& reg) {
  if (!reg.enabled()) return 0.0;
  if (!(reg.e_max > 0.0)) throw TranscriptionError("e_max must be positive");
  RegConfig r = reg;
  if (r.omega.size() == 0) r.omega = nlp.spec().omega;
  const Eigen::VectorXd e = nlp.error_estimates(w);
  return phi_value(std::span<const double>(e.data(), e.size()), r.e_max_vector(nlp.layout().N),
                   r.p, r.q);
}

Eigen::VectorXd phi_limit_constraint(const NlpProblem& nlp, const Eigen::VectorXd& w,
                                     const RegConfig& reg) {
  RegConfig r = reg;
  if (r.omega.size() == 0) r.omega = nlp.spec().omega;
  return r.e_max_vector(nlp.layout().N) - nlp.error_estimates(w).cwiseAbs();
}

Eigen::VectorXd initial_guess(const OcpSpec& spec, const Discretization& disc,
                              const InitPolicy& policy) {
  const Layout lay{spec.model.nx, spec.model.nu, disc.pair.stages(), disc.N, disc.free_time};
  const double t_f = spec.horizon();
  const double h = t_f / disc.N;
  const Eigen::VectorXd u =
      Eigen::VectorXd::Constant(lay.nu, policy.value).cwiseMax(spec.u_bounds.lo).cwiseMin(spec.u_bounds.hi);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(lay.size());
  for (int k = 0; k < disc.N; ++k) w.segment(lay.u(k), lay.nu) = u;
  if (lay.free_time) w[lay.tf()] = t_f;
  w.segment(lay.x(0), lay.nx) = spec.x0;

  if (policy.kind == InitPolicy::Kind::kConstantControl) {
    Eigen::VectorXd x = spec.x0;
    for (int k = 0; k < disc.N; ++k) {
      try {
        const StepResult step = rk_step(spec.model, disc.pair.base, x, u, h);
        w.segment(lay.z(k), static_cast<Eigen::Index>(lay.d) * lay.nx) =
            Eigen::Map<const Eigen::VectorXd>(step.z.data(), step.z.size());
        x = step.x_next;
      } catch (const IntegrationError&) {
        // hold the state where the stage equations cannot be solved
        for (int i = 0; i < lay.d; ++i) w.segment(lay.z(k, i), lay.nx) = x;
      }
      w.segment(lay.x(k + 1), lay.nx) = x;
    }
    return w;
  }

  std::vector<double> queries;
  const Eigen::VectorXd& c = disc.pair.base.c;
  for (int k = 0; k < disc.N; ++k) {
    queries.push_back(k * h);
    for (int i = 0; i < lay.d; ++i) queries.push_back(std::min(t_f, (k + c[i]) * h));
  }
  queries.push_back(t_f);
  PiecewiseControl control;
  control.values = u.replicate(1, disc.N);
  for (int k = 0; k <= disc.N; ++k) control.times.push_back(k == disc.N ? t_f : k * h);
  SimOptions opts;
  opts.query_times = queries;
  const Trajectory tr = simulate_adaptive(spec.model, control, spec.x0, opts);
  auto state_at = [&](double t) -> Eigen::VectorXd {
    const auto it = std::lower_bound(tr.t.begin(), tr.t.end(), t);
    return tr.x[static_cast<std::size_t>(it - tr.t.begin())];
  };
  for (int k = 0; k <= disc.N; ++k) w.segment(lay.x(k), lay.nx) = state_at(control.times[k]);
  for (int k = 0; k < disc.N; ++k)
    for (int i = 0; i < lay.d; ++i)
      w.segment(lay.z(k, i), lay.nx) = state_at(std::min(t_f, (k + c[i]) * h));
  return w;
}

}  // namespace ocpreg
