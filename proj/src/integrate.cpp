#include "ocpreg/integrate.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace ocpreg {

namespace {

Eigen::VectorXd eval_f(const OdeModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd k = model.f(x, u);
  if (!k.allFinite()) throw IntegrationError(fmt::format("non-finite dynamics in model '{}'", model.name));
  return k;
}

double scaled_inf_norm(const Eigen::VectorXd& r, const Eigen::VectorXd& x) {
  const Eigen::Index nx = x.size();
  double m = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) m = std::max(m, std::abs(r[i]) / (1.0 + std::abs(x[i % nx])));
  return m;
}

StepResult explicit_step(const OdeModel& model, const Tableau& t, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double h) {
  const int d = t.stages();
  StepResult r;
  r.stages_k.resize(model.nx, d);
  r.z.resize(model.nx, d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd zi = x;
    for (int j = 0; j < i; ++j)
      if (t.A(i, j) != 0.0) zi += h * t.A(i, j) * r.stages_k.col(j);
    r.z.col(i) = zi;
    r.stages_k.col(i) = eval_f(model, zi, u);
  }
  r.x_next = x + h * (r.stages_k * t.b);
  return r;
}

StepResult implicit_step(const OdeModel& model, const Tableau& t, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double h, const NewtonOptions& opts) {
  const int nx = model.nx;
  const int d = t.stages();
  const Eigen::Index n = static_cast<Eigen::Index>(nx) * d;

  // R_i(Z) = z_i - x - h sum_j a_ij f(z_j, u), stages stacked.
  auto residual = [&](auto zs) {
    using T = typename decltype(zs)::value_type;
    std::vector<T> uu(u.data(), u.data() + u.size());
    std::vector<T> k(static_cast<std::size_t>(n));
    for (int j = 0; j < d; ++j)
      model.f(zs.subspan(static_cast<std::size_t>(j) * nx, nx), std::span<const T>(uu),
              std::span<T>(k).subspan(static_cast<std::size_t>(j) * nx, nx));
    std::vector<T> r(static_cast<std::size_t>(n));
    for (int i = 0; i < d; ++i)
      for (int c = 0; c < nx; ++c) {
        T acc = zs[i * nx + c] - x[c];
        for (int j = 0; j < d; ++j)
          if (t.A(i, j) != 0.0) acc -= (h * t.A(i, j)) * k[j * nx + c];
        r[i * nx + c] = acc;
      }
    return r;
  };
  auto residual_value = [&](const Eigen::VectorXd& z) {
    const std::vector<double> r = residual(std::span<const double>(z.data(), z.size()));
    Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
    if (!out.allFinite())
      throw IntegrationError(fmt::format("non-finite dynamics in model '{}'", model.name));
    return out;
  };

  Eigen::VectorXd z = x.replicate(d, 1);
  Eigen::VectorXd r = residual_value(z);
  double rnorm = scaled_inf_norm(r, x);
  int iters = 0;
  while (rnorm > opts.tol) {
    if (iters >= opts.max_iters)
      throw NewtonError(fmt::format("Newton on stage equations did not converge in {} iterations "
                                    "(residual {:.3e})",
                                    opts.max_iters, rnorm),
                        rnorm);
    const Eigen::MatrixXd jac = ad::jacobian(residual, z);
    const Eigen::VectorXd dz = jac.partialPivLu().solve(-r);
    double step = 1.0;
    Eigen::VectorXd z_try = z + dz;
    Eigen::VectorXd r_try = residual_value(z_try);
    double rn_try = scaled_inf_norm(r_try, x);
    for (int halving = 0; halving < opts.max_halvings && rn_try > rnorm; ++halving) {
      step *= 0.5;
      z_try = z + step * dz;
      r_try = residual_value(z_try);
      rn_try = scaled_inf_norm(r_try, x);
    }
    z = std::move(z_try);
    r = std::move(r_try);
    rnorm = rn_try;
    ++iters;
  }

  StepResult out;
  out.newton_iters = iters;
  out.z = Eigen::Map<const Eigen::MatrixXd>(z.data(), nx, d);
  out.stages_k.resize(nx, d);
  for (int i = 0; i < d; ++i) out.stages_k.col(i) = eval_f(model, out.z.col(i), u);
  out.x_next = x + h * (out.stages_k * t.b);
  return out;
}

}  // namespace

StepResult rk_step(const OdeModel& model, const Tableau& tableau, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u, double h, const NewtonOptions& opts) {
  if (!(h > 0.0)) throw IntegrationError("rk_step: step size must be positive");
  if (x.size() != model.nx || u.size() != model.nu)
    throw IntegrationError("rk_step: state or control dimension mismatch");
  return tableau.is_explicit ? explicit_step(model, tableau, x, u, h)
                             : implicit_step(model, tableau, x, u, h, opts);
}

Eigen::VectorXd embedded_estimate(const StepResult& step, const EmbeddedTableau& pair, double h) {
  return h * (step.stages_k * (pair.b_hat - pair.base.b));
}

Eigen::VectorXd embedded_endpoint(const Eigen::VectorXd& x, const StepResult& step,
                                  const EmbeddedTableau& pair, double h) {
  return x + h * (step.stages_k * pair.b_hat);
}

PiecewiseControl PiecewiseControl::constant(const Eigen::VectorXd& u, double t0, double t1) {
  PiecewiseControl c;
  c.times = {t0, t1};
  c.values = u;
  return c;
}

namespace {

double rms_norm(const Eigen::VectorXd& e, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                double rtol, double atol) {
  if (e.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(x[i]), std::abs(y[i]));
    acc += (e[i] / sc) * (e[i] / sc);
  }
  return std::sqrt(acc / static_cast<double>(e.size()));
}

}  // namespace

Trajectory simulate_adaptive(const OdeModel& model, const PiecewiseControl& control,
                             const Eigen::VectorXd& x0, const SimOptions& opts) {
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0))
    throw IntegrationError("simulate_adaptive: tolerances must be positive");
  if (control.times.size() < 2 ||
      static_cast<Eigen::Index>(control.times.size()) != control.values.cols() + 1)
    throw IntegrationError("simulate_adaptive: control needs N+1 breakpoints for N values");
  if (control.values.rows() != model.nu)
    throw IntegrationError("simulate_adaptive: control dimension mismatch");

  static const EmbeddedTableau dp = dormand_prince54();
  const double t0 = control.times.front();
  const double t1 = control.times.back();
  const double span = t1 - t0;
  if (!(span > 0.0)) throw IntegrationError("simulate_adaptive: empty time span");

  std::vector<double> queries = opts.query_times.empty() ? control.times : opts.query_times;
  std::sort(queries.begin(), queries.end());
  for (double q : queries)
    if (q < t0 || q > t1) throw IntegrationError("simulate_adaptive: query time outside span");

  std::vector<double> marks = control.times;
  marks.insert(marks.end(), queries.begin(), queries.end());
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  Trajectory traj;
  std::size_t next_query = 0;
  auto record = [&](double t, const Eigen::VectorXd& x) {
    while (next_query < queries.size() && queries[next_query] == t) {
      traj.t.push_back(t);
      traj.x.push_back(x);
      ++next_query;
    }
  };

  Eigen::VectorXd x = x0;
  double t = t0;
  record(t, x);

  // PI controller constants (Hairer & Wanner, DOPRI5)
  constexpr double kBeta = 0.04;
  constexpr double kExpo = 0.2 - kBeta * 0.75;
  constexpr double kSafe = 0.9;
  constexpr double kFacMin = 0.2;  // largest step decrease is 1/kFacMin
  constexpr double kFacMax = 10.0;
  double err_old = 1e-4;
  double h = 0.0;

  std::size_t segment = 0;
  for (std::size_t m = 0; m + 1 < marks.size(); ++m) {
    const double a = marks[m];
    const double b = marks[m + 1];
    while (segment + 2 < control.times.size() && control.times[segment + 1] <= a) ++segment;
    const Eigen::VectorXd u = control.values.col(static_cast<Eigen::Index>(segment));

    if (h == 0.0) {
      // initial step guess
      const Eigen::VectorXd f0 = eval_f(model, x, u);
      const double d0 = rms_norm(x, x, x, opts.rtol, opts.atol);
      const double d1 = rms_norm(f0, x, x, opts.rtol, opts.atol);
      double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
      h0 = std::min(h0, b - a);
      const Eigen::VectorXd x1 = x + h0 * f0;
      const double d2 = rms_norm(eval_f(model, x1, u) - f0, x, x, opts.rtol, opts.atol) / h0;
      const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 0.2);
      h = std::min(100.0 * h0, h1);
    }

    while (t < b) {
      if (traj.accepted_steps + traj.rejected_steps >= opts.max_steps)
        throw IntegrationError("simulate_adaptive: maximum number of steps exceeded");
      if (h < 1e-14 * span)
        throw IntegrationError(fmt::format("simulate_adaptive: step size underflow at t = {}", t));
      const bool last = t + h >= b;
      const double h_try = last ? b - t : h;
      const StepResult step = rk_step(model, dp.base, x, u, h_try);
      const Eigen::VectorXd err = h_try * (step.stages_k * (dp.base.b - dp.b_hat));
      const double en = rms_norm(err, x, step.x_next, opts.rtol, opts.atol);
      if (!std::isfinite(en)) {
        h *= kFacMin;
        ++traj.rejected_steps;
        continue;
      }
      const double fac11 = std::pow(en, kExpo);
      if (en <= 1.0) {
        double fac = fac11 / std::pow(err_old, kBeta);
        fac = std::clamp(fac / kSafe, 1.0 / kFacMax, 1.0 / kFacMin);
        err_old = std::max(en, 1e-4);
        x = step.x_next;
        t = last ? b : t + h_try;
        ++traj.accepted_steps;
        const double h_new = h_try / fac;
        // a truncated final step says nothing about the natural step size
        h = last ? std::max(h, h_new) : h_new;
      } else {
        h = h_try / std::min(1.0 / kFacMin, fac11 / kSafe);
        ++traj.rejected_steps;
      }
    }
    record(b, x);
  }
  return traj;
}

Eigen::VectorXd reference_endpoint(const OdeModel& model, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u, double h, double rtol, double atol) {
  SimOptions opts;
  opts.rtol = rtol;
  opts.atol = atol;
  const Trajectory tr = simulate_adaptive(model, PiecewiseControl::constant(u, 0.0, h), x, opts);
  return tr.x.back();
}

Eigen::VectorXd true_local_error(const OdeModel& model, const Tableau& tableau,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& u, double h) {
  const StepResult step = rk_step(model, tableau, x, u, h);
  return step.x_next - reference_endpoint(model, x, u, h);
}

}  // namespace ocpreg
