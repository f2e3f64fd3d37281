#include "ocpreg/analysis.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace ocpreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// model extended by the running cost as a last state
OdeModel with_quadrature(const OcpSpec& spec) {
  const int nx = spec.model.nx;
  OdeModel m;
  m.name = spec.model.name + "+quad";
  m.nx = nx + 1;
  m.nu = spec.model.nu;
  const VectorMap f = spec.model.f;
  const VectorMap l = spec.lagrange;
  m.f = VectorMap(nx + 1, [f, l, nx](auto x, auto u, auto out) {
    using T = typename decltype(out)::value_type;
    f(x.first(nx), u, out.first(nx));
    if (l) {
      l(x.first(nx), u, out.subspan(nx, 1));
    } else {
      out[nx] = T(0.0);
    }
  });
  return m;
}

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

}  // namespace

SimReport sim_error(const NlpProblem& nlp, const Eigen::VectorXd& w, const Eigen::VectorXd& omega,
                    double rtol) {
  const OcpSpec& spec = nlp.spec();
  const Layout& lay = nlp.layout();
  const Eigen::VectorXd om = omega.size() ? omega : spec.omega;
  if (om.size() != lay.nx) throw AnalysisError("sim_error: omega has the wrong dimension");

  const double t_f = nlp.horizon(w);
  const double h = nlp.step(w);
  PiecewiseControl control;
  control.values = nlp.controls(w);
  for (int k = 0; k <= lay.N; ++k) control.times.push_back(k == lay.N ? t_f : k * h);

  Eigen::VectorXd x0(lay.nx + 1);
  x0 << spec.x0, 0.0;
  SimOptions opts;
  opts.rtol = rtol;
  opts.atol = rtol * 1e-2;
  const Trajectory tr = simulate_adaptive(with_quadrature(spec), control, x0, opts);

  SimReport rep;
  const Eigen::MatrixXd nodes = nlp.nodes(w);
  for (int k = 0; k <= lay.N; ++k) rep.x_sim.push_back(tr.x[k].head(lay.nx));
  double sum = 0.0;
  for (int k = 0; k < lay.N; ++k)
    sum += (rep.x_sim[k + 1] - nodes.col(k + 1)).cwiseQuotient(om).norm();
  rep.e_sim = sum / lay.N;

  rep.j_sim = tr.x.back()[lay.nx];
  if (spec.mayer) rep.j_sim += spec.mayer(rep.x_sim.back(), Eigen::VectorXd())[0];

  const Eigen::VectorXd e_hat = nlp.error_estimates(w);
  const EmbeddedTableau& pair = nlp.disc().pair;
  for (int k = 0; k < lay.N; ++k) {
    IntervalReport r;
    r.k = k;
    const Eigen::VectorXd ek = e_hat.segment(static_cast<Eigen::Index>(k) * lay.nx, lay.nx);
    r.e_hat_norm = ek.norm();
    const Eigen::VectorXd xk = nodes.col(k);
    const Eigen::VectorXd uk = control.values.col(k);
    Eigen::MatrixXd K(lay.nx, lay.d);
    const Eigen::MatrixXd Z = nlp.stages(w, k);
    for (int i = 0; i < lay.d; ++i) K.col(i) = spec.model.f(Eigen::VectorXd(Z.col(i)), uk);
    const Eigen::VectorXd x_emb = xk + h * (K * pair.b_hat);
    r.true_err_norm = (x_emb - reference_endpoint(spec.model, xk, uk, h)).norm();
    r.slack_min = nlp.reg().enabled()
                      ? (nlp.reg().e_max * nlp.reg().omega - ek.cwiseAbs()).minCoeff()
                      : kInf;
    rep.per_interval.push_back(r);
  }

  rep.solution_ref.model = spec.model.name;
  rep.solution_ref.tableau = pair.name();
  rep.solution_ref.N = lay.N;
  rep.solution_ref.e_max = nlp.reg().e_max;
  rep.solution_ref.p = nlp.reg().p;
  rep.solution_ref.q = nlp.reg().q;
  return rep;
}

SimReport sim_error(const Solution& sol, const OcpSpec& spec, const Discretization& disc,
                    const Eigen::VectorXd& omega, const RegConfig& reg) {
  const NlpProblem nlp(spec, disc, reg);
  return sim_error(nlp, sol.w_star, omega);
}

std::vector<SweepRow> sweep_emax(const OcpSpec& spec, const Discretization& disc,
                                 std::vector<double> values, const SweepOptions& opts) {
  if (values.empty()) throw AnalysisError("sweep: empty e_max list");
  for (double v : values)
    if (!(v > 0.0)) throw AnalysisError(fmt::format("sweep: e_max must be positive, got {}", v));
  std::sort(values.begin(), values.end(), std::greater<>());

  std::vector<SweepRow> rows(values.size());
  const Eigen::VectorXd w_init = initial_guess(spec, disc, opts.init);

  auto run = [&](std::size_t i, const Eigen::VectorXd& w0) {
    SweepRow& row = rows[i];
    row.e_max = values[i];
    try {
      RegConfig reg = opts.reg;
      reg.e_max = values[i];
      const NlpProblem nlp(spec, disc, reg);
      const Solution sol = solve(nlp, w0, opts.solver);
      row.w = sol.w_star;
      row.J = nlp.cost(sol.w_star);
      row.phi = sol.phi;
      row.iters = sol.inner_iterations;
      row.status = to_string(sol.status);
      const SimReport rep = sim_error(nlp, sol.w_star);
      row.J_sim = rep.j_sim;
      row.E_sim = rep.e_sim;
    } catch (const std::exception&) {
      row.J = row.phi = row.J_sim = row.E_sim = kNaN;
      row.status = "error";
    }
  };

  if (!opts.cold_start) {
    Eigen::VectorXd w = w_init;
    for (std::size_t i = 0; i < values.size(); ++i) {
      run(i, w);
      if (rows[i].w.size() == w_init.size() && rows[i].w.allFinite()) w = rows[i].w;
    }
    return rows;
  }

  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(values.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) run(i, w_init);
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

std::vector<ScanRow> feasible_set_scan(const OcpSpec& spec, const Discretization& disc,
                                       const std::vector<double>& u_grid, const RegConfig& reg) {
  if (spec.model.nu * disc.N != 1)
    throw AnalysisError(fmt::format(
        "scan unsupported for model '{}': {} control values, the scan needs exactly one",
        spec.model.name, spec.model.nu * disc.N));
  const NlpProblem nlp(spec, disc, reg);
  const Layout& lay = nlp.layout();
  const double h = spec.horizon() / disc.N;

  std::vector<ScanRow> rows;
  rows.reserve(u_grid.size());
  for (double u : u_grid) {
    ScanRow row;
    row.u = u;
    const Eigen::VectorXd uv = Eigen::VectorXd::Constant(1, u);
    try {
      const StepResult step = rk_step(spec.model, disc.pair.base, spec.x0, uv, h);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(lay.size());
      w.segment(lay.x(0), lay.nx) = spec.x0;
      w.segment(lay.x(1), lay.nx) = step.x_next;
      w.segment(lay.z(0), static_cast<Eigen::Index>(lay.d) * lay.nx) =
          Eigen::Map<const Eigen::VectorXd>(step.z.data(), step.z.size());
      w[lay.u(0)] = u;
      if (lay.free_time) w[lay.tf()] = spec.horizon();
      row.J = nlp.cost(w);
      row.J_reg = row.J + nlp.phi(w);
      row.e_hat_norm = nlp.error_estimates(w).norm();
      row.true_err_norm =
          (step.x_next - reference_endpoint(spec.model, spec.x0, uv, h)).norm();
    } catch (const IntegrationError&) {
      row.ok = false;
      row.J = row.J_reg = row.e_hat_norm = row.true_err_norm = kNaN;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> linear_grid(double lo, double hi, int n) {
  if (n < 1) throw AnalysisError("grid needs at least one point");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  if (n > 1) g.back() = hi;
  return g;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "e_max,J,phi,J_sim,E_sim,iters,status\n";
  for (const auto& r : rows)
    fmt::print(os, "{},{},{},{},{},{},{}\n", fmt_num(r.e_max), fmt_num(r.J), fmt_num(r.phi),
               fmt_num(r.J_sim), fmt_num(r.E_sim), r.iters, r.status);
}

void write_scan_csv(std::ostream& os, const std::vector<ScanRow>& rows) {
  os << "u,J,J_reg,e_hat_norm,true_err_norm\n";
  for (const auto& r : rows)
    fmt::print(os, "{},{},{},{},{}\n", fmt_num(r.u), fmt_num(r.J), fmt_num(r.J_reg),
               fmt_num(r.e_hat_norm), fmt_num(r.true_err_norm));
}

void write_report_csv(std::ostream& os, const SimReport& report) {
  os << "k,e_hat_norm,true_err_norm,slack_min\n";
  for (const auto& r : report.per_interval)
    fmt::print(os, "{},{},{},{}\n", r.k, fmt_num(r.e_hat_norm), fmt_num(r.true_err_norm),
               fmt_num(r.slack_min));
}

}  // namespace ocpreg
