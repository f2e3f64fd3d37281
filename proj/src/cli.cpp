#include "ocpreg/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace ocpreg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(key, "must be finite");
  return v;
}

int integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError(key, "expected an integer");
  return j.get<int>();
}

std::string string(const json& j, const std::string& key) {
  if (!j.is_string()) throw ConfigError(key, "expected a string");
  return j.get<std::string>();
}

std::vector<double> number_list(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key, "expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i)
    v.push_back(number(j[i], fmt::format("{}[{}]", key, i)));
  return v;
}

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

Eigen::VectorXd to_vector(const json& j, const std::string& key) {
  const std::vector<double> v = number_list(j, key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void parse_solver(const json& j, SolverConfig& s) {
  if (!j.is_object()) throw ConfigError("solver", "expected an object");
  for (const auto& [key, val] : j.items()) {
    const std::string k = "solver." + key;
    if (key == "tol_stationarity") s.tol_stationarity = number(val, k);
    else if (key == "tol_feasibility") s.tol_feasibility = number(val, k);
    else if (key == "max_outer") s.max_outer = integer(val, k);
    else if (key == "max_inner") s.max_inner = integer(val, k);
    else if (key == "initial_penalty") s.initial_penalty = number(val, k);
    else if (key == "penalty_growth") s.penalty_growth = number(val, k);
    else if (key == "max_penalty") s.max_penalty = number(val, k);
    else if (key == "memory") s.memory = integer(val, k);
    else if (key == "armijo") s.armijo = number(val, k);
    else if (key == "backtrack") s.backtrack = number(val, k);
    else if (key == "max_backtracks") s.max_backtracks = integer(val, k);
    else throw ConfigError(k, "unknown key");
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("solver", e.what());
  }
}

InitPolicy parse_init(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "simulate") return InitPolicy::simulate(0.0);
    throw ConfigError("init", "expected \"simulate\" or {\"constant\": value}");
  }
  if (j.is_object() && j.size() == 1) {
    if (j.contains("constant")) return InitPolicy::constant(number(j["constant"], "init.constant"));
    if (j.contains("simulate")) return InitPolicy::simulate(number(j["simulate"], "init.simulate"));
  }
  throw ConfigError("init", "expected \"simulate\" or {\"constant\": value}");
}

json init_json(const InitPolicy& p) {
  return p.kind == InitPolicy::Kind::kConstantControl ? json{{"constant", p.value}}
                                                      : json{{"simulate", p.value}};
}

bool parse_stage_count(const std::string& name, const std::string& prefix, int& s) {
  if (name.rfind(prefix, 0) != 0) return false;
  const std::string rest = name.substr(prefix.size());
  if (rest.empty() || !std::all_of(rest.begin(), rest.end(), ::isdigit) || rest.size() > 3)
    throw TableauError(fmt::format("invalid stage count in tableau name '{}'", name));
  s = std::stoi(rest);
  return true;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  f << text;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "model") {
      cfg.model = string(val, key);
    } else if (key == "tableau") {
      cfg.tableau = string(val, key);
    } else if (key == "gamma0") {
      cfg.gamma0 = number(val, key);
      if (cfg.gamma0 == 0.0) throw ConfigError(key, "must be nonzero");
    } else if (key == "N") {
      cfg.N = integer(val, key);
      if (*cfg.N < 1) throw ConfigError(key, "must be >= 1");
    } else if (key == "e_max") {
      if (val.is_string() && val.get<std::string>() == "off") {
        cfg.e_max = kInf;
      } else {
        cfg.e_max = number(val, key);
        if (!(cfg.e_max > 0.0)) throw ConfigError(key, "must be positive or \"off\"");
      }
    } else if (key == "omega") {
      if (val.is_string() && val.get<std::string>() == "default") {
        cfg.omega.reset();
      } else {
        cfg.omega = to_vector(val, key);
        if ((cfg.omega->array() <= 0.0).any()) throw ConfigError(key, "entries must be positive");
      }
    } else if (key == "p") {
      cfg.p = number(val, key);
      if (cfg.p < 1.0) throw ConfigError(key, "must be >= 1");
    } else if (key == "q") {
      cfg.q = number(val, key);
      if (cfg.q < 1.0) throw ConfigError(key, "must be >= 1");
    } else if (key == "init") {
      cfg.init = parse_init(val);
    } else if (key == "solver") {
      parse_solver(val, cfg.solver);
    } else if (key == "seed_list") {
      cfg.seed_list = number_list(val, key);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  try {
    tableau_by_name(cfg.tableau, cfg.gamma0);
  } catch (const TableauError& e) {
    throw ConfigError(j.contains("gamma0") && is_implicit_name(cfg.tableau) ? "gamma0" : "tableau",
                      e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("", fmt::format("cannot read config '{}'", path.string()));
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("", fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["model"] = cfg.model;
  j["tableau"] = cfg.tableau;
  j["gamma0"] = cfg.gamma0;
  if (cfg.N) j["N"] = *cfg.N;
  j["e_max"] = std::isinf(cfg.e_max) ? json("off") : json(cfg.e_max);
  j["omega"] = cfg.omega ? vec(*cfg.omega) : json("default");
  j["p"] = cfg.p;
  j["q"] = cfg.q;
  j["init"] = init_json(cfg.init);
  const SolverConfig& s = cfg.solver;
  j["solver"] = {{"tol_stationarity", s.tol_stationarity},
                 {"tol_feasibility", s.tol_feasibility},
                 {"max_outer", s.max_outer},
                 {"max_inner", s.max_inner},
                 {"initial_penalty", s.initial_penalty},
                 {"penalty_growth", s.penalty_growth},
                 {"max_penalty", s.max_penalty},
                 {"memory", s.memory},
                 {"armijo", s.armijo},
                 {"backtrack", s.backtrack},
                 {"max_backtracks", s.max_backtracks}};
  if (!cfg.seed_list.empty()) j["seed_list"] = cfg.seed_list;
  return j;
}

bool is_implicit_name(const std::string& name) {
  return name.rfind("gl:", 0) == 0 || name.rfind("radau2a:", 0) == 0;
}

EmbeddedTableau tableau_by_name(const std::string& name, std::optional<double> gamma0) {
  if (name == "heun_euler") return heun_euler();
  if (name == "fehlberg45") return fehlberg45();
  if (name == "dormand_prince54") return dormand_prince54();
  int s = 0;
  Tableau t;
  if (parse_stage_count(name, "gl:", s)) {
    t = gauss_legendre(s);
  } else if (parse_stage_count(name, "radau2a:", s)) {
    t = radau2a(s);
  } else {
    throw TableauError(fmt::format("unknown tableau '{}'", name));
  }
  if (gamma0) return extend_with_embedded(t, *gamma0);
  return EmbeddedTableau{t, Eigen::VectorXd(), 0};
}

json tableau_to_json(const Tableau& t) {
  return {{"name", t.name}, {"A", mat(t.A)}, {"b", vec(t.b)}, {"c", vec(t.c)}, {"p", t.order}};
}

json tableau_to_json(const EmbeddedTableau& t) {
  json j = tableau_to_json(t.base);
  if (t.b_hat.size()) {
    j["b_hat"] = vec(t.b_hat);
    j["p_hat"] = t.embedded_order;
  }
  return j;
}

Experiment build_experiment(const ExperimentConfig& cfg, const ModelRegistry& registry) {
  if (!registry.contains(cfg.model))
    throw ConfigError("model", fmt::format("unknown model '{}'", cfg.model));
  Experiment ex{registry.get(cfg.model), {}, {}};
  if (cfg.N) ex.spec.N = *cfg.N;
  try {
    ex.disc = Discretization::for_spec(ex.spec, tableau_by_name(cfg.tableau, cfg.gamma0));
  } catch (const TableauError& e) {
    throw ConfigError("tableau", e.what());
  }
  ex.reg.e_max = cfg.e_max;
  ex.reg.omega = cfg.omega ? *cfg.omega : ex.spec.omega;
  if (ex.reg.omega.size() != ex.spec.model.nx)
    throw ConfigError("omega", fmt::format("expected {} entries for model '{}'", ex.spec.model.nx,
                                           cfg.model));
  ex.reg.p = cfg.p;
  ex.reg.q = cfg.q;
  try {
    NlpProblem probe(ex.spec, ex.disc, ex.reg);
  } catch (const TranscriptionError& e) {
    throw ConfigError(std::isinf(cfg.p) ? "p" : "", e.what());
  } catch (const ModelError& e) {
    throw ConfigError("N", e.what());
  }
  return ex;
}

json solution_to_json(const ExperimentConfig& cfg, const NlpProblem& nlp, const Solution& sol) {
  json j;
  j["config"] = to_json(cfg);
  j["model"] = nlp.spec().model.name;
  j["tableau"] = nlp.disc().pair.name();
  j["N"] = nlp.layout().N;
  j["status"] = to_string(sol.status);
  j["message"] = sol.message;
  j["objective"] = sol.objective;
  j["phi"] = sol.phi;
  j["kkt"] = {{"stationarity", sol.kkt.stationarity},
              {"feasibility", sol.kkt.feasibility},
              {"complementarity", sol.kkt.complementarity}};
  j["outer_iterations"] = sol.outer_iterations;
  j["inner_iterations"] = sol.inner_iterations;
  j["t_f"] = nlp.horizon(sol.w_star);
  j["controls"] = mat(nlp.controls(sol.w_star));
  j["nodes"] = mat(nlp.nodes(sol.w_star));
  j["w"] = vec(sol.w_star);
  j["multipliers"] = vec(sol.multipliers);
  j["ineq_multipliers"] = vec(sol.ineq_multipliers);
  return j;
}

KktResiduals revalidate_solution(const json& solution) {
  if (!solution.contains("config")) throw ConfigError("config", "missing in solution file");
  const ExperimentConfig cfg = parse_config(solution["config"]);
  const Experiment ex = build_experiment(cfg);
  const NlpProblem nlp(ex.spec, ex.disc, ex.reg);
  const Eigen::VectorXd w = to_vector(solution.at("w"), "w");
  if (w.size() != nlp.num_vars()) throw ConfigError("w", "dimension does not match the config");
  return kkt_residuals(nlp, w, to_vector(solution.at("multipliers"), "multipliers"),
                       to_vector(solution.at("ineq_multipliers"), "ineq_multipliers"));
}

namespace {

struct Common {
  std::string config;
  std::string out_dir = ".";
  bool gnuplot = false;
  int jobs = 1;
};

fs::path prepare_out(const Common& c) {
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  return dir;
}

int cmd_solve(const Common& c, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c.config);
  const Experiment ex = build_experiment(cfg);
  const NlpProblem nlp(ex.spec, ex.disc, ex.reg);

  std::vector<InitPolicy> starts;
  for (double s : cfg.seed_list) starts.push_back(InitPolicy::constant(s));
  if (starts.empty()) starts.push_back(cfg.init);

  struct Run {
    Solution sol;
    std::string log;
    bool ok = false;
    std::string error;
  };
  std::vector<Run> runs(starts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < starts.size(); i = next++) {
      std::ostringstream log;
      try {
        runs[i].sol = solve(nlp, initial_guess(ex.spec, ex.disc, starts[i]), cfg.solver, &log);
        runs[i].ok = true;
      } catch (const std::exception& e) {
        runs[i].error = e.what();
      }
      runs[i].log = log.str();
    }
  };
  std::vector<std::thread> pool;
  const int jobs = std::max(1, std::min<int>(c.jobs, static_cast<int>(starts.size())));
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // converged first, then lowest total objective
  const Run* best = nullptr;
  for (const Run& r : runs) {
    if (!r.ok) continue;
    if (!best) {
      best = &r;
      continue;
    }
    const bool rc = r.sol.status == SolveStatus::kConverged;
    const bool bc = best->sol.status == SolveStatus::kConverged;
    if (rc != bc ? rc : r.sol.objective + r.sol.phi < best->sol.objective + best->sol.phi)
      best = &r;
  }
  if (!best) {
    out << "solve failed: " << runs.front().error << "\n";
    return kSolverFailure;
  }

  const fs::path dir = prepare_out(c);
  const Solution& sol = best->sol;
  write_text(dir / "solution.json", solution_to_json(cfg, nlp, sol).dump(2) + "\n");
  write_text(dir / "log.csv", best->log);
  const SimReport rep = sim_error(nlp, sol.w_star);
  std::ostringstream report;
  write_report_csv(report, rep);
  write_text(dir / "report.csv", report.str());
  if (c.gnuplot)
    write_text(dir / "plot.gp",
               "set datafile separator ','\n"
               "set key autotitle columnhead\n"
               "set logscale y\n"
               "set xlabel 'interval'\n"
               "plot 'report.csv' using 1:2 with linespoints, "
               "'' using 1:3 with linespoints\n");

  fmt::print(out,
             "status {}  J {:.12g}  phi {:.6g}  stat {:.3g}  feas {:.3g}  iters {}/{}  "
             "J_sim {:.12g}  E_sim {:.3g}\n",
             to_string(sol.status), sol.objective, sol.phi, sol.kkt.stationarity,
             sol.kkt.feasibility, sol.outer_iterations, sol.inner_iterations, rep.j_sim, rep.e_sim);
  return sol.status == SolveStatus::kConverged ? kOk : kSolverFailure;
}

std::vector<double> parse_emax_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    if (item == "off") {
      values.push_back(kInf);
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0) || !std::isfinite(v))
      throw ConfigError("--emax-list", fmt::format("invalid value '{}'", item));
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("--emax-list", "no values given");
  return values;
}

int cmd_sweep(const Common& c, const std::string& list, bool cold, std::ostream& out) {
  const std::vector<double> values = parse_emax_list(list);
  const ExperimentConfig cfg = load_config(c.config);
  const Experiment ex = build_experiment(cfg);
  SweepOptions opts;
  opts.reg = ex.reg;
  opts.init = cfg.init;
  opts.solver = cfg.solver;
  opts.cold_start = cold;
  opts.jobs = c.jobs;
  const std::vector<SweepRow> rows = sweep_emax(ex.spec, ex.disc, values, opts);

  const fs::path dir = prepare_out(c);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_text(dir / "sweep.csv", csv.str());
  if (c.gnuplot)
    write_text(dir / "plot.gp",
               "set datafile separator ','\n"
               "set key autotitle columnhead\n"
               "set logscale xy\n"
               "set xlabel 'e_max'\n"
               "plot 'sweep.csv' using 1:5 with linespoints\n");
  out << csv.str();
  const bool all = std::all_of(rows.begin(), rows.end(),
                               [](const SweepRow& r) { return r.status == "converged"; });
  return all ? kOk : kSolverFailure;
}

int cmd_scan(const Common& c, const std::string& grid, std::ostream& out) {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
  {
    std::stringstream ss(grid);
    std::string a, b, m;
    if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, m) ||
        !ss.eof())
      throw ConfigError("--grid", "expected lo:hi:n");
    try {
      lo = std::stod(a);
      hi = std::stod(b);
      n = std::stoi(m);
    } catch (const std::exception&) {
      throw ConfigError("--grid", "expected lo:hi:n");
    }
    if (n < 1 || !(lo <= hi)) throw ConfigError("--grid", "need n >= 1 and lo <= hi");
  }
  const ExperimentConfig cfg = load_config(c.config);
  const Experiment ex = build_experiment(cfg);
  const std::vector<ScanRow> rows = feasible_set_scan(ex.spec, ex.disc, linear_grid(lo, hi, n), ex.reg);

  const fs::path dir = prepare_out(c);
  std::ostringstream csv;
  write_scan_csv(csv, rows);
  write_text(dir / "scan.csv", csv.str());
  if (c.gnuplot)
    write_text(dir / "plot.gp",
               "set datafile separator ','\n"
               "set key autotitle columnhead\n"
               "set xlabel 'u'\n"
               "plot 'scan.csv' using 1:2 with lines, '' using 1:3 with lines\n");
  fmt::print(out, "{} rows written to {}\n", rows.size(), (dir / "scan.csv").string());
  return kOk;
}

int cmd_tableau(const std::string& name, std::optional<double> gamma0, std::ostream& out) {
  if (gamma0 && *gamma0 == 0.0) throw ConfigError("--gamma0", "must be nonzero");
  const EmbeddedTableau t = tableau_by_name(name, is_implicit_name(name) ? gamma0 : std::nullopt);
  if (t.b_hat.size()) {
    out << format_butcher(t);
  } else {
    out << format_butcher(t.base);
  }
  const double base_res = max_abs_residual(check_order_conditions(t.base, t.base.order));
  fmt::print(out, "order {}: max order-condition residual {:.3e}\n", t.base.order, base_res);
  if (t.b_hat.size()) {
    const double emb_res = max_abs_residual(
        check_order_conditions(t.base.A, t.b_hat, t.base.c, t.embedded_order));
    fmt::print(out, "embedded order {}: max order-condition residual {:.3e}\n", t.embedded_order,
               emb_res);
  }
  out << tableau_to_json(t).dump(2) << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple-shooting optimal control with integration-error regularization", "ocpreg"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub, bool with_config) {
    if (with_config)
      sub->add_option("config", common.config, "experiment config (JSON)")->required();
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_flag("--emit-gnuplot", common.gnuplot, "write a gnuplot script next to the CSVs");
    sub->add_option("--jobs", common.jobs, "concurrent solves")->check(CLI::PositiveNumber);
  };

  auto* solve_cmd = app.add_subcommand("solve", "solve one experiment");
  add_common(solve_cmd, true);

  std::string emax_list;
  bool cold = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep the error budget e_max");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--emax-list", emax_list, "comma-separated values, 'off' disables")
      ->required();
  sweep_cmd->add_flag("--cold-start", cold, "start every row from the configured init");

  std::string grid;
  auto* scan_cmd = app.add_subcommand("scan", "objective over the feasible set");
  add_common(scan_cmd, true);
  scan_cmd->add_option("--grid", grid, "lo:hi:n")->required();

  std::string tab_name;
  std::optional<double> gamma0;
  auto* tab_cmd = app.add_subcommand("tableau", "print a Butcher tableau");
  tab_cmd->add_option("name", tab_name, "tableau name")->required();
  tab_cmd->add_option("--gamma0", gamma0, "extend an implicit tableau with embedded weights");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*solve_cmd) return cmd_solve(common, out);
    if (*sweep_cmd) return cmd_sweep(common, emax_list, cold, out);
    if (*scan_cmd) return cmd_scan(common, grid, out);
    if (*tab_cmd) return cmd_tableau(tab_name, gamma0, out);
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const TableauError& e) {
    fmt::print(err, "config error: 'tableau': {}\n", e.what());
    return kConfigError;
  } catch (const AnalysisError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    fmt::print(err, "solver failure: {}\n", e.what());
    return kSolverFailure;
  }
  return kConfigError;
}

}  // namespace ocpreg::cli
