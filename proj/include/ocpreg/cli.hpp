#pragma once

#include "ocpreg/analysis.hpp"
#include "ocpreg/models.hpp"
#include "ocpreg/nlpsolve.hpp"
#include "ocpreg/tableau.hpp"
#include "ocpreg/transcribe.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocpreg::cli {

/// Invalid configuration; `key` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : "'" + key + "': " + what), key(std::move(key)) {}
  std::string key;
};

enum ExitCode : int { kOk = 0, kConfigError = 1, kSolverFailure = 2 };

struct ExperimentConfig {
  std::string model = "minimal";
  std::string tableau = "gl:4";
  double gamma0 = kDefaultGamma0;
  std::optional<int> N;  // model default when absent
  double e_max = std::numeric_limits<double>::infinity();
  std::optional<Eigen::VectorXd> omega;  // model default when absent
  double p = 2.0;
  double q = 2.0;
  InitPolicy init = InitPolicy::constant(0.0);
  SolverConfig solver;
  std::vector<double> seed_list;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// "heun_euler", "fehlberg45", "dormand_prince54", "gl:s", "radau2a:s".
/// Implicit tableaus are extended with `gamma0`; without it they have no
/// embedded weights and b_hat is left empty.
EmbeddedTableau tableau_by_name(const std::string& name, std::optional<double> gamma0);
bool is_implicit_name(const std::string& name);

nlohmann::json tableau_to_json(const EmbeddedTableau& t);
nlohmann::json tableau_to_json(const Tableau& t);

/// Everything a solve needs, resolved from a config.
struct Experiment {
  OcpSpec spec;
  Discretization disc;
  RegConfig reg;
};

Experiment build_experiment(const ExperimentConfig& cfg,
                            const ModelRegistry& registry = ModelRegistry::with_builtins());

nlohmann::json solution_to_json(const ExperimentConfig& cfg, const NlpProblem& nlp,
                                const Solution& sol);

/// Reloads a solution.json, rebuilds the NLP from its embedded config and
/// returns the recomputed KKT residuals at the stored point and multipliers.
KktResiduals revalidate_solution(const nlohmann::json& solution);

/// Full command line; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ocpreg::cli
