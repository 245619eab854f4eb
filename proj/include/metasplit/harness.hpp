#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metasplit/diagnostics.hpp"
#include "metasplit/meta_trainer.hpp"
#include "metasplit/objectives.hpp"

namespace metasplit {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr std::string_view kToolVersion = "metasplit 0.1.0";

enum class Experiment { table2, oracle_validation, rank_scan, gradcheck, bounds_check };

std::string_view to_string(Experiment e) noexcept;
/// Throws invalid-config for unknown names.
Experiment parse_experiment(std::string_view name);

struct InstanceParams {
  int d = 50;
  int k = 5;
  double sigma = 0.5;
};

struct EvaluationParams {
  std::vector<int> nbar1{5, 15, 25};
  std::vector<double> lambda_grid = default_lambda_grid();
  int tune_tasks = 4000;
  int test_tasks = 100000;
};

struct Table2Params {
  std::vector<double> trtr_lambdas{0.0, 1.0, 10.0};
  double trva_lambda = 0.0;
  /// Training recipes; each row sets its own variant and lambda.
  TrainConfig trva_training;
  TrainConfig trtr_training;
};

enum class SpectrumShape { isotropic, linear };

struct OracleCell {
  int rank = 5;
  double expressiveness = 0.0;
  int n1 = 15;
  double sigma = 0.5;
  SpectrumShape spectrum = SpectrumShape::isotropic;
  double ratio = 0.2;  // smallest / largest singular value for linear spectra
};

struct WishartCell {
  int rows = 15;
  int cols = 5;
};

struct OracleParams {
  int tasks = 20000;
  int n2 = 20;
  double rel_tolerance = 0.03;
  double se_tolerance = 3.0;
  double max_cell_seconds = 60.0;
  std::vector<OracleCell> cells;
  int wishart_samples = 100000;
  double wishart_rel_tolerance = 0.02;
  double max_wishart_seconds = 30.0;
  WishartCell wishart_reference{15, 5};
  WishartCell wishart_boundary{6, 5};
};

struct RankScanParams {
  int n1 = 15;
  double max_seconds = 1.0;
};

struct GradcheckParams {
  int d = 6;
  int k = 2;
  int batch_tasks = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct BoundsParams {
  double kappa = 1e3;
  double trtr_lambda = 1.0;
  int small_n = 16;
  int large_n = 100;
  int trtr_tasks = 10000;
  double large_n_rel_tolerance = 0.05;
  double small_n_ceiling = 1e-4;
  int nbar1 = 15;
  int split_reps = 3;
  int split_tasks = 20000;
  int split_n2 = 15;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  Experiment experiment = Experiment::table2;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  InstanceParams instance;
  EvaluationParams evaluation;
  Table2Params table2;
  OracleParams oracle_validation;
  RankScanParams rank_scan;
  GradcheckParams gradcheck;
  BoundsParams bounds_check;
};

ExperimentConfig default_config(Experiment experiment);

/// Validates and reads a config document. Missing fields keep their defaults; unknown
/// keys, a missing or unsupported schema_version, and type errors throw invalid-config.
ExperimentConfig parse_config(const Json& doc, Experiment experiment);

Json config_to_json(const ExperimentConfig& config);

/// Applies "dotted.key=value" to a config document. The value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(Json& doc, std::string_view assignment);

/// Reads the file, applies overrides, then parses.
ExperimentConfig load_config(const std::filesystem::path& path, Experiment experiment,
                             const std::vector<std::string>& overrides);

struct ReportCell {
  std::string id;
  double estimate = 0.0;
  std::optional<double> std_error;  // nullopt means analytic
  std::optional<double> oracle;
  std::optional<double> bound;
  std::optional<bool> pass;
  Json extra = Json::object();
};

struct Check {
  std::string name;
  int criterion = 0;  // acceptance group, 0 for supporting checks
  bool pass = false;
  double value = 0.0;
  std::string target;
  std::string detail;
};

struct ModelReport {
  std::string name;
  bool trained = false;
  std::string error;
  SpectralReport spectrum;
  SubspaceAlignment alignment;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  long exact_fallbacks = 0;
  double train_seconds = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReportCell> cells;
  std::vector<ModelReport> models;
  std::vector<Check> checks;
  Json timings = Json::object();

  bool all_pass() const;
};

ExperimentReport run_table2(const ExperimentConfig& config, std::ostream* log = nullptr);
ExperimentReport run_oracle_validation(const ExperimentConfig& config, std::ostream* log = nullptr);
ExperimentReport run_rank_scan(const ExperimentConfig& config, std::ostream* log = nullptr);
ExperimentReport run_gradcheck(const ExperimentConfig& config, std::ostream* log = nullptr);
ExperimentReport run_bounds_check(const ExperimentConfig& config, std::ostream* log = nullptr);
ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

Json report_to_json(const ExperimentReport& report);

/// Writes report.json, table.csv and spectrum.csv into `dir`, each through a temporary
/// file renamed into place.
void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir);

/// "%.12g", with inf/-inf/nan spelled out.
std::string format_number(double x);

}  // namespace metasplit
