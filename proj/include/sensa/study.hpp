#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensa/adapter.hpp"
#include "sensa/compare.hpp"
#include "sensa/core.hpp"
#include "sensa/morris.hpp"
#include "sensa/regress.hpp"
#include "sensa/sampling.hpp"
#include "sensa/sobol.hpp"
#include "sensa/testbed.hpp"

namespace sensa {

enum class StudyMethod { Morris, Sobol, Vars, Regression, Tree, Forest, Gpr };

std::string_view to_string(StudyMethod m);
DesignKind design_kind_for(StudyMethod m);

/// One analyzed output column.
struct OutputSpec {
  std::string name;    // column name in every stage file
  std::string source;  // builtin: "y"; gr6j: series name; external: output name
  std::optional<std::int64_t> day;  // gr6j point outputs
  std::optional<std::pair<std::int64_t, std::int64_t>> kgeRange;  // gr6j KGE, inclusive days
  bool log = false;    // log-transform before every estimator
};

struct FilterSpec {
  std::string output;
  std::optional<double> min;
  std::optional<double> max;
};

enum class TargetKind { Builtin, Gr6j, External };

struct TargetSpec {
  TargetKind kind = TargetKind::Builtin;
  std::optional<AnalyticFn> fn;
  // gr6j
  std::optional<std::filesystem::path> forcingPath;
  std::size_t syntheticDays = 1100;
  std::uint64_t forcingSeed = 1;
  std::int64_t startDay = 0;
  std::size_t warmup = 365;
  Gr6jParams fixed;        // values of GR6J parameters not in the space
  Gr6jParams reference;    // pseudo-observation run for KGE outputs
  double obsNoise = 0.1;   // multiplicative lognormal sd
  // external
  SimulatorSpec simulator;
};

struct StudyConfig {
  nlohmann::json json;  // effective configuration, hashed
  std::string hash;     // 16 hex digits
  std::uint64_t seed = 0;
  std::vector<ParameterDef> params;
  TargetSpec target;
  std::vector<OutputSpec> outputs;
  std::vector<StudyMethod> methods;
  MorrisDesignConfig morris;
  SobolBlockConfig sobolDesign;
  SobolOptions sobol;
  VarsStarConfig vars;
  LhsConfig lhs;
  OlsOptions ols;
  TreeOptions tree;
  ForestOptions forest;
  GprOptions gpr;
  std::vector<FilterSpec> filters;
  std::vector<std::string> compareMeasures;
  bool spearman = false;
  std::filesystem::path dir;

  ParameterSpace space() const { return ParameterSpace(params); }
  bool uses(StudyMethod m) const;
  std::vector<DesignKind> design_kinds() const;
};

/// Parses and validates a study. Relative paths resolve against `baseDir`.
/// All semantic errors are Config errors.
StudyConfig parse_study(nlohmann::json json, const std::filesystem::path& baseDir,
                        std::optional<std::uint64_t> seedOverride = std::nullopt);
StudyConfig load_study(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seedOverride = std::nullopt);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// ---------------------------------------------------------------------------
// Library entry points shared by the stages.

DesignMatrix build_design(const StudyConfig& cfg, DesignKind kind);

/// Evaluates the target on every row; raw values, one column per output.
OutputMatrix evaluate_target(const StudyConfig& cfg, const DesignMatrix& design,
                             std::size_t jobs);

/// Range filters (all outputs), then the log transform of `column` when
/// configured. Non-positive values under the log mask their row for this
/// column's analysis only.
OutputMatrix prepare_outputs(const StudyConfig& cfg, const OutputMatrix& raw, std::size_t column);

struct MethodOutcome {
  std::vector<SensitivityResult> results;
  std::optional<ElementaryEffects> ee;
  std::optional<RegTree> tree;
};

MethodOutcome analyze_method(const StudyConfig& cfg, StudyMethod method,
                             const DesignMatrix& design, const OutputMatrix& out,
                             std::size_t column, std::size_t jobs);

// ---------------------------------------------------------------------------
// Pipeline stages. Each reads and writes files under cfg.dir.

struct StageOptions {
  std::size_t jobs = 1;
  std::vector<std::size_t> ladder;  // analyze: LHS sample-size rungs
};

void cmd_sample(const StudyConfig& cfg, const StageOptions& opts);
void cmd_run(const StudyConfig& cfg, const StageOptions& opts);
void cmd_analyze(const StudyConfig& cfg, const StageOptions& opts);
void cmd_compare(const StudyConfig& cfg, const StageOptions& opts);
void cmd_report(const StudyConfig& cfg, const StageOptions& opts);

struct TvsaOptions {
  std::vector<std::int64_t> dates;
  std::optional<std::pair<std::int64_t, std::int64_t>> kgeRange;
  StudyMethod method = StudyMethod::Sobol;
};
void cmd_tvsa(const StudyConfig& cfg, const StageOptions& opts, const TvsaOptions& tvsa);

/// Kendall's W and correlations of a standalone ranking CSV, printed as text.
Concordance compare_table_file(const std::filesystem::path& path, bool spearman,
                               std::ostream& out);

/// 0 ok, 2 configuration or stale inputs, 3 data, 4 child-process batch.
int exit_code_for(ErrorKind kind);

}  // namespace sensa
