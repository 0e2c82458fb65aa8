#include <CLI11.hpp>

#include <iostream>

#include "sensa/log.hpp"
#include "sensa/study.hpp"

using namespace sensa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool configRequired = true) {
  auto* opt = cmd->add_option("--config", c.config, "study configuration (JSON)");
  if (configRequired) opt->required();
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--jobs", c.jobs, "worker threads / parallel simulator calls")
      ->check(CLI::PositiveNumber);
}

StudyMethod study_method(const std::string& name) {
  for (auto m : {StudyMethod::Morris, StudyMethod::Sobol, StudyMethod::Vars,
                 StudyMethod::Regression, StudyMethod::Tree, StudyMethod::Forest,
                 StudyMethod::Gpr}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::Config, "unknown method '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sensa: global sensitivity analysis workflow"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "progress messages");
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  Common common;
  StageOptions stage;
  std::vector<std::size_t> ladder;
  std::string table;
  bool spearman = false;
  std::vector<std::string> dates;
  std::string kge, tvsaMethod = "sobol";

  auto* sample = app.add_subcommand("sample", "generate the designs the configured methods need");
  add_common(sample, common);
  auto* run = app.add_subcommand("run", "evaluate the target on every design row");
  add_common(run, common);
  auto* analyze = app.add_subcommand("analyze", "compute every configured measure");
  add_common(analyze, common);
  analyze->add_option("--ladder", ladder, "LHS sample-size rungs for rank stability")
      ->delimiter(',');
  auto* compare = app.add_subcommand("compare", "ranking table, Kendall's W and correlations");
  add_common(compare, common, false);
  compare->add_option("--table", table, "standalone ranking CSV (param,<measures...>)");
  compare->add_flag("--spearman", spearman, "rank correlations instead of Pearson");
  auto* report = app.add_subcommand("report", "summary tables and plot data");
  add_common(report, common);
  auto* all = app.add_subcommand("all", "sample, run, analyze, compare and report in one go");
  add_common(all, common);
  auto* tvsa = app.add_subcommand("tvsa", "time-varying analysis of a gr6j series");
  add_common(tvsa, common);
  tvsa->add_option("--dates", dates, "ISO dates")->delimiter(',');
  tvsa->add_option("--kge", kge, "KGE window FROM:TO (ISO dates)");
  tvsa->add_option("--method", tvsaMethod, "morris|sobol|vars|regression|tree|forest|gpr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  set_log_level(quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warn);
  stage.jobs = common.jobs;
  stage.ladder = ladder;

  try {
    if (compare->parsed() && !table.empty()) {
      compare_table_file(table, spearman, std::cout);
      return 0;
    }
    require(!common.config.empty(), ErrorKind::Config, "--config is required");
    auto cfg = load_study(common.config, common.seed);
    if (compare->parsed() && spearman) cfg.spearman = true;

    if (sample->parsed()) cmd_sample(cfg, stage);
    if (run->parsed()) cmd_run(cfg, stage);
    if (analyze->parsed()) cmd_analyze(cfg, stage);
    if (compare->parsed()) cmd_compare(cfg, stage);
    if (report->parsed()) cmd_report(cfg, stage);
    if (all->parsed()) {
      cmd_sample(cfg, stage);
      cmd_run(cfg, stage);
      cmd_analyze(cfg, stage);
      cmd_compare(cfg, stage);
      cmd_report(cfg, stage);
    }
    if (tvsa->parsed()) {
      TvsaOptions tv;
      tv.method = study_method(tvsaMethod);
      try {
        for (const auto& d : dates) tv.dates.push_back(parse_iso_date(d));
        if (!kge.empty()) {
          const auto colon = kge.find(':');
          require(colon != std::string::npos, ErrorKind::Config, "--kge expects FROM:TO");
          tv.kgeRange = {parse_iso_date(kge.substr(0, colon)), parse_iso_date(kge.substr(colon + 1))};
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(ErrorKind::Config, std::string("bad date: ") + e.what());
      }
      cmd_tvsa(cfg, stage, tv);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "sensa: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "sensa: " << e.what() << "\n";
    return 3;
  }
}
