#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>

#include "sensa/csv.hpp"
#include "sensa/log.hpp"
#include "sensa/morris.hpp"
#include "sensa/parallel.hpp"
#include "sensa/study.hpp"
#include "sensa/vars.hpp"

namespace sensa {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Designs and targets.

DesignMatrix build_design(const StudyConfig& cfg, DesignKind kind) {
  const auto space = cfg.space();
  switch (kind) {
    case DesignKind::Lhs: return lhs_maximin(space, cfg.lhs);
    case DesignKind::MorrisOat: return morris_oat(space, cfg.morris, derive_seed(cfg.seed, 0x307));
    case DesignKind::SobolBlocks:
      return sobol_blocks(space, cfg.sobolDesign, derive_seed(cfg.seed, 0x5b1));
    case DesignKind::VarsStars: return vars_stars(space, cfg.vars, derive_seed(cfg.seed, 0x7a5));
  }
  fail(ErrorKind::Config, "unknown design kind");
}

namespace {

Forcing load_forcing(const TargetSpec& t) {
  if (t.forcingPath) return read_forcing_csv(*t.forcingPath);
  return synthetic_forcing(t.syntheticDays, t.forcingSeed, t.startDay);
}

std::size_t day_index(const Forcing& f, std::int64_t day, std::size_t warmup,
                      const std::string& what) {
  require(!f.days.empty(), ErrorKind::Config, "forcing is empty");
  const auto first = f.days.front();
  require(day >= first + static_cast<std::int64_t>(warmup) && day <= f.days.back(),
          ErrorKind::Config,
          what + " date " + civil_from_days(day) + " is outside the analyzable range " +
              civil_from_days(first + static_cast<std::int64_t>(warmup)) + " .. " +
              civil_from_days(f.days.back()));
  return static_cast<std::size_t>(day - first);
}

/// Qsim-like series of the reference run with multiplicative lognormal noise.
std::vector<double> pseudo_observations(const TargetSpec& t, const Forcing& f,
                                        const std::string& series, std::uint64_t seed) {
  auto obs = gr6j_run(t.reference, f, t.warmup).series(series);
  Rng rng(derive_seed(seed, 0x0b5));
  for (auto& v : obs) {
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    v *= std::exp(t.obsNoise * z - 0.5 * t.obsNoise * t.obsNoise);
  }
  return obs;
}

Gr6jParams gr6j_params_for(const StudyConfig& cfg, std::span<const double> row) {
  std::vector<double> x{cfg.target.fixed.x1, cfg.target.fixed.x2, cfg.target.fixed.x3,
                        cfg.target.fixed.x4, cfg.target.fixed.x5, cfg.target.fixed.x6};
  for (std::size_t k = 0; k < cfg.params.size(); ++k) {
    const auto idx = static_cast<std::size_t>(cfg.params[k].name[1] - '1');
    x[idx] = row[k];
  }
  return Gr6jParams::from_values(x);
}

}  // namespace

OutputMatrix evaluate_target(const StudyConfig& cfg, const DesignMatrix& design,
                             std::size_t jobs) {
  const auto n = design.rows();
  const auto p = cfg.outputs.size();
  std::vector<std::string> names;
  for (const auto& o : cfg.outputs) names.push_back(o.name);
  Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));

  switch (cfg.target.kind) {
    case TargetKind::Builtin: {
      const auto& fn = *cfg.target.fn;
      parallel_for(n, jobs, [&](std::size_t i) {
        const auto u = design.unit.row(static_cast<Eigen::Index>(i));
        const double y = fn(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
        values.row(static_cast<Eigen::Index>(i)).setConstant(y);
      });
      return OutputMatrix::from_values(std::move(values), std::move(names));
    }
    case TargetKind::Gr6j: {
      const auto forcing = load_forcing(cfg.target);
      struct Pick {
        std::size_t index = 0;
        std::size_t from = 0, to = 0;
        std::vector<double> obs;
      };
      std::vector<Pick> picks(p);
      for (std::size_t j = 0; j < p; ++j) {
        const auto& o = cfg.outputs[j];
        if (o.day) {
          picks[j].index = day_index(forcing, *o.day, cfg.target.warmup, "output " + o.name);
        } else {
          picks[j].from = day_index(forcing, o.kgeRange->first, cfg.target.warmup, "KGE start");
          picks[j].to = day_index(forcing, o.kgeRange->second, cfg.target.warmup, "KGE end");
          picks[j].obs = pseudo_observations(cfg.target, forcing, o.source, cfg.seed);
        }
      }
      std::vector<std::uint8_t> ok(n, 1);
      parallel_for(n, jobs, [&](std::size_t i) {
        const auto m = design.mapped.row(static_cast<Eigen::Index>(i));
        try {
          const auto run = gr6j_run(
              gr6j_params_for(cfg, std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))),
              forcing, cfg.target.warmup);
          for (std::size_t j = 0; j < p; ++j) {
            const auto& o = cfg.outputs[j];
            const auto s = run.series(o.source);
            double v;
            if (o.day) {
              v = s[picks[j].index];
            } else {
              const std::span<const double> sim(s.data() + picks[j].from, picks[j].to - picks[j].from + 1);
              const std::span<const double> obs(picks[j].obs.data() + picks[j].from, sim.size());
              v = kge(sim, obs);
            }
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
          }
        } catch (const Error& e) {
          ok[i] = 0;
          values.row(static_cast<Eigen::Index>(i)).setConstant(std::nan(""));
        }
      });
      auto out = OutputMatrix::from_values(std::move(values), std::move(names));
      std::size_t failed = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!ok[i]) {
          out.valid[i] = 0;
          ++failed;
        }
      }
      if (failed > 0) log_warning("gr6j: " + std::to_string(failed) + " rows failed and are masked");
      return out;
    }
    case TargetKind::External: {
      auto spec = cfg.target.simulator;
      if (spec.maxParallel == 0) spec.maxParallel = std::max<std::size_t>(1, jobs);
      const auto raw = run_batch(spec, cfg.space(), design);
      for (std::size_t j = 0; j < p; ++j) {
        const auto src = *raw.index_of(cfg.outputs[j].source);
        values.col(static_cast<Eigen::Index>(j)) = raw.values.col(static_cast<Eigen::Index>(src));
      }
      auto out = OutputMatrix::from_values(std::move(values), std::move(names));
      for (std::size_t i = 0; i < n; ++i) out.valid[i] = out.valid[i] && raw.valid[i];
      return out;
    }
  }
  fail(ErrorKind::Config, "unknown target kind");
}

OutputMatrix prepare_outputs(const StudyConfig& cfg, const OutputMatrix& raw, std::size_t column) {
  OutputMatrix out = raw;
  for (const auto& f : cfg.filters) {
    const auto col = *out.index_of(f.output);
    out = filter_outputs(out, [&](std::span<const double> row) {
            return (!f.min || row[col] >= *f.min) && (!f.max || row[col] <= *f.max);
          }).output;
  }
  if (!cfg.outputs[column].log) return out;
  std::size_t masked = 0;
  const auto j = static_cast<Eigen::Index>(column);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double& v = out.values(static_cast<Eigen::Index>(i), j);
    if (v > 0.0) {
      v = std::log(v);
    } else {
      if (out.valid[i]) ++masked;
      out.valid[i] = 0;
      v = std::nan("");
    }
  }
  if (masked > 0) {
    log_warning("log transform of " + cfg.outputs[column].name + " masked " +
                std::to_string(masked) + " non-positive rows");
  }
  return out;
}

MethodOutcome analyze_method(const StudyConfig& cfg, StudyMethod method,
                             const DesignMatrix& design, const OutputMatrix& out,
                             std::size_t column, std::size_t jobs) {
  const auto params = cfg.space().names();
  MethodOutcome r;
  switch (method) {
    case StudyMethod::Morris: {
      r.ee = elementary_effects(design, out, column);
      r.results.push_back(morris_result(*r.ee, params));
      break;
    }
    case StudyMethod::Sobol: {
      auto opts = cfg.sobol;
      opts.jobs = jobs;
      auto idx = sobol_indices(design, out, column, opts);
      if (opts.bootReps > 0) {
        const auto [ds, dt] = dummy_cutoffs(design, out, column, opts);
        idx.dummyS1 = ds;
        idx.dummyT = dt;
      }
      auto [s1, t] = sobol_results(idx, params);
      r.results.push_back(std::move(s1));
      r.results.push_back(std::move(t));
      break;
    }
    case StudyMethod::Vars:
      r.results.push_back(vars_result(vars_analyze(design, out, column), params));
      break;
    case StudyMethod::Regression:
      r.results.push_back(ols_result(ols_src(design, out, column, cfg.ols), params));
      break;
    case StudyMethod::Tree: {
      r.tree = fit_regression_tree(design, out, column, cfg.tree);
      r.results.push_back(tree_result(*r.tree, params));
      break;
    }
    case StudyMethod::Forest: {
      auto opts = cfg.forest;
      opts.jobs = jobs;
      auto [perm, imp] = forest_results(fit_random_forest(design, out, column, opts), params);
      r.results.push_back(std::move(perm));
      r.results.push_back(std::move(imp));
      break;
    }
    case StudyMethod::Gpr: {
      auto opts = cfg.gpr;
      GprFit fit;
      std::string warning;
      try {
        fit = fit_gpr(design, out, column, opts);
      } catch (const GprConvergenceError& e) {
        log_warning(e.what());
        fit = e.best();
        warning = "optimizer did not converge; best point reported";
      }
      r.results.push_back(gpr_slope_result(fit, params));
      r.results.push_back(gpr_invrange_result(fit, params));
      if (!warning.empty()) {
        for (auto& res : r.results) res.warnings.push_back(warning);
      }
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Stage files.

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "missing stage input " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

/// Sidecar of a stage input, checked against the current configuration.
json checked_sidecar(const StudyConfig& cfg, const fs::path& path, const std::string& rerun) {
  require(fs::exists(path), ErrorKind::Io,
          "missing stage input " + path.string() + "; run `sensa " + rerun + "` first");
  auto j = read_json(path);
  require(j.value("config_hash", std::string{}) == cfg.hash, ErrorKind::StalePipeline,
          path.string() + " was produced by a different configuration (hash " +
              j.value("config_hash", std::string{"?"}) + ", current " + cfg.hash +
              "); rerun `sensa " + rerun + "`");
  return j;
}

std::string kind_name(DesignKind k) { return std::string(to_string(k)); }

fs::path design_path(const StudyConfig& cfg, DesignKind k) {
  return cfg.dir / ("design_" + kind_name(k) + ".csv");
}
fs::path outputs_path(const StudyConfig& cfg, DesignKind k) {
  return cfg.dir / ("outputs_" + kind_name(k) + ".csv");
}
fs::path sidecar(const fs::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}
fs::path result_dir(const StudyConfig& cfg, const std::string& output) {
  return cfg.dir / "results" / output;
}

json base_sidecar(const StudyConfig& cfg, const std::string& stage) {
  return json{{"config_hash", cfg.hash}, {"seed", cfg.seed}, {"stage", stage}};
}

void write_design(const StudyConfig& cfg, const DesignMatrix& d) {
  CsvTable t;
  t.header = cfg.space().names();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::vector<std::string> row;
    for (std::size_t k = 0; k < d.dims(); ++k) {
      row.push_back(format_double(d.mapped(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))));
    }
    t.rows.push_back(std::move(row));
  }
  const auto path = design_path(cfg, d.kind());
  fs::create_directories(path.parent_path());
  write_csv(path, t);
  auto j = base_sidecar(cfg, "sample");
  j["kind"] = kind_name(d.kind());
  j["rows"] = d.rows();
  j["params"] = t.header;
  if (d.kind() == DesignKind::Lhs) j["approximate"] = d.layout_as<LhsLayout>().approximate;
  write_json(sidecar(path), j);
}

/// Regenerates the design and insists the file on disk still matches it.
DesignMatrix load_design(const StudyConfig& cfg, DesignKind kind) {
  const auto path = design_path(cfg, kind);
  checked_sidecar(cfg, sidecar(path), "sample");
  auto d = build_design(cfg, kind);
  const auto t = read_csv(path);
  bool same = t.header == cfg.space().names() && t.rows.size() == d.rows();
  for (std::size_t i = 0; same && i < t.rows.size(); ++i) {
    for (std::size_t k = 0; same && k < d.dims(); ++k) {
      same = parse_double(t.rows[i][k]) ==
             d.mapped(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  require(same, ErrorKind::StalePipeline,
          path.string() + " does not match the configured design; rerun `sensa sample`");
  return d;
}

void write_outputs(const StudyConfig& cfg, DesignKind kind, const OutputMatrix& out) {
  CsvTable t;
  t.header.push_back("valid");
  t.header.insert(t.header.end(), out.names.begin(), out.names.end());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::vector<std::string> row{out.is_valid(i) ? "1" : "0"};
    for (std::size_t j = 0; j < out.cols(); ++j) {
      row.push_back(format_double(out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    t.rows.push_back(std::move(row));
  }
  const auto path = outputs_path(cfg, kind);
  write_csv(path, t);
  auto j = base_sidecar(cfg, "run");
  j["kind"] = kind_name(kind);
  j["rows"] = out.rows();
  j["valid_rows"] = out.valid_count();
  j["outputs"] = out.names;
  write_json(sidecar(path), j);
}

OutputMatrix load_outputs(const StudyConfig& cfg, DesignKind kind, std::size_t rows) {
  const auto path = outputs_path(cfg, kind);
  checked_sidecar(cfg, sidecar(path), "run");
  const auto t = read_csv(path);
  std::vector<std::string> names(t.header.begin() + 1, t.header.end());
  require(t.rows.size() == rows, ErrorKind::StalePipeline,
          path.string() + " has " + std::to_string(t.rows.size()) + " rows, design has " +
              std::to_string(rows) + "; rerun `sensa run`");
  Matrix values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
  std::vector<std::uint8_t> valid(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    valid[i] = t.rows[i][0] == "1";
    for (std::size_t j = 0; j < names.size(); ++j) {
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t.rows[i][j + 1]);
    }
  }
  auto out = OutputMatrix::from_values(std::move(values), std::move(names));
  for (std::size_t i = 0; i < rows; ++i) out.valid[i] = out.valid[i] && valid[i];
  return out;
}

void write_result(const StudyConfig& cfg, const std::string& output, StudyMethod method,
                  const SensitivityResult& r) {
  const auto k = r.params.size();
  CsvTable t;
  t.header = {"param", "raw", "scaled", "ci_low", "ci_high"};
  json extra_other = json::object();
  std::vector<std::string> extra_keys;
  for (const auto& [key, v] : r.extra) {
    if (v.size() == k) {
      extra_keys.push_back(key);
      t.header.push_back(key);
    } else {
      extra_other[key] = v;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::string> row{r.params[i], format_double(r.raw[i]), format_double(r.scaled[i])};
    row.push_back(r.ci ? format_double((*r.ci)[i].low) : "nan");
    row.push_back(r.ci ? format_double((*r.ci)[i].high) : "nan");
    for (const auto& key : extra_keys) row.push_back(format_double(r.extra.at(key)[i]));
    t.rows.push_back(std::move(row));
  }
  const auto dir = result_dir(cfg, output);
  fs::create_directories(dir);
  const std::string measure(to_string(r.method));
  write_csv(dir / (measure + ".csv"), t);
  auto j = base_sidecar(cfg, "analyze");
  j["measure"] = measure;
  j["method"] = std::string(to_string(method));
  j["output"] = output;
  j["scalars"] = r.scalars;
  j["warnings"] = r.warnings;
  j["extra"] = extra_other;
  write_json(dir / (measure + ".json"), j);
}

struct LoadedResult {
  SensitivityResult result;
  json meta;
};

std::optional<LoadedResult> load_result(const StudyConfig& cfg, const std::string& output,
                                        const std::string& measure) {
  const auto dir = result_dir(cfg, output);
  if (!fs::exists(dir / (measure + ".json"))) return std::nullopt;
  LoadedResult lr;
  lr.meta = checked_sidecar(cfg, dir / (measure + ".json"), "analyze");
  const auto t = read_csv(dir / (measure + ".csv"));
  auto& r = lr.result;
  r.method = *method_from_string(measure);
  std::vector<Interval> ci;
  bool has_ci = false;
  for (const auto& row : t.rows) {
    r.params.push_back(row[0]);
    r.raw.push_back(parse_double(row[1]));
    r.scaled.push_back(parse_double(row[2]));
    ci.push_back({parse_double(row[3]), parse_double(row[4])});
    has_ci = has_ci || !std::isnan(ci.back().low);
    for (std::size_t c = 5; c < t.header.size(); ++c) {
      r.extra[t.header[c]].push_back(parse_double(row[c]));
    }
  }
  if (has_ci) r.ci = std::move(ci);
  for (const auto& [key, v] : lr.meta.at("scalars").items()) {
    r.scalars[key] = v.is_number() ? v.get<double>() : std::nan("");
  }
  r.warnings = lr.meta.at("warnings").get<std::vector<std::string>>();
  require(r.params == cfg.space().names(), ErrorKind::StalePipeline,
          "result " + measure + " covers different parameters; rerun `sensa analyze`");
  return lr;
}

void write_leaves(const StudyConfig& cfg, const std::string& output, const RegTree& tree,
                  const DesignMatrix& design, const OutputMatrix& out, std::size_t column) {
  CsvTable t;
  t.header = {"row", "leaf", "fitted", "y"};
  const auto names = cfg.space().names();
  t.header.insert(t.header.end(), names.begin(), names.end());
  for (const auto& a : tree.leafTable) {
    const auto i = static_cast<Eigen::Index>(a.row);
    std::vector<std::string> row{std::to_string(a.row), std::to_string(a.leaf),
                                 format_double(a.fitted),
                                 format_double(out.values(i, static_cast<Eigen::Index>(column)))};
    for (Eigen::Index k = 0; k < design.mapped.cols(); ++k) row.push_back(format_double(design.mapped(i, k)));
    t.rows.push_back(std::move(row));
  }
  write_csv(result_dir(cfg, output) / "tree_leaves.csv", t);
}

void write_scatter(const StudyConfig& cfg, const std::string& output, const ElementaryEffects& ee) {
  CsvTable t;
  t.header = {"param", "mu_star", "sigma", "mu"};
  for (const auto& r : morris_scatter(ee, cfg.space().names())) {
    t.rows.push_back({r.param, format_double(r.muStar), format_double(r.sigma), format_double(r.mu)});
  }
  write_csv(result_dir(cfg, output) / "morris_scatter.csv", t);
}

/// Rank agreement of each LHS rung with the full sample, per measure.
void run_ladder(const StudyConfig& cfg, const StageOptions& opts, const DesignMatrix& lhs,
                const OutputMatrix& out, std::size_t column, const std::string& output) {
  CsvTable t;
  t.header = {"rung", "measure", "spearman_vs_full", "top_param"};
  const auto names = cfg.space().names();
  t.header.insert(t.header.end(), names.begin(), names.end());
  std::vector<std::size_t> rungs = opts.ladder;
  std::sort(rungs.begin(), rungs.end());
  rungs.erase(std::unique(rungs.begin(), rungs.end()), rungs.end());
  std::map<std::string, std::vector<double>> full;
  std::vector<std::pair<std::size_t, SensitivityResult>> rows;
  for (auto m : cfg.methods) {
    if (design_kind_for(m) != DesignKind::Lhs) continue;
    for (std::size_t rung : rungs) {
      require(rung <= lhs.rows(), ErrorKind::Config,
              "ladder rung " + std::to_string(rung) + " exceeds lhs.n = " + std::to_string(lhs.rows()));
      const auto sub = take_rows(lhs, 0, rung);
      OutputMatrix o;
      o.names = out.names;
      o.values = out.values.topRows(static_cast<Eigen::Index>(rung));
      o.valid.assign(out.valid.begin(), out.valid.begin() + static_cast<std::ptrdiff_t>(rung));
      try {
        for (auto& r : analyze_method(cfg, m, sub, o, column, opts.jobs).results) {
          rows.emplace_back(rung, std::move(r));
        }
      } catch (const Error& e) {
        log_warning("ladder rung " + std::to_string(rung) + " " + std::string(to_string(m)) +
                    ": " + e.what());
      }
    }
  }
  for (const auto& [rung, r] : rows) {
    if (rung == rungs.back()) full[std::string(to_string(r.method))] = r.scaled;
  }
  for (const auto& [rung, r] : rows) {
    const std::string measure(to_string(r.method));
    double rho = std::nan("");
    if (auto it = full.find(measure); it != full.end()) {
      const auto a = average_ranks(r.scaled), b = average_ranks(it->second);
      Eigen::Map<const Eigen::VectorXd> va(a.data(), static_cast<Eigen::Index>(a.size()));
      Eigen::Map<const Eigen::VectorXd> vb(b.data(), static_cast<Eigen::Index>(b.size()));
      const Eigen::VectorXd ca = va.array() - va.mean(), cb = vb.array() - vb.mean();
      if (ca.norm() > 0 && cb.norm() > 0) rho = ca.dot(cb) / (ca.norm() * cb.norm());
    }
    const auto top = static_cast<std::size_t>(
        std::max_element(r.scaled.begin(), r.scaled.end()) - r.scaled.begin());
    std::vector<std::string> row{std::to_string(rung), measure, format_double(rho), names[top]};
    for (double v : r.scaled) row.push_back(format_double(v));
    t.rows.push_back(std::move(row));
  }
  write_csv(result_dir(cfg, output) / "ladder.csv", t);
}

}  // namespace

void cmd_sample(const StudyConfig& cfg, const StageOptions&) {
  fs::create_directories(cfg.dir);
  for (auto kind : cfg.design_kinds()) {
    const auto d = build_design(cfg, kind);
    write_design(cfg, d);
    log_info("sample: " + kind_name(kind) + " design with " + std::to_string(d.rows()) + " rows");
  }
}

void cmd_run(const StudyConfig& cfg, const StageOptions& opts) {
  for (auto kind : cfg.design_kinds()) {
    const auto d = load_design(cfg, kind);
    const auto out = evaluate_target(cfg, d, opts.jobs);
    write_outputs(cfg, kind, out);
    log_info("run: " + kind_name(kind) + " " + std::to_string(out.valid_count()) + " of " +
             std::to_string(out.rows()) + " rows valid");
  }
}

void cmd_analyze(const StudyConfig& cfg, const StageOptions& opts) {
  std::map<DesignKind, std::pair<DesignMatrix, OutputMatrix>> raws;
  for (auto kind : cfg.design_kinds()) {
    auto d = load_design(cfg, kind);
    auto raw = load_outputs(cfg, kind, d.rows());
    require(raw.names.size() == cfg.outputs.size(), ErrorKind::StalePipeline,
            "outputs file columns do not match the configured outputs; rerun `sensa run`");
    raws.emplace(kind, std::pair{std::move(d), std::move(raw)});
  }
  std::size_t succeeded = 0;
  for (std::size_t col = 0; col < cfg.outputs.size(); ++col) {
    const auto& name = cfg.outputs[col].name;
    std::map<DesignKind, std::pair<const DesignMatrix&, OutputMatrix>> data;
    for (const auto& [kind, dr] : raws) {
      data.emplace(kind, std::pair<const DesignMatrix&, OutputMatrix>{dr.first, prepare_outputs(cfg, dr.second, col)});
    }
    const auto dir = result_dir(cfg, name);
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
    json failures = json::object();
    for (auto m : cfg.methods) {
      const auto& [design, out] = data.at(design_kind_for(m));
      try {
        auto outcome = analyze_method(cfg, m, design, out, col, opts.jobs);
        for (const auto& r : outcome.results) write_result(cfg, name, m, r);
        if (outcome.ee) write_scatter(cfg, name, *outcome.ee);
        if (outcome.tree) write_leaves(cfg, name, *outcome.tree, design, out, col);
        ++succeeded;
      } catch (const Error& e) {
        if (exit_code_for(e.kind()) != 3) throw;
        log_warning("analyze " + name + " / " + std::string(to_string(m)) + ": " + e.what());
        failures[std::string(to_string(m))] =
            std::string(to_string(e.kind())) + ": " + e.what();
      }
    }
    auto j = base_sidecar(cfg, "analyze");
    j["output"] = name;
    j["failed_methods"] = failures;
    write_json(dir / "analysis.json", j);
    if (!opts.ladder.empty() && data.count(DesignKind::Lhs)) {
      const auto& [design, out] = data.at(DesignKind::Lhs);
      run_ladder(cfg, opts, design, out, col, name);
    }
  }
  require(succeeded > 0, ErrorKind::NoData, "every method failed on every output");
}

namespace {

std::optional<RankingTable> ranking_for(const StudyConfig& cfg, const std::string& output,
                                        std::map<std::string, LoadedResult>* loaded = nullptr) {
  std::vector<std::string> measures;
  std::vector<std::vector<double>> cols;
  for (const auto& m : cfg.compareMeasures) {
    auto lr = load_result(cfg, output, m);
    if (!lr) continue;
    measures.push_back(m);
    cols.push_back(lr->result.scaled);
    if (loaded) loaded->emplace(m, std::move(*lr));
  }
  if (measures.size() < 2) {
    log_warning("compare " + output + ": fewer than two measures available");
    return std::nullopt;
  }
  const auto k = cfg.params.size();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(measures.size()));
  for (std::size_t j = 0; j < measures.size(); ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
    }
  }
  return RankingTable::from_columns(cfg.space().names(), measures, v);
}

json correlation_json(const Eigen::MatrixXd& r) {
  json rows = json::array();
  for (Eigen::Index a = 0; a < r.rows(); ++a) {
    json row = json::array();
    for (Eigen::Index b = 0; b < r.cols(); ++b) {
      if (std::isnan(r(a, b))) row.push_back(nullptr);
      else row.push_back(r(a, b));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_matrix_csv(const fs::path& path, const std::vector<std::string>& labels,
                      const Eigen::MatrixXd& m) {
  CsvTable t;
  t.header = {"measure"};
  t.header.insert(t.header.end(), labels.begin(), labels.end());
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    std::vector<std::string> row{labels[static_cast<std::size_t>(a)]};
    for (Eigen::Index b = 0; b < m.cols(); ++b) row.push_back(format_double(m(a, b)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::string fixed2(double v) {
  if (std::isnan(v)) return "  nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%5.2f", v);
  return buf;
}

}  // namespace

void cmd_compare(const StudyConfig& cfg, const StageOptions&) {
  const auto dir = cfg.dir / "compare";
  fs::create_directories(dir);
  for (const auto& o : cfg.outputs) {
    auto table = ranking_for(cfg, o.name);
    if (!table) continue;
    write_ranking_csv(dir / (o.name + "_ranking.csv"), *table);
    write_rank_csv(dir / (o.name + "_ranks.csv"), *table);
    const auto w = kendalls_w(*table);
    auto j = base_sidecar(cfg, "compare");
    j["output"] = o.name;
    j["measures"] = table->methods;
    j["kendall_w"] = w.w;
    j["chi_sq"] = w.chiSq;
    j["dof"] = w.dof;
    j["p_value"] = w.pValue;
    j["correlation"] = cfg.spearman ? "spearman" : "pearson";
    j["correlation_matrix"] = correlation_json(pairwise_correlation(*table, cfg.spearman));
    write_json(dir / (o.name + "_concordance.json"), j);
    log_info("compare " + o.name + ": Kendall's W = " + format_double(w.w));
  }
}

void cmd_report(const StudyConfig& cfg, const StageOptions&) {
  const auto root = cfg.dir / "report";
  if (fs::exists(root)) fs::remove_all(root);
  for (const auto& o : cfg.outputs) {
    const auto dir = root / o.name;
    fs::create_directories(dir);
    std::map<std::string, LoadedResult> loaded;
    auto table = ranking_for(cfg, o.name, &loaded);
    // Measures outside the comparison set still feed (b) and (c).
    for (const char* m : {"morris_dgsm", "sobol_s1", "sobol_t"}) {
      if (!loaded.count(m)) {
        if (auto lr = load_result(cfg, o.name, m)) loaded.emplace(m, std::move(*lr));
      }
    }
    std::string summary = "output " + o.name + "\n\n";

    if (table) {
      write_ranking_csv(dir / "a_importance.csv", *table);
      write_rank_csv(dir / "d_rank_heat.csv", *table);
      const auto w = kendalls_w(*table);
      const auto corr = pairwise_correlation(*table, cfg.spearman);
      write_matrix_csv(dir / "e_correlation.csv", table->methods, corr);
      CsvTable e;
      e.header = {"statistic", "value"};
      e.rows = {{"kendall_w", format_double(w.w)},
                {"chi_sq", format_double(w.chiSq)},
                {"dof", std::to_string(w.dof)},
                {"p_value", format_double(w.pValue)},
                {"measures", std::to_string(table->m())}};
      write_csv(dir / "e_concordance.csv", e);

      std::size_t width = 6;
      for (const auto& p : table->params) width = std::max(width, p.size());
      summary += std::string(width, ' ');
      for (const auto& m : table->methods) summary += "  " + m;
      summary += "\n";
      for (std::size_t i = 0; i < table->k(); ++i) {
        summary += table->params[i] + std::string(width - table->params[i].size(), ' ');
        for (std::size_t j = 0; j < table->m(); ++j) {
          const auto cell = fixed2(table->scaled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
          summary += "  " + std::string(table->methods[j].size() - std::min(table->methods[j].size(), cell.size()), ' ') + cell;
        }
        summary += "\n";
      }
      summary += "\nKendall's W = " + format_double(w.w) + " (chi-square " + format_double(w.chiSq) +
                 ", dof " + std::to_string(w.dof) + ", p = " + format_double(w.pValue) + ")\n";
    }

    if (loaded.count("morris_dgsm")) {
      const auto& r = loaded.at("morris_dgsm").result;
      CsvTable b;
      b.header = {"param", "mu_star", "sigma", "mu", "dgsm"};
      for (std::size_t i = 0; i < r.params.size(); ++i) {
        b.rows.push_back({r.params[i], format_double(r.extra.at("mu_star")[i]),
                          format_double(r.extra.at("sigma")[i]), format_double(r.extra.at("mu")[i]),
                          format_double(r.raw[i])});
      }
      write_csv(dir / "b_morris_scatter.csv", b);
    }

    if (loaded.count("sobol_s1") && loaded.count("sobol_t")) {
      const auto& s1 = loaded.at("sobol_s1").result;
      const auto& t = loaded.at("sobol_t").result;
      CsvTable c;
      c.header = {"param", "s1", "s1_low", "s1_high", "t", "t_low", "t_high", "dummy_s1", "dummy_t"};
      const auto scalar = [](const SensitivityResult& r, const char* key) {
        auto it = r.scalars.find(key);
        return it == r.scalars.end() ? std::string("nan") : format_double(it->second);
      };
      for (std::size_t i = 0; i < s1.params.size(); ++i) {
        c.rows.push_back({s1.params[i], format_double(s1.raw[i]),
                          s1.ci ? format_double((*s1.ci)[i].low) : "nan",
                          s1.ci ? format_double((*s1.ci)[i].high) : "nan",
                          format_double(t.raw[i]),
                          t.ci ? format_double((*t.ci)[i].low) : "nan",
                          t.ci ? format_double((*t.ci)[i].high) : "nan",
                          scalar(s1, "dummy_s1"), scalar(t, "dummy_t")});
      }
      write_csv(dir / "c_sobol_bars.csv", c);
    }

    const auto leaves = result_dir(cfg, o.name) / "tree_leaves.csv";
    if (fs::exists(leaves)) fs::copy_file(leaves, dir / "f_tree_leaves.csv");

    std::set<std::string> warned;
    for (const auto& [m, lr] : loaded) {
      for (const auto& w : lr.result.warnings) {
        if (warned.insert(m + ": " + w).second) summary += "warning " + m + ": " + w + "\n";
      }
    }
    const auto analysis = result_dir(cfg, o.name) / "analysis.json";
    if (fs::exists(analysis)) {
      for (const auto& [m, why] : read_json(analysis).at("failed_methods").items()) {
        summary += "failed " + m + ": " + why.get<std::string>() + "\n";
      }
    }
    write_text(dir / "summary.txt", summary);
  }
  write_json(root / "report.json", base_sidecar(cfg, "report"));
}

void cmd_tvsa(const StudyConfig& base, const StageOptions& opts, const TvsaOptions& tv) {
  require(base.target.kind == TargetKind::Gr6j, ErrorKind::Config,
          "tvsa needs a time-series target (gr6j)");
  require(!tv.dates.empty() || tv.kgeRange, ErrorKind::Config, "tvsa needs --dates or --kge");
  StudyConfig cfg = base;
  const std::string series = base.outputs.empty() ? "Qsim" : base.outputs.front().source;
  const bool log = !base.outputs.empty() && base.outputs.front().log;
  cfg.outputs.clear();
  cfg.filters.clear();
  for (auto d : tv.dates) cfg.outputs.push_back({series + "@" + civil_from_days(d), series, d, {}, log});
  if (tv.kgeRange) cfg.outputs.push_back({"kge_" + series, series, {}, tv.kgeRange, false});
  cfg.methods = {tv.method};

  // Range errors surface before any simulation.
  const auto forcing = load_forcing(cfg.target);
  for (const auto& o : cfg.outputs) {
    if (o.day) day_index(forcing, *o.day, cfg.target.warmup, "tvsa");
    if (o.kgeRange) {
      day_index(forcing, o.kgeRange->first, cfg.target.warmup, "tvsa KGE start");
      day_index(forcing, o.kgeRange->second, cfg.target.warmup, "tvsa KGE end");
    }
  }

  const auto kind = design_kind_for(tv.method);
  const auto design = build_design(cfg, kind);
  const auto raw = evaluate_target(cfg, design, opts.jobs);
  const auto dir = cfg.dir / "tvsa";
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);

  std::map<std::string, CsvTable> matrices;
  const auto names = cfg.space().names();
  for (std::size_t col = 0; col < cfg.outputs.size(); ++col) {
    const auto& name = cfg.outputs[col].name;
    const auto out = prepare_outputs(cfg, raw, col);
    auto outcome = analyze_method(cfg, tv.method, design, out, col, opts.jobs);
    for (const auto& r : outcome.results) {
      const std::string measure(to_string(r.method));
      auto& m = matrices[measure];
      if (m.header.empty()) {
        m.header = {"output"};
        m.header.insert(m.header.end(), names.begin(), names.end());
      }
      std::vector<std::string> row{name};
      for (double v : r.scaled) row.push_back(format_double(v));
      m.rows.push_back(std::move(row));

      CsvTable t;
      t.header = {"param", "raw", "scaled", "ci_low", "ci_high"};
      for (std::size_t i = 0; i < r.params.size(); ++i) {
        t.rows.push_back({r.params[i], format_double(r.raw[i]), format_double(r.scaled[i]),
                          r.ci ? format_double((*r.ci)[i].low) : "nan",
                          r.ci ? format_double((*r.ci)[i].high) : "nan"});
      }
      fs::create_directories(dir / name);
      write_csv(dir / name / (measure + ".csv"), t);
    }
  }
  for (const auto& [measure, m] : matrices) write_csv(dir / ("matrix_" + measure + ".csv"), m);
  auto j = base_sidecar(base, "tvsa");
  j["method"] = std::string(to_string(tv.method));
  std::vector<std::string> outs;
  for (const auto& o : cfg.outputs) outs.push_back(o.name);
  j["outputs"] = outs;
  write_json(dir / "tvsa.json", j);
}

Concordance compare_table_file(const fs::path& path, bool spearman, std::ostream& out) {
  const auto table = read_ranking_csv(path);
  const auto w = kendalls_w(table);
  out << "parameters " << table.k() << ", measures " << table.m() << "\n";
  out << "kendall_w " << format_double(w.w) << "\n";
  out << "chi_sq " << format_double(w.chiSq) << " dof " << w.dof << " p_value "
      << format_double(w.pValue) << "\n";
  const auto r = pairwise_correlation(table, spearman);
  out << (spearman ? "spearman" : "pearson") << "\n";
  for (Eigen::Index a = 0; a < r.rows(); ++a) {
    out << table.methods[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < r.cols(); ++b) out << ' ' << fixed2(r(a, b));
    out << "\n";
  }
  return w;
}

}  // namespace sensa
