#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "sensa/study.hpp"

namespace sensa {

using nlohmann::json;

std::string_view to_string(StudyMethod m) {
  switch (m) {
    case StudyMethod::Morris: return "morris";
    case StudyMethod::Sobol: return "sobol";
    case StudyMethod::Vars: return "vars";
    case StudyMethod::Regression: return "regression";
    case StudyMethod::Tree: return "tree";
    case StudyMethod::Forest: return "forest";
    case StudyMethod::Gpr: return "gpr";
  }
  return "unknown";
}

DesignKind design_kind_for(StudyMethod m) {
  switch (m) {
    case StudyMethod::Morris: return DesignKind::MorrisOat;
    case StudyMethod::Sobol: return DesignKind::SobolBlocks;
    case StudyMethod::Vars: return DesignKind::VarsStars;
    default: return DesignKind::Lhs;
  }
}

bool StudyConfig::uses(StudyMethod m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

std::vector<DesignKind> StudyConfig::design_kinds() const {
  std::vector<DesignKind> kinds;
  for (auto m : methods) {
    const auto k = design_kind_for(m);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

/// Object view that rejects keys nobody asked about, so typos surface as
/// configuration errors instead of silently falling back to defaults.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorKind::Config, path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::Config, "unknown key " + path_ + "." + key);
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const std::string& key) {
    require(has(key), ErrorKind::Config, "missing key " + path_ + "." + key);
    return j_.at(key);
  }
  std::string where(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(j_.at(key), where(key));
  }
  template <typename T>
  T get(const std::string& key) {
    return as<T>(at(key), where(key));
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
                ErrorKind::Config, where + " must be a nonnegative integer");
      } else if constexpr (std::is_same_v<T, int>) {
        require(v.is_number_integer(), ErrorKind::Config, where + " must be an integer");
      } else if constexpr (std::is_same_v<T, double>) {
        require(v.is_number(), ErrorKind::Config, where + " must be a number");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::int64_t parse_date(const json& v, const std::string& where) {
  require(v.is_string(), ErrorKind::Config, where + " must be an ISO date string");
  try {
    return parse_iso_date(v.get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::Config, where + ": " + e.what());
  }
}

StudyMethod parse_method(const std::string& name) {
  for (auto m : {StudyMethod::Morris, StudyMethod::Sobol, StudyMethod::Vars,
                 StudyMethod::Regression, StudyMethod::Tree, StudyMethod::Forest,
                 StudyMethod::Gpr}) {
    if (name == to_string(m)) return m;
  }
  fail(ErrorKind::Config, "unknown method '" + name +
                              "' (expected morris, sobol, vars, regression, tree, forest, gpr)");
}

void check_name(const std::string& name, const std::string& what) {
  static const std::regex ok("[A-Za-z0-9_.@-]+");
  require(std::regex_match(name, ok), ErrorKind::Config,
          what + " '" + name + "' may only use letters, digits and _ . @ -");
}

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

Gr6jParams gr6j_values(const json& v, const std::string& where) {
  require(v.is_array() && v.size() == 6, ErrorKind::Config, where + " needs six values");
  std::vector<double> x;
  for (const auto& e : v) x.push_back(Section::as<double>(e, where));
  return Gr6jParams::from_values(x);
}

void parse_target(Section& root, StudyConfig& cfg, const std::filesystem::path& baseDir) {
  Section t(root.at("target"), "target");
  const auto type = t.get<std::string>("type");
  auto& tg = cfg.target;
  if (type == "linear" || type == "ishigami" || type == "sobol_g") {
    tg.kind = TargetKind::Builtin;
    if (type == "linear") {
      tg.fn = AnalyticFn::linear(t.get<std::vector<double>>("weights"));
    } else if (type == "ishigami") {
      tg.fn = AnalyticFn::ishigami(t.get<double>("a", 7.0), t.get<double>("b", 0.1));
    } else {
      tg.fn = AnalyticFn::sobol_g(t.get<std::vector<double>>("a"));
    }
    require(tg.fn->dims() >= 1, ErrorKind::Config, "builtin target needs at least one input");
  } else if (type == "gr6j") {
    tg.kind = TargetKind::Gr6j;
    if (t.has("forcing")) {
      auto p = std::filesystem::path(t.get<std::string>("forcing"));
      tg.forcingPath = p.is_absolute() ? p : baseDir / p;
    }
    tg.syntheticDays = t.get<std::size_t>("synthetic_days", tg.syntheticDays);
    tg.forcingSeed = t.get<std::uint64_t>("forcing_seed", tg.forcingSeed);
    if (t.has("start")) tg.startDay = parse_date(t.at("start"), t.where("start"));
    tg.warmup = t.get<std::size_t>("warmup", tg.warmup);
    if (t.has("fixed")) tg.fixed = gr6j_values(t.at("fixed"), t.where("fixed"));
    if (t.has("reference")) tg.reference = gr6j_values(t.at("reference"), t.where("reference"));
    tg.obsNoise = t.get<double>("obs_noise", tg.obsNoise);
    require(tg.obsNoise >= 0.0, ErrorKind::Config, "target.obs_noise must be >= 0");
  } else if (type == "external") {
    tg.kind = TargetKind::External;
    auto& s = tg.simulator;
    s.command = t.get<std::vector<std::string>>("command");
    require(!s.command.empty(), ErrorKind::Config, "target.command is empty");
    std::filesystem::path exe(s.command.front());
    if (exe.has_parent_path() && exe.is_relative()) s.command.front() = (baseDir / exe).string();
    s.outputNames = t.get<std::vector<std::string>>("output_names");
    s.paramOrder = t.get("param_order", std::vector<std::string>{});
    s.timeoutSec = t.get<double>("timeout_sec", s.timeoutSec);
    s.maxParallel = t.get<std::size_t>("max_parallel", 0);
    s.perBatch = t.get<bool>("per_batch", false);
    s.maxFailFraction = t.get<double>("max_fail_fraction", s.maxFailFraction);
  } else {
    fail(ErrorKind::Config, "unknown target type '" + type +
                                "' (expected linear, ishigami, sobol_g, gr6j, external)");
  }
}

void parse_parameters(Section& root, StudyConfig& cfg) {
  if (root.has("parameters")) {
    const auto& arr = root.at("parameters");
    require(arr.is_array() && !arr.empty(), ErrorKind::Config,
            "parameters must be a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section p(arr[i], "parameters[" + std::to_string(i) + "]");
      ParameterDef d{p.get<std::string>("name"), p.get<double>("lower"), p.get<double>("upper")};
      check_name(d.name, "parameter name");
      cfg.params.push_back(std::move(d));
    }
  } else if (cfg.target.kind == TargetKind::Builtin) {
    for (std::size_t k = 0; k < cfg.target.fn->dims(); ++k) {
      cfg.params.push_back({"x" + std::to_string(k + 1), 0.0, 1.0});
    }
  } else if (cfg.target.kind == TargetKind::Gr6j) {
    const auto s = gr6j_space();
    for (std::size_t k = 0; k < s.size(); ++k) cfg.params.push_back(s[k]);
  } else {
    fail(ErrorKind::Config, "external targets need an explicit parameters list");
  }
  try {
    (void)cfg.space();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }

  if (cfg.target.kind == TargetKind::Builtin) {
    require(cfg.params.size() == cfg.target.fn->dims(), ErrorKind::Config,
            "builtin target has " + std::to_string(cfg.target.fn->dims()) +
                " inputs but " + std::to_string(cfg.params.size()) + " parameters are listed");
  } else if (cfg.target.kind == TargetKind::Gr6j) {
    const auto names = gr6j_space().names();
    for (const auto& p : cfg.params) {
      require(std::find(names.begin(), names.end(), p.name) != names.end(), ErrorKind::Config,
              "gr6j parameters are X1..X6, got '" + p.name + "'");
    }
  } else {
    auto& s = cfg.target.simulator;
    if (s.paramOrder.empty()) s.paramOrder = cfg.space().names();
  }
}

void parse_outputs(Section& root, StudyConfig& cfg) {
  const auto& tg = cfg.target;
  if (!root.has("outputs")) {
    if (tg.kind == TargetKind::Builtin) {
      cfg.outputs.push_back({"y", "y", {}, {}, false});
    } else if (tg.kind == TargetKind::External) {
      for (const auto& n : tg.simulator.outputNames) cfg.outputs.push_back({n, n, {}, {}, false});
    } else {
      fail(ErrorKind::Config, "gr6j studies must list their outputs");
    }
  } else {
    const auto& arr = root.at("outputs");
    require(arr.is_array() && !arr.empty(), ErrorKind::Config, "outputs must be a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section o(arr[i], "outputs[" + std::to_string(i) + "]");
      OutputSpec spec;
      spec.source = o.get<std::string>("source", "");
      spec.log = o.get<bool>("log", false);
      if (o.has("date")) spec.day = parse_date(o.at("date"), o.where("date"));
      if (o.has("kge_from") || o.has("kge_to")) {
        spec.kgeRange = std::pair{parse_date(o.at("kge_from"), o.where("kge_from")),
                                  parse_date(o.at("kge_to"), o.where("kge_to"))};
        require(spec.kgeRange->first <= spec.kgeRange->second, ErrorKind::Config,
                "kge_from must not be after kge_to");
      }
      std::string fallback = spec.source;
      if (spec.day) fallback += "@" + civil_from_days(*spec.day);
      if (spec.kgeRange) fallback = "kge_" + spec.source;
      spec.name = o.get<std::string>("name", fallback);
      cfg.outputs.push_back(std::move(spec));
    }
  }
  std::set<std::string> seen;
  for (auto& o : cfg.outputs) {
    if (o.source.empty()) o.source = o.name;
    check_name(o.name, "output name");
    require(seen.insert(o.name).second, ErrorKind::Config, "duplicate output '" + o.name + "'");
    switch (tg.kind) {
      case TargetKind::Builtin:
        require(o.source == "y", ErrorKind::Config, "builtin targets only produce 'y'");
        break;
      case TargetKind::Gr6j: {
        const auto names = gr6j_output_names();
        require(std::find(names.begin(), names.end(), o.source) != names.end(), ErrorKind::Config,
                "unknown gr6j series '" + o.source + "'");
        require(o.day.has_value() != o.kgeRange.has_value(), ErrorKind::Config,
                "gr6j output '" + o.name + "' needs either a date or a kge_from/kge_to range");
        break;
      }
      case TargetKind::External: {
        const auto& names = tg.simulator.outputNames;
        require(std::find(names.begin(), names.end(), o.source) != names.end(), ErrorKind::Config,
                "simulator does not produce '" + o.source + "'");
        break;
      }
    }
  }
}

void parse_methods(Section& root, StudyConfig& cfg) {
  const auto names = root.get<std::vector<std::string>>("methods");
  require(!names.empty(), ErrorKind::Config, "at least one method is required");
  for (const auto& n : names) {
    const auto m = parse_method(n);
    require(!cfg.uses(m), ErrorKind::Config, "method '" + n + "' listed twice");
    cfg.methods.push_back(m);
  }
  const std::uint64_t seed = cfg.seed;

  if (root.has("morris")) {
    Section s(root.at("morris"), "morris");
    cfg.morris.r = s.get<std::size_t>("r", cfg.morris.r);
    cfg.morris.levels = s.get<int>("levels", cfg.morris.levels);
    cfg.morris.delta = s.get<double>("delta", cfg.morris.delta);
  }
  if (root.has("sobol")) {
    Section s(root.at("sobol"), "sobol");
    cfg.sobolDesign.baseN = s.get<std::size_t>("base_n", cfg.sobolDesign.baseN);
    const auto sampler = s.get<std::string>("sampler", "lhs");
    require(sampler == "lhs" || sampler == "sobol", ErrorKind::Config,
            "sobol.sampler must be lhs or sobol");
    cfg.sobolDesign.sampler = sampler == "lhs" ? BaseSampler::Lhs : BaseSampler::SobolSequence;
    cfg.sobol.bootReps = s.get<std::size_t>("boot_reps", cfg.sobol.bootReps);
    cfg.sobol.ciLevel = s.get<double>("ci_level", cfg.sobol.ciLevel);
    cfg.sobol.interactionThreshold =
        s.get<double>("interaction_threshold", cfg.sobol.interactionThreshold);
    const auto first = s.get<std::string>("first_order", "saltelli2010");
    if (first == "saltelli2010") cfg.sobol.firstOrder = FirstOrderEstimator::Saltelli2010;
    else if (first == "jansen1999") cfg.sobol.firstOrder = FirstOrderEstimator::Jansen1999;
    else if (first == "sobol1993") cfg.sobol.firstOrder = FirstOrderEstimator::Sobol1993;
    else fail(ErrorKind::Config, "unknown sobol.first_order '" + first + "'");
    const auto total = s.get<std::string>("total", "jansen1999");
    if (total == "jansen1999") cfg.sobol.total = TotalEstimator::Jansen1999;
    else if (total == "sobol2007") cfg.sobol.total = TotalEstimator::Sobol2007;
    else if (total == "homma1996") cfg.sobol.total = TotalEstimator::Homma1996;
    else fail(ErrorKind::Config, "unknown sobol.total '" + total + "'");
    require(cfg.sobol.ciLevel > 0.0 && cfg.sobol.ciLevel < 1.0, ErrorKind::Config,
            "sobol.ci_level must lie in (0, 1)");
  }
  cfg.sobol.seed = derive_seed(seed, 0x50b0);
  if (root.has("vars")) {
    Section s(root.at("vars"), "vars");
    cfg.vars.centers = s.get<std::size_t>("centers", cfg.vars.centers);
    cfg.vars.h = s.get<double>("h", cfg.vars.h);
  }
  if (root.has("lhs")) {
    Section s(root.at("lhs"), "lhs");
    cfg.lhs.n = s.get<std::size_t>("n", cfg.lhs.n);
    cfg.lhs.maximinSweeps = s.get<std::size_t>("maximin_sweeps", cfg.lhs.maximinSweeps);
  }
  cfg.lhs.seed = derive_seed(seed, 0x1a5);
  if (root.has("regression")) {
    Section s(root.at("regression"), "regression");
    cfg.ols.quadratic = s.get<bool>("quadratic", cfg.ols.quadratic);
    cfg.ols.lowFitR2 = s.get<double>("low_fit_r2", cfg.ols.lowFitR2);
  }
  if (root.has("tree")) {
    Section s(root.at("tree"), "tree");
    cfg.tree.minNodeSize = s.get<std::size_t>("min_node_size", cfg.tree.minNodeSize);
    cfg.tree.minLeaf = s.get<std::size_t>("min_leaf", cfg.tree.minLeaf);
    cfg.tree.minImprove = s.get<double>("min_improve", cfg.tree.minImprove);
  }
  if (root.has("forest")) {
    Section s(root.at("forest"), "forest");
    cfg.forest.trees = s.get<std::size_t>("trees", cfg.forest.trees);
    cfg.forest.mtry = s.get<std::size_t>("mtry", cfg.forest.mtry);
    cfg.forest.nodeSize = s.get<std::size_t>("node_size", cfg.forest.nodeSize);
  }
  cfg.forest.seed = derive_seed(seed, 0xf0e5);
  if (root.has("gpr")) {
    Section s(root.at("gpr"), "gpr");
    cfg.gpr.maxN = s.get<std::size_t>("max_n", cfg.gpr.maxN);
    cfg.gpr.alpha = s.get<double>("alpha", cfg.gpr.alpha);
    cfg.gpr.restarts = s.get<std::size_t>("restarts", cfg.gpr.restarts);
    cfg.gpr.relTol = s.get<double>("rel_tol", cfg.gpr.relTol);
    cfg.gpr.maxEvals = s.get<std::size_t>("max_evals", cfg.gpr.maxEvals);
  }
  cfg.gpr.seed = derive_seed(seed, 0x69b);
}

}  // namespace

StudyConfig parse_study(json j, const std::filesystem::path& baseDir,
                        std::optional<std::uint64_t> seedOverride) {
  require(j.is_object(), ErrorKind::Config, "study config must be a JSON object");
  if (seedOverride) j["seed"] = *seedOverride;
  StudyConfig cfg;
  {
    Section root(j, "config");
    require(root.has("seed"), ErrorKind::Config,
            "config.seed is mandatory (or pass --seed) so runs are reproducible");
    cfg.seed = root.get<std::uint64_t>("seed");
    parse_target(root, cfg, baseDir);
    parse_parameters(root, cfg);
    parse_outputs(root, cfg);
    parse_methods(root, cfg);

    if (root.has("filters")) {
      const auto& arr = root.at("filters");
      require(arr.is_array(), ErrorKind::Config, "filters must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section f(arr[i], "filters[" + std::to_string(i) + "]");
        FilterSpec spec{f.get<std::string>("output"), {}, {}};
        if (f.has("min")) spec.min = f.get<double>("min");
        if (f.has("max")) spec.max = f.get<double>("max");
        require(std::any_of(cfg.outputs.begin(), cfg.outputs.end(),
                            [&](const OutputSpec& o) { return o.name == spec.output; }),
                ErrorKind::Config, "filter refers to unknown output '" + spec.output + "'");
        cfg.filters.push_back(std::move(spec));
      }
    }
    cfg.compareMeasures = root.get(
        "compare", std::vector<std::string>{"morris_dgsm", "sobol_t", "vars_to", "reg_src",
                                            "tree_importance", "forest_permutation",
                                            "gpr_slope", "gpr_invrange"});
    for (const auto& m : cfg.compareMeasures) {
      require(method_from_string(m).has_value(), ErrorKind::Config,
              "unknown comparison measure '" + m + "'");
    }
    cfg.spearman = root.get<bool>("spearman", false);
    const auto dir = std::filesystem::path(root.get<std::string>("report_dir", "sensa_out"));
    cfg.dir = dir.is_absolute() ? dir : baseDir / dir;
  }

  // The hash covers the effective config plus any forcing file it reads.
  json hashed = j;
  hashed.erase("report_dir");
  if (cfg.target.forcingPath) hashed["__forcing_digest"] = file_digest(*cfg.target.forcingPath);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(hashed.dump())));
  cfg.hash = buf;
  cfg.json = std::move(j);
  return cfg;
}

StudyConfig load_study(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seedOverride) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return parse_study(std::move(j), path.parent_path(), seedOverride);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::StalePipeline:
    case ErrorKind::UnsupportedDesign:
    case ErrorKind::Io:
      return 2;
    case ErrorKind::BatchQuality:
    case ErrorKind::Setup:
      return 4;
    default:
      return 3;
  }
}

}  // namespace sensa
