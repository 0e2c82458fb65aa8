#include "sensa/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sensa/log.hpp"

namespace sensa {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Structural: return "structural";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::NoData: return "no-data";
    case ErrorKind::Config: return "config";
    case ErrorKind::Singular: return "singular";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::UnsupportedDesign: return "unsupported-design";
    case ErrorKind::Setup: return "setup";
    case ErrorKind::BatchQuality: return "batch-quality";
    case ErrorKind::StalePipeline: return "stale-pipeline";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

ParameterSpace::ParameterSpace(std::vector<ParameterDef> params) : params_(std::move(params)) {
  require(!params_.empty(), ErrorKind::Config, "parameter space needs at least one parameter");
  std::set<std::string> seen;
  for (const auto& p : params_) {
    require(!p.name.empty(), ErrorKind::Config, "parameter name must be nonempty");
    require(seen.insert(p.name).second, ErrorKind::Config,
            "duplicate parameter name '" + p.name + "'");
    require(std::isfinite(p.lower) && std::isfinite(p.upper) && p.lower < p.upper,
            ErrorKind::Config, "parameter '" + p.name + "' needs finite lower < upper");
  }
}

ParameterSpace ParameterSpace::unit_cube(std::size_t k, std::string_view prefix) {
  std::vector<ParameterDef> defs;
  for (std::size_t i = 0; i < k; ++i) {
    defs.push_back({std::string(prefix) + std::to_string(i + 1), 0.0, 1.0});
  }
  return ParameterSpace(std::move(defs));
}

std::vector<std::string> ParameterSpace::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::optional<std::size_t> ParameterSpace::index_of(std::string_view name) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].name == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::Lhs: return "lhs";
    case DesignKind::MorrisOat: return "morris";
    case DesignKind::SobolBlocks: return "sobol";
    case DesignKind::VarsStars: return "vars";
  }
  return "unknown";
}

DesignKind DesignMatrix::kind() const noexcept {
  switch (layout.index()) {
    case 0: return DesignKind::Lhs;
    case 1: return DesignKind::MorrisOat;
    case 2: return DesignKind::SobolBlocks;
    default: return DesignKind::VarsStars;
  }
}

Matrix map_unit_to_range(const ParameterSpace& space, const Matrix& unit) {
  require(static_cast<std::size_t>(unit.cols()) == space.size(), ErrorKind::Structural,
          "unit matrix has " + std::to_string(unit.cols()) + " columns, space has " +
              std::to_string(space.size()));
  Matrix out(unit.rows(), unit.cols());
  for (Eigen::Index k = 0; k < unit.cols(); ++k) {
    const auto& p = space[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
      const double u = unit(i, k);
      require(u >= 0.0 && u <= 1.0, ErrorKind::Domain,
              "unit value " + std::to_string(u) + " outside [0,1] at row " + std::to_string(i));
      out(i, k) = p.lower + (p.upper - p.lower) * u;
    }
  }
  return out;
}

Matrix map_range_to_unit(const ParameterSpace& space, const Matrix& mapped) {
  require(static_cast<std::size_t>(mapped.cols()) == space.size(), ErrorKind::Structural,
          "mapped matrix column count does not match the space");
  Matrix out(mapped.rows(), mapped.cols());
  for (Eigen::Index k = 0; k < mapped.cols(); ++k) {
    const auto& p = space[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < mapped.rows(); ++i) {
      out(i, k) = (mapped(i, k) - p.lower) / (p.upper - p.lower);
    }
  }
  return out;
}

DesignMatrix make_design(const ParameterSpace& space, Matrix unit, DesignLayout layout,
                         std::uint64_t seed) {
  require(unit.rows() >= 1, ErrorKind::Structural, "design needs at least one row");
  DesignMatrix d;
  d.mapped = map_unit_to_range(space, unit);
  d.unit = std::move(unit);
  d.layout = std::move(layout);
  d.seed = seed;
  return d;
}

OutputMatrix OutputMatrix::from_values(Matrix values, std::vector<std::string> names) {
  require(static_cast<std::size_t>(values.cols()) == names.size(), ErrorKind::Structural,
          "output names do not match the column count");
  OutputMatrix out;
  out.valid.assign(static_cast<std::size_t>(values.rows()), 1);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (!values.row(i).allFinite()) out.valid[static_cast<std::size_t>(i)] = 0;
  }
  out.values = std::move(values);
  out.names = std::move(names);
  return out;
}

std::size_t OutputMatrix::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::optional<std::size_t> OutputMatrix::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  return std::nullopt;
}

FilterResult filter_outputs(const OutputMatrix& out, const RowPredicate& keep) {
  FilterResult result{out, 0};
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (!out.is_valid(i)) continue;
    bool ok = false;
    try {
      ok = keep(out.row(i));
    } catch (const std::exception& e) {
      log_warning("filter predicate failed on row " + std::to_string(i) + ": " + e.what());
    }
    if (!ok) {
      result.output.valid[i] = 0;
      ++result.rejected;
    }
  }
  if (result.rejected > 0) {
    log_info("filter rejected " + std::to_string(result.rejected) + " of " +
             std::to_string(out.rows()) + " rows");
  }
  return result;
}

void check_aligned(const DesignMatrix& design, const OutputMatrix& out, std::size_t column) {
  require(design.rows() == out.rows(), ErrorKind::Structural,
          "design has " + std::to_string(design.rows()) + " rows but outputs have " +
              std::to_string(out.rows()));
  require(out.valid.size() == out.rows(), ErrorKind::Structural, "validity mask length mismatch");
  require(column < out.cols(), ErrorKind::Structural,
          "output column " + std::to_string(column) + " out of range");
}

std::vector<double> scale_to_unit_sum(std::span<const double> raw) {
  require(!raw.empty(), ErrorKind::Structural, "cannot scale an empty vector");
  double sum = 0.0;
  for (double v : raw) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::Domain,
            "scaling needs finite nonnegative measures, got " + std::to_string(v));
    sum += v;
  }
  require(sum > 0.0, ErrorKind::Degenerate, "all measures are zero; nothing to scale");
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [sum](double v) { return v / sum; });
  return out;
}

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::MorrisDgsm, "morris_dgsm"},
    {Method::SobolS1, "sobol_s1"},
    {Method::SobolT, "sobol_t"},
    {Method::VarsTo, "vars_to"},
    {Method::RegSrc, "reg_src"},
    {Method::TreeImportance, "tree_importance"},
    {Method::ForestPermutation, "forest_permutation"},
    {Method::ForestImpurity, "forest_impurity"},
    {Method::GprSlope, "gpr_slope"},
    {Method::GprInvRange, "gpr_invrange"},
};

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

std::optional<Method> method_from_string(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

bool method_allows_negative(Method method) {
  return method == Method::SobolS1 || method == Method::SobolT || method == Method::VarsTo;
}

SensitivityResult make_result(Method method, std::vector<std::string> params,
                              std::vector<double> raw, std::optional<std::vector<Interval>> ci) {
  require(params.size() == raw.size(), ErrorKind::Structural,
          "parameter names and measures differ in length");
  SensitivityResult r;
  r.method = method;
  r.params = std::move(params);
  if (method_allows_negative(method)) {
    std::vector<double> clipped(raw.size());
    std::transform(raw.begin(), raw.end(), clipped.begin(),
                   [](double v) { return std::max(v, 0.0); });
    r.scaled = scale_to_unit_sum(clipped);
  } else {
    r.scaled = scale_to_unit_sum(raw);
  }
  if (ci) {
    require(ci->size() == raw.size(), ErrorKind::Structural, "interval count mismatch");
    // Percentile intervals need not bracket the point estimate; widen them so
    // that low <= raw <= high always holds.
    for (std::size_t k = 0; k < raw.size(); ++k) {
      (*ci)[k].low = std::min((*ci)[k].low, raw[k]);
      (*ci)[k].high = std::max((*ci)[k].high, raw[k]);
    }
  }
  r.raw = std::move(raw);
  r.ci = std::move(ci);
  return r;
}

}  // namespace sensa
