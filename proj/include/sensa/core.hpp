#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "sensa/error.hpp"

namespace sensa {

/// Row-major so a parameter combination (or an output row) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ParameterDef {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;

  bool operator==(const ParameterDef&) const = default;
};

/// Ordered set of named parameters; the order fixes the column index k.
class ParameterSpace {
 public:
  ParameterSpace() = default;
  explicit ParameterSpace(std::vector<ParameterDef> params);

  /// Unit-range parameters named prefix1..prefixK.
  static ParameterSpace unit_cube(std::size_t k, std::string_view prefix = "x");

  std::size_t size() const noexcept { return params_.size(); }
  const ParameterDef& operator[](std::size_t k) const { return params_[k]; }
  std::span<const ParameterDef> params() const noexcept { return params_; }
  std::vector<std::string> names() const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const ParameterSpace&) const = default;

 private:
  std::vector<ParameterDef> params_;
};

enum class DesignKind { Lhs, MorrisOat, SobolBlocks, VarsStars };

std::string_view to_string(DesignKind kind);

/// LHS provenance. A design that is the prefix [0, n) of a seeded
/// oversample of `oversampleN` rows can be extended bit-exactly.
struct LhsLayout {
  std::size_t oversampleN = 0;
  std::size_t sweeps = 0;
  bool approximate = false;  // true once independent batches were concatenated
};

struct MorrisLayout {
  std::size_t trajectories = 0;
  int levels = 0;
  double delta = 0.0;
};

/// Rows are [A; B; AB_1; ...; AB_K], each block baseN rows.
struct SobolLayout {
  std::size_t baseN = 0;
};

struct StarPoint {
  std::size_t star = 0;
  int dim = -1;   // -1 marks the star center
  int grid = -1;  // grid index along `dim`, in [0, 1/h]
};

struct VarsLayout {
  std::size_t centers = 0;
  double h = 0.1;
  std::vector<StarPoint> points;  // one per design row
};

using DesignLayout = std::variant<LhsLayout, MorrisLayout, SobolLayout, VarsLayout>;

struct DesignMatrix {
  Matrix unit;
  Matrix mapped;
  DesignLayout layout;
  std::uint64_t seed = 0;

  DesignKind kind() const noexcept;
  std::size_t rows() const noexcept { return static_cast<std::size_t>(unit.rows()); }
  std::size_t dims() const noexcept { return static_cast<std::size_t>(unit.cols()); }

  /// Layout of the expected kind, or an UnsupportedDesign error.
  template <typename Layout>
  const Layout& layout_as() const {
    if (const auto* l = std::get_if<Layout>(&layout)) return *l;
    fail(ErrorKind::UnsupportedDesign,
         std::string("design kind ") + std::string(to_string(kind())) +
             " is not supported here");
  }
};

/// Validates `unit` against the space and fills in the mapped matrix.
DesignMatrix make_design(const ParameterSpace& space, Matrix unit, DesignLayout layout,
                         std::uint64_t seed);

/// theta = lower + (upper - lower) * u, element-wise per column.
Matrix map_unit_to_range(const ParameterSpace& space, const Matrix& unit);

/// Inverse of map_unit_to_range.
Matrix map_range_to_unit(const ParameterSpace& space, const Matrix& mapped);

/// Simulator outputs with a validity mask. Masked rows stay in place so row
/// indices keep lining up with the design.
struct OutputMatrix {
  Matrix values;
  std::vector<std::string> names;
  std::vector<std::uint8_t> valid;

  /// Wraps raw values; rows holding NaN/Inf start out invalid.
  static OutputMatrix from_values(Matrix values, std::vector<std::string> names);

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(values.cols()); }
  std::size_t valid_count() const noexcept;
  bool is_valid(std::size_t row) const { return valid[row] != 0; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * values.cols(), static_cast<std::size_t>(values.cols())};
  }
};

using RowPredicate = std::function<bool(std::span<const double>)>;

struct FilterResult {
  OutputMatrix output;
  std::size_t rejected = 0;  // rows newly masked by this call
};

/// valid &= predicate(row). A predicate that throws rejects the row.
FilterResult filter_outputs(const OutputMatrix& out, const RowPredicate& keep);

/// Checks that a design and an output matrix are row-aligned and that
/// `column` exists.
void check_aligned(const DesignMatrix& design, const OutputMatrix& out, std::size_t column);

/// out_k = raw_k / sum(raw). Throws Domain on negative or non-finite
/// entries and Degenerate on an all-zero vector.
std::vector<double> scale_to_unit_sum(std::span<const double> raw);

enum class Method {
  MorrisDgsm,
  SobolS1,
  SobolT,
  VarsTo,
  RegSrc,
  TreeImportance,
  ForestPermutation,
  ForestImpurity,
  GprSlope,
  GprInvRange,
};

std::string_view to_string(Method method);
std::optional<Method> method_from_string(std::string_view name);

/// Monte Carlo estimators whose raw value may dip below zero through noise.
/// Their scaled vector is computed from max(raw, 0).
bool method_allows_negative(Method method);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct SensitivityResult {
  Method method = Method::SobolT;
  std::vector<std::string> params;
  std::vector<double> raw;
  std::vector<double> scaled;
  std::optional<std::vector<Interval>> ci;
  std::map<std::string, std::vector<double>> extra;  // per-parameter attachments
  std::map<std::string, double> scalars;              // e.g. "r2"
  std::vector<std::string> warnings;
};

SensitivityResult make_result(Method method, std::vector<std::string> params,
                              std::vector<double> raw,
                              std::optional<std::vector<Interval>> ci = std::nullopt);

}  // namespace sensa
