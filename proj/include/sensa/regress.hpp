#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensa/core.hpp"
#include "sensa/rng.hpp"

namespace sensa {

/// Valid rows of one output column, with inputs in model units or unit-cube
/// coordinates.
struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::size_t> rows;  // design row of each sample
};

Dataset collect(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                bool unitInputs = false);

// ---------------------------------------------------------------------------
// Ordinary least squares.

struct OlsOptions {
  bool quadratic = false;  // also fit squares + pairwise interactions (R^2 only)
  double lowFitR2 = 0.7;
};

struct OlsFit {
  Vector beta;  // intercept first
  Vector se;
  std::vector<double> tAbs;
  double r2 = 0.0;
  double r2adj = 0.0;
  bool lowFit = false;
  std::optional<double> quadraticR2;
  Vector residuals;
  std::size_t n = 0;
};

/// y on [1, x]. Throws InsufficientData when n <= K + 1 and Singular when the
/// regressors are rank deficient. A zero standard error gives |t| = inf.
OlsFit ols_fit(const Matrix& x, const Vector& y, const OlsOptions& opts = {});
OlsFit ols_src(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
               const OlsOptions& opts = {});
SensitivityResult ols_result(const OlsFit& fit, std::vector<std::string> params);

// ---------------------------------------------------------------------------
// CART regression tree.

struct TreeOptions {
  std::size_t minNodeSize = 20;  // nodes smaller than this are not split
  std::size_t minLeaf = 0;       // 0 selects max(1, minNodeSize / 3)
  double minImprove = 0.01;      // fraction of the root SSE a split must remove
  std::size_t mtry = 0;          // candidate parameters per node; 0 = all
};

struct TreeNode {
  int param = -1;  // -1 marks a leaf
  double threshold = 0.0;  // samples with x < threshold go left
  double value = 0.0;      // mean of the node's samples
  std::size_t n = 0;
  double sse = 0.0;
  double improvement = 0.0;
  int left = -1;
  int right = -1;
};

struct LeafAssignment {
  std::size_t row;  // design row
  int leaf;         // node index
  double fitted;
};

class RegTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<double> importance;
  std::vector<LeafAssignment> leafTable;

  double predict(std::span<const double> x) const;
  Vector predict(const Matrix& x) const;
  std::size_t leaf_count() const;
};

/// Grows a tree on rows `idx` of (x, y). With opts.mtry > 0 each node draws
/// its candidate parameters from `rng`.
RegTree grow_tree(const Matrix& x, const Vector& y, std::span<const std::size_t> idx,
                  const TreeOptions& opts, Rng* rng = nullptr);

/// CART on model-unit inputs, no pruning. Ties between splits keep the first
/// (lowest parameter, lowest threshold). Constant y gives a single leaf.
RegTree fit_regression_tree(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column, const TreeOptions& opts = {});
SensitivityResult tree_result(const RegTree& tree, std::vector<std::string> params);

// ---------------------------------------------------------------------------
// Random forest.

struct ForestOptions {
  std::size_t trees = 500;
  std::size_t mtry = 0;      // 0 selects max(1, floor(K / 3))
  std::size_t nodeSize = 5;  // minimum leaf size
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct ForestFit {
  std::vector<RegTree> trees;
  std::vector<double> oobPermImportance;  // mean OOB MSE increase, clipped at 0
  std::vector<double> oobPermRaw;         // the same before clipping
  std::vector<double> impurityImportance;
  double oobR2 = 0.0;
  bool orderingDisagrees = false;

  Vector predict(const Matrix& x) const;
};

ForestFit fit_forest(const Matrix& x, const Vector& y, const ForestOptions& opts = {});
ForestFit fit_random_forest(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column, const ForestOptions& opts = {});
/// Permutation importance as ForestPermutation, impurity as ForestImpurity.
std::pair<SensitivityResult, SensitivityResult> forest_results(const ForestFit& fit,
                                                               std::vector<std::string> params);

// ---------------------------------------------------------------------------
// Gaussian process regression.

struct GprOptions {
  std::size_t maxN = 500;
  double alpha = 1.9;  // power-exponential exponent
  std::uint64_t seed = 0;
  std::size_t restarts = 8;
  double relTol = 1e-6;
  std::size_t maxEvals = 0;  // per restart; 0 selects 400 * (K + 1)
  double rangeLower = 1e-3;
  double rangeUpper = 1e3;
  std::size_t jobs = 1;  // restarts run concurrently
};

struct GprFit {
  Vector trendBeta;  // intercept, then one slope per unit-cube input
  std::vector<double> trendSrcAbs;
  std::vector<double> ranges;
  std::vector<double> invRangeNorm;
  double alphaExp = 1.9;
  double sigma2 = 0.0;
  double logLik = 0.0;
  double jitter = 0.0;
  bool converged = false;
  std::vector<std::size_t> subsampleIdx;  // design rows used
};

/// Thrown when no restart converged; carries the best point found.
class GprConvergenceError : public Error {
 public:
  GprConvergenceError(const std::string& what, GprFit best)
      : Error(ErrorKind::Convergence, what), best_(std::move(best)) {}
  const GprFit& best() const noexcept { return best_; }

 private:
  GprFit best_;
};

/// Power-exponential GP with a linear trend in all inputs, fitted by
/// maximizing the profile likelihood over the K range parameters. Inputs are
/// unit-cube coordinates.
GprFit fit_gpr(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
               const GprOptions& opts = {});
GprFit fit_gpr_data(const Matrix& u, const Vector& y, const GprOptions& opts = {});

/// Profile log-likelihood at the given ranges; -inf when the correlation
/// matrix stays singular after jitter.
double gpr_profile_loglik(const Matrix& u, const Vector& y, std::span<const double> ranges,
                          double alpha);

SensitivityResult gpr_slope_result(const GprFit& fit, std::vector<std::string> params);
SensitivityResult gpr_invrange_result(const GprFit& fit, std::vector<std::string> params);

}  // namespace sensa
