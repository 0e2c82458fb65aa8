#include <algorithm>
#include <cmath>
#include <numeric>

#include "sensa/log.hpp"
#include "sensa/parallel.hpp"
#include "sensa/regress.hpp"

namespace sensa {

double RegTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].param >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.param)] < n.threshold ? n.left
                                                                                   : n.right);
  }
  return nodes[i].value;
}

Vector RegTree::predict(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out(i) = predict(std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())));
  }
  return out;
}

std::size_t RegTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.param < 0; }));
}

namespace {

struct Split {
  int param = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class Grower {
 public:
  Grower(const Matrix& x, const Vector& y, const TreeOptions& opts, Rng* rng, double minGain)
      : x_(x), y_(y), opts_(opts), rng_(rng), minGain_(minGain),
        minLeaf_(opts.minLeaf > 0 ? opts.minLeaf : std::max<std::size_t>(1, opts.minNodeSize / 3)) {
    tree_.importance.assign(static_cast<std::size_t>(x.cols()), 0.0);
  }

  RegTree run(std::vector<std::size_t> idx) {
    grow(std::move(idx));
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> idx) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double mean = 0.0;
    for (auto i : idx) mean += y_(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(idx.size());
    double sse = 0.0;
    for (auto i : idx) {
      const double d = y_(static_cast<Eigen::Index>(i)) - mean;
      sse += d * d;
    }
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.value = mean;
      node.n = idx.size();
      node.sse = sse;
    }
    if (idx.size() < opts_.minNodeSize || idx.size() < 2 * minLeaf_ || sse <= 0.0) {
      record_leaf(id, idx, mean);
      return id;
    }
    const Split best = best_split(idx, mean);
    if (best.param < 0 || best.gain <= 0.0 || best.gain < minGain_ ||
        best.gain <= 1e-12 * sse) {
      record_leaf(id, idx, mean);
      return id;
    }
    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x_(static_cast<Eigen::Index>(i), best.param) < best.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    tree_.importance[static_cast<std::size_t>(best.param)] += best.gain;
    const int l = grow(std::move(left));
    const int r = grow(std::move(right));
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.param = best.param;
    node.threshold = best.threshold;
    node.improvement = best.gain;
    node.left = l;
    node.right = r;
    return id;
  }

  std::vector<int> candidates() {
    const auto k = static_cast<std::size_t>(x_.cols());
    std::vector<int> all(k);
    std::iota(all.begin(), all.end(), 0);
    if (opts_.mtry == 0 || opts_.mtry >= k || rng_ == nullptr) return all;
    // Partial Fisher-Yates, then restore parameter order for tie stability.
    for (std::size_t i = 0; i < opts_.mtry; ++i) {
      std::swap(all[i], all[i + rng_->below(k - i)]);
    }
    all.resize(opts_.mtry);
    std::sort(all.begin(), all.end());
    return all;
  }

  Split best_split(const std::vector<std::size_t>& idx, double mean) {
    Split best;
    const std::size_t n = idx.size();
    std::vector<std::size_t> order(idx);
    double total = 0.0;
    for (auto i : idx) total += y_(static_cast<Eigen::Index>(i)) - mean;
    const double base = total * total / static_cast<double>(n);
    for (int c : candidates()) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x_(static_cast<Eigen::Index>(a), c) < x_(static_cast<Eigen::Index>(b), c);
      });
      double left = 0.0;
      for (std::size_t s = 1; s < n; ++s) {
        left += y_(static_cast<Eigen::Index>(order[s - 1])) - mean;
        if (s < minLeaf_ || n - s < minLeaf_) continue;
        const double a = x_(static_cast<Eigen::Index>(order[s - 1]), c);
        const double b = x_(static_cast<Eigen::Index>(order[s]), c);
        if (!(a < b)) continue;
        const double right = total - left;
        const double nl = static_cast<double>(s), nr = static_cast<double>(n - s);
        const double gain = left * left / nl + right * right / nr - base;
        if (gain > best.gain) {
          double t = 0.5 * (a + b);
          if (!(t > a)) t = b;
          best = {c, t, gain};
        }
      }
    }
    return best;
  }

  void record_leaf(int id, const std::vector<std::size_t>& idx, double value) {
    for (auto i : idx) tree_.leafTable.push_back({i, id, value});
  }

  const Matrix& x_;
  const Vector& y_;
  TreeOptions opts_;
  Rng* rng_;
  double minGain_;
  std::size_t minLeaf_;
  RegTree tree_;
};

double sse_of(const Vector& y, std::span<const std::size_t> idx) {
  double mean = 0.0;
  for (auto i : idx) mean += y(static_cast<Eigen::Index>(i));
  mean /= static_cast<double>(idx.size());
  double sse = 0.0;
  for (auto i : idx) sse += (y(static_cast<Eigen::Index>(i)) - mean) * (y(static_cast<Eigen::Index>(i)) - mean);
  return sse;
}

std::vector<std::size_t> rank_order(const std::vector<double>& v) {
  std::vector<std::size_t> o(v.size());
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return o;
}

}  // namespace

RegTree grow_tree(const Matrix& x, const Vector& y, std::span<const std::size_t> idx,
                  const TreeOptions& opts, Rng* rng) {
  require(!idx.empty(), ErrorKind::NoData, "tree: no samples");
  require(opts.minNodeSize >= 2, ErrorKind::Config, "tree: minNodeSize must be >= 2");
  const double min_gain = opts.minImprove * sse_of(y, idx);
  Grower g(x, y, opts, rng, min_gain);
  return g.run(std::vector<std::size_t>(idx.begin(), idx.end()));
}

RegTree fit_regression_tree(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column, const TreeOptions& opts) {
  const auto d = collect(design, out, column);
  require(d.rows.size() >= 2 * opts.minNodeSize, ErrorKind::InsufficientData,
          "tree: needs at least " + std::to_string(2 * opts.minNodeSize) +
              " valid rows, got " + std::to_string(d.rows.size()));
  std::vector<std::size_t> idx(d.rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  TreeOptions o = opts;
  o.mtry = 0;
  RegTree tree = grow_tree(d.x, d.y, idx, o);
  for (auto& a : tree.leafTable) a.row = d.rows[a.row];
  std::sort(tree.leafTable.begin(), tree.leafTable.end(),
            [](const LeafAssignment& a, const LeafAssignment& b) { return a.row < b.row; });
  return tree;
}

SensitivityResult tree_result(const RegTree& tree, std::vector<std::string> params) {
  auto r = make_result(Method::TreeImportance, std::move(params), tree.importance);
  r.scalars["leaves"] = static_cast<double>(tree.leaf_count());
  return r;
}

// ---------------------------------------------------------------------------

Vector ForestFit::predict(const Matrix& x) const {
  Vector sum = Vector::Zero(x.rows());
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

namespace {

struct TreeOutcome {
  RegTree tree;
  std::vector<double> permDelta;  // empty when the tree has no OOB rows
  std::vector<std::pair<std::size_t, double>> oobPred;
};

TreeOutcome train_one(const Matrix& x, const Vector& y, const ForestOptions& opts,
                      std::size_t mtry, std::size_t t) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<std::size_t>(x.cols());
  Rng rng(derive_seed(opts.seed, t));
  std::vector<std::size_t> boot(n);
  std::vector<std::uint8_t> inbag(n, 0);
  for (auto& i : boot) {
    i = static_cast<std::size_t>(rng.below(n));
    inbag[i] = 1;
  }
  std::sort(boot.begin(), boot.end());
  TreeOptions to;
  to.minLeaf = opts.nodeSize;
  to.minNodeSize = std::max<std::size_t>(2, 2 * opts.nodeSize);
  to.minImprove = 0.0;
  to.mtry = mtry;
  TreeOutcome out;
  out.tree = grow_tree(x, y, boot, to, &rng);
  out.tree.leafTable.clear();

  std::vector<std::size_t> oob;
  for (std::size_t i = 0; i < n; ++i) {
    if (!inbag[i]) oob.push_back(i);
  }
  if (oob.empty()) return out;
  Matrix xo(static_cast<Eigen::Index>(oob.size()), x.cols());
  Vector yo(static_cast<Eigen::Index>(oob.size()));
  for (std::size_t j = 0; j < oob.size(); ++j) {
    xo.row(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(oob[j]));
    yo(static_cast<Eigen::Index>(j)) = y(static_cast<Eigen::Index>(oob[j]));
  }
  const Vector base = out.tree.predict(xo);
  const double mse = (base - yo).squaredNorm() / static_cast<double>(oob.size());
  for (std::size_t j = 0; j < oob.size(); ++j) out.oobPred.emplace_back(oob[j], base(static_cast<Eigen::Index>(j)));
  out.permDelta.resize(k);
  std::vector<double> column(oob.size());
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t j = 0; j < oob.size(); ++j) column[j] = xo(static_cast<Eigen::Index>(j), ci);
    const std::vector<double> saved = column;
    rng.shuffle(std::span(column));
    for (std::size_t j = 0; j < oob.size(); ++j) xo(static_cast<Eigen::Index>(j), ci) = column[j];
    const double permuted = (out.tree.predict(xo) - yo).squaredNorm() / static_cast<double>(oob.size());
    out.permDelta[c] = permuted - mse;
    for (std::size_t j = 0; j < oob.size(); ++j) xo(static_cast<Eigen::Index>(j), ci) = saved[j];
  }
  return out;
}

}  // namespace

ForestFit fit_forest(const Matrix& x, const Vector& y, const ForestOptions& opts) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<std::size_t>(x.cols());
  require(opts.trees >= 1, ErrorKind::Config, "forest needs at least one tree");
  require(n >= 2 * opts.nodeSize && n >= 2, ErrorKind::InsufficientData,
          "forest: needs at least " + std::to_string(2 * opts.nodeSize) + " valid rows");
  if (opts.trees < 30) log_warning("forest: fewer than 30 trees; OOB estimates are unstable");
  const std::size_t mtry = opts.mtry > 0 ? std::min(opts.mtry, k) : std::max<std::size_t>(1, k / 3);

  std::vector<TreeOutcome> outcomes(opts.trees);
  parallel_for(opts.trees, opts.jobs,
               [&](std::size_t t) { outcomes[t] = train_one(x, y, opts, mtry, t); });

  ForestFit fit;
  fit.oobPermRaw.assign(k, 0.0);
  fit.impurityImportance.assign(k, 0.0);
  std::vector<double> pred_sum(n, 0.0);
  std::vector<std::size_t> pred_count(n, 0);
  std::size_t with_oob = 0;
  for (auto& o : outcomes) {
    for (std::size_t c = 0; c < k; ++c) fit.impurityImportance[c] += o.tree.importance[c];
    if (!o.permDelta.empty()) {
      ++with_oob;
      for (std::size_t c = 0; c < k; ++c) fit.oobPermRaw[c] += o.permDelta[c];
    }
    for (const auto& [i, p] : o.oobPred) {
      pred_sum[i] += p;
      ++pred_count[i];
    }
    fit.trees.push_back(std::move(o.tree));
  }
  for (auto& v : fit.impurityImportance) v /= static_cast<double>(opts.trees);
  for (auto& v : fit.oobPermRaw) v = with_oob > 0 ? v / static_cast<double>(with_oob) : 0.0;
  fit.oobPermImportance = fit.oobPermRaw;
  for (auto& v : fit.oobPermImportance) v = std::max(v, 0.0);

  double sse = 0.0, mean = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_count[i] == 0) continue;
    mean += y(static_cast<Eigen::Index>(i));
    ++m;
  }
  if (m > 1) {
    mean /= static_cast<double>(m);
    double sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred_count[i] == 0) continue;
      const double yi = y(static_cast<Eigen::Index>(i));
      const double p = pred_sum[i] / static_cast<double>(pred_count[i]);
      sse += (yi - p) * (yi - p);
      sst += (yi - mean) * (yi - mean);
    }
    fit.oobR2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  }
  fit.orderingDisagrees = rank_order(fit.oobPermImportance) != rank_order(fit.impurityImportance);
  return fit;
}

ForestFit fit_random_forest(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column, const ForestOptions& opts) {
  const auto d = collect(design, out, column);
  auto fit = fit_forest(d.x, d.y, opts);
  if (fit.orderingDisagrees) {
    log_warning("forest: permutation and impurity importances order the parameters differently");
  }
  return fit;
}

std::pair<SensitivityResult, SensitivityResult> forest_results(const ForestFit& fit,
                                                               std::vector<std::string> params) {
  auto perm = make_result(Method::ForestPermutation, params, fit.oobPermImportance);
  auto imp = make_result(Method::ForestImpurity, std::move(params), fit.impurityImportance);
  perm.extra["unclipped"] = fit.oobPermRaw;
  for (auto* r : {&perm, &imp}) {
    r->scalars["oob_r2"] = fit.oobR2;
    r->scalars["trees"] = static_cast<double>(fit.trees.size());
    if (fit.orderingDisagrees) {
      r->warnings.push_back("permutation and impurity importances disagree in ordering");
    }
  }
  return {std::move(perm), std::move(imp)};
}

}  // namespace sensa
