#include "sensa/sampling.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "sensa/rng.hpp"

namespace sensa {

namespace {

Matrix plain_lhs(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Matrix u(n, k);
  std::vector<std::size_t> perm(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span(perm));
    for (std::size_t i = 0; i < n; ++i) {
      u(i, c) = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
    }
  }
  return u;
}

double sq_dist(const Matrix& x, std::size_t a, std::size_t b) {
  return (x.row(a) - x.row(b)).squaredNorm();
}

/// Nearest-neighbour bookkeeping for maximin swaps; O(n) memory.
class NearestNeighbours {
 public:
  explicit NearestNeighbours(const Matrix& x) : x_(x), dist_(x.rows()), idx_(x.rows()) {
    for (std::size_t i = 0; i < dist_.size(); ++i) recompute(i);
  }

  void recompute(std::size_t i) {
    dist_[i] = std::numeric_limits<double>::infinity();
    idx_[i] = i;
    for (std::size_t j = 0; j < dist_.size(); ++j) {
      if (j == i) continue;
      const double d = sq_dist(x_, i, j);
      if (d < dist_[i]) {
        dist_[i] = d;
        idx_[i] = j;
      }
    }
  }

  std::size_t closest_row() const {
    return static_cast<std::size_t>(std::min_element(dist_.begin(), dist_.end()) - dist_.begin());
  }
  double min() const { return *std::min_element(dist_.begin(), dist_.end()); }
  std::size_t partner(std::size_t i) const { return idx_[i]; }

  /// Updates after rows i and j moved.
  void update_after_move(std::size_t i, std::size_t j) {
    recompute(i);
    recompute(j);
    for (std::size_t a = 0; a < dist_.size(); ++a) {
      if (a == i || a == j) continue;
      if (idx_[a] == i || idx_[a] == j) {
        recompute(a);
        continue;
      }
      for (std::size_t b : {i, j}) {
        const double d = sq_dist(x_, a, b);
        if (d < dist_[a]) {
          dist_[a] = d;
          idx_[a] = b;
        }
      }
    }
  }

  struct Snapshot {
    std::vector<double> dist;
    std::vector<std::size_t> idx;
  };
  Snapshot save() const { return {dist_, idx_}; }
  void restore(Snapshot s) {
    dist_ = std::move(s.dist);
    idx_ = std::move(s.idx);
  }

 private:
  const Matrix& x_;
  std::vector<double> dist_;
  std::vector<std::size_t> idx_;
};

void maximin_improve(Matrix& u, std::size_t sweeps, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(u.rows());
  const std::size_t k = static_cast<std::size_t>(u.cols());
  if (n < 3 || sweeps == 0) return;
  Rng rng(seed);
  NearestNeighbours nn(u);
  double current = nn.min();
  const std::size_t budget = sweeps * n;
  for (std::size_t s = 0; s < budget; ++s) {
    // One end of the closest pair is moved; the other row is random.
    std::size_t i = nn.closest_row();
    if (rng.below(2) == 1) i = nn.partner(i);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    const std::size_t c = rng.below(k);
    auto snapshot = nn.save();
    std::swap(u(i, c), u(j, c));
    nn.update_after_move(i, j);
    const double candidate = nn.min();
    if (candidate > current) {
      current = candidate;
    } else {
      std::swap(u(i, c), u(j, c));
      nn.restore(std::move(snapshot));
    }
  }
}

}  // namespace

DesignMatrix lhs_maximin(const ParameterSpace& space, const LhsConfig& cfg) {
  require(cfg.n >= 1, ErrorKind::Config, "LHS needs n >= 1");
  Matrix u = plain_lhs(cfg.n, space.size(), derive_seed(cfg.seed, 0));
  maximin_improve(u, cfg.maximinSweeps, derive_seed(cfg.seed, 1));
  return make_design(space, std::move(u), LhsLayout{cfg.n, cfg.maximinSweeps, false}, cfg.seed);
}

DesignMatrix take_rows(const DesignMatrix& lhs, std::size_t begin, std::size_t count) {
  const auto& layout = lhs.layout_as<LhsLayout>();
  require(count >= 1 && begin + count <= lhs.rows(), ErrorKind::Structural,
          "row range outside the design");
  DesignMatrix out;
  out.unit = lhs.unit.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  out.mapped =
      lhs.mapped.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  LhsLayout l = layout;
  if (begin != 0) l.oversampleN = 0;  // no longer a prefix
  out.layout = l;
  out.seed = lhs.seed;
  return out;
}

DesignMatrix append_batch(const ParameterSpace& space, const DesignMatrix& existing,
                          const LhsConfig& extra) {
  if (existing.kind() != DesignKind::Lhs) {
    fail(ErrorKind::UnsupportedDesign,
         std::string("cannot append runs to a ") + std::string(to_string(existing.kind())) +
             " design; regenerate it at the final size instead");
  }
  const auto& layout = existing.layout_as<LhsLayout>();
  const std::size_t total = existing.rows() + extra.n;
  if (!layout.approximate && layout.oversampleN >= total) {
    DesignMatrix full = lhs_maximin(space, {layout.oversampleN, existing.seed, layout.sweeps});
    if (full.unit.topRows(static_cast<Eigen::Index>(existing.rows())) == existing.unit) {
      return take_rows(full, 0, total);
    }
  }
  DesignMatrix batch = lhs_maximin(space, extra);
  Matrix unit(total, space.size());
  unit << existing.unit, batch.unit;
  return make_design(space, std::move(unit), LhsLayout{0, layout.sweeps, true}, existing.seed);
}

double morris_default_delta(int levels) {
  return static_cast<double>(levels) / (2.0 * (levels - 1));
}

DesignMatrix morris_oat(const ParameterSpace& space, const MorrisDesignConfig& cfg,
                        std::uint64_t seed) {
  require(cfg.r >= 1, ErrorKind::Config, "Morris design needs r >= 1 trajectories");
  require(cfg.levels >= 2 && cfg.levels % 2 == 0, ErrorKind::Config,
          "Morris levels must be an even integer >= 2");
  const double delta = cfg.delta > 0.0 ? cfg.delta : morris_default_delta(cfg.levels);
  const int top = cfg.levels - 1;
  const double steps = delta * top;
  const int step = static_cast<int>(std::lround(steps));
  require(std::abs(steps - step) < 1e-9 && step >= 1 && step <= top, ErrorKind::Config,
          "Morris delta " + std::to_string(delta) + " is not a multiple of 1/(levels-1)");

  const std::size_t k = space.size();
  Rng rng(derive_seed(seed, 0));
  Matrix u(cfg.r * (k + 1), k);
  std::vector<int> level(k);
  std::vector<std::size_t> order(k);
  for (std::size_t t = 0; t < cfg.r; ++t) {
    // Base levels from which at least one direction stays on the grid.
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<int> admissible;
      for (int l = 0; l <= top; ++l) {
        if (l + step <= top || l - step >= 0) admissible.push_back(l);
      }
      level[c] = admissible[rng.below(admissible.size())];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    const std::size_t base = t * (k + 1);
    for (std::size_t c = 0; c < k; ++c) u(base, c) = level[c] / static_cast<double>(top);
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t c = order[s];
      const bool up_ok = level[c] + step <= top;
      const bool down_ok = level[c] - step >= 0;
      const bool up = up_ok && (!down_ok || rng.below(2) == 0);
      level[c] += up ? step : -step;
      u.row(base + s + 1) = u.row(base + s);
      u(base + s + 1, c) = level[c] / static_cast<double>(top);
    }
  }
  return make_design(space, std::move(u), MorrisLayout{cfg.r, cfg.levels, delta}, seed);
}

DesignMatrix sobol_blocks(const ParameterSpace& space, const SobolBlockConfig& cfg,
                          std::uint64_t seed) {
  require(cfg.baseN >= 2, ErrorKind::Config, "Sobol' blocks need baseN >= 2");
  const std::size_t n = cfg.baseN;
  const std::size_t k = space.size();
  Matrix a, b;
  if (cfg.sampler == BaseSampler::Lhs) {
    a = plain_lhs(n, k, derive_seed(seed, 1));
    b = plain_lhs(n, k, derive_seed(seed, 2));
  } else {
    require(2 * k <= sobol_sequence_max_dims(), ErrorKind::Config,
            "quasi-random blocks support at most " +
                std::to_string(sobol_sequence_max_dims() / 2) + " parameters");
    // Index 0 of the sequence is the origin; start at 1. The seed picks the
    // offset so that different seeds give different (still low-discrepancy) runs.
    const Matrix q = sobol_sequence(n, 2 * k, 1 + seed % 1024);
    a = q.leftCols(static_cast<Eigen::Index>(k));
    b = q.rightCols(static_cast<Eigen::Index>(k));
  }
  Matrix u((k + 2) * n, k);
  const auto ni = static_cast<Eigen::Index>(n);
  u.middleRows(0, ni) = a;
  u.middleRows(ni, ni) = b;
  for (std::size_t c = 0; c < k; ++c) {
    auto block = u.middleRows(static_cast<Eigen::Index>((c + 2) * n), ni);
    block = a;
    block.col(static_cast<Eigen::Index>(c)) = b.col(static_cast<Eigen::Index>(c));
  }
  return make_design(space, std::move(u), SobolLayout{n}, seed);
}

DesignMatrix vars_stars(const ParameterSpace& space, const VarsStarConfig& cfg,
                        std::uint64_t seed) {
  require(cfg.centers >= 1, ErrorKind::Config, "VARS needs at least one star center");
  require(cfg.h > 0.0 && cfg.h <= 0.5, ErrorKind::Config, "VARS h must lie in (0, 0.5]");
  const double inv = 1.0 / cfg.h;
  const int m = static_cast<int>(std::lround(inv));
  require(std::abs(inv - m) < 1e-9, ErrorKind::Config, "1/h must be an integer");

  const std::size_t k = space.size();
  const Matrix centers = plain_lhs(cfg.centers, k, derive_seed(seed, 1));
  std::vector<StarPoint> points;
  std::vector<std::vector<int>> grid_rows;  // grid indices per emitted row
  for (std::size_t s = 0; s < cfg.centers; ++s) {
    std::vector<int> g(k);
    for (std::size_t c = 0; c < k; ++c) g[c] = static_cast<int>(std::lround(centers(s, c) * m));
    points.push_back({s, -1, -1});
    grid_rows.push_back(g);
    for (std::size_t c = 0; c < k; ++c) {
      for (int j = 0; j <= m; ++j) {
        if (j == g[c]) continue;
        auto row = g;
        row[c] = j;
        points.push_back({s, static_cast<int>(c), j});
        grid_rows.push_back(std::move(row));
      }
    }
  }
  Matrix u(grid_rows.size(), k);
  for (std::size_t i = 0; i < grid_rows.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) u(i, c) = grid_rows[i][c] / static_cast<double>(m);
  }
  return make_design(space, std::move(u), VarsLayout{cfg.centers, cfg.h, std::move(points)}, seed);
}

double min_pairwise_distance(const Matrix& points) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
      best = std::min(best, (points.row(i) - points.row(j)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

namespace {

struct DirectionEntry {
  int degree;
  unsigned poly;  // interior coefficients of the primitive polynomial
  std::array<unsigned, 7> m;
};

// Dimensions 2..21; dimension 1 is the van der Corput sequence.
constexpr DirectionEntry kDirections[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
};

constexpr int kBits = 32;

std::array<std::uint32_t, kBits> direction_numbers(std::size_t dim) {
  std::array<std::uint32_t, kBits> v{};
  if (dim == 0) {
    for (int j = 0; j < kBits; ++j) v[j] = 1u << (kBits - 1 - j);
    return v;
  }
  const auto& e = kDirections[dim - 1];
  const int s = e.degree;
  for (int j = 0; j < s; ++j) v[j] = e.m[j] << (kBits - 1 - j);
  for (int j = s; j < kBits; ++j) {
    std::uint32_t x = v[j - s] ^ (v[j - s] >> s);
    for (int i = 1; i < s; ++i) {
      if ((e.poly >> (s - 1 - i)) & 1u) x ^= v[j - i];
    }
    v[j] = x;
  }
  return v;
}

}  // namespace

std::size_t sobol_sequence_max_dims() { return std::size(kDirections) + 1; }

Matrix sobol_sequence(std::size_t n, std::size_t dims, std::size_t skip) {
  require(dims >= 1 && dims <= sobol_sequence_max_dims(), ErrorKind::Config,
          "Sobol' sequence supports 1.." + std::to_string(sobol_sequence_max_dims()) +
              " dimensions");
  Matrix out(n, dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const auto v = direction_numbers(d);
    std::uint32_t x = 0;
    // Gray-code order: step i flips the direction number of the lowest zero bit of i-1.
    for (std::size_t i = 0; i < skip + n; ++i) {
      if (i > 0) {
        x ^= v[static_cast<std::size_t>(std::countr_one(i - 1))];
      }
      if (i >= skip) out(i - skip, d) = x * 0x1.0p-32;
    }
  }
  return out;
}

}  // namespace sensa
