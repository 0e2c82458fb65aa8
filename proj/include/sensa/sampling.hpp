#pragma once

#include <cstddef>
#include <cstdint>

#include "sensa/core.hpp"

namespace sensa {

struct LhsConfig {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::size_t maximinSweeps = 0;  // swap budget = maximinSweeps * n
};

struct MorrisDesignConfig {
  std::size_t r = 200;   // trajectories
  int levels = 20;       // grid levels p, even
  double delta = 0.0;    // 0 selects levels / (2 (levels - 1))
};

enum class BaseSampler { Lhs, SobolSequence };

struct SobolBlockConfig {
  std::size_t baseN = 1000;
  BaseSampler sampler = BaseSampler::Lhs;
};

struct VarsStarConfig {
  std::size_t centers = 50;
  double h = 0.1;
};

/// Latin hypercube in the unit cube: each column holds exactly one point per
/// stratum [(j-1)/n, j/n). With maximinSweeps > 0 random within-column swaps
/// are kept only when they raise the minimum pairwise distance.
DesignMatrix lhs_maximin(const ParameterSpace& space, const LhsConfig& cfg);

/// Rows [begin, begin + count) of an LHS design. Taking a prefix keeps the
/// design extendable through append_batch.
DesignMatrix take_rows(const DesignMatrix& lhs, std::size_t begin, std::size_t count);

/// Extends an LHS design by extra.n rows. When `existing` is a prefix of a
/// seeded oversample that is large enough the result is the longer prefix
/// of the same oversample; otherwise an independent batch is concatenated
/// and the layout is flagged approximate. Non-LHS designs are rejected.
DesignMatrix append_batch(const ParameterSpace& space, const DesignMatrix& existing,
                          const LhsConfig& extra);

double morris_default_delta(int levels);

/// r one-at-a-time trajectories of K+1 rows on the {0, 1/(p-1), ..., 1} grid.
DesignMatrix morris_oat(const ParameterSpace& space, const MorrisDesignConfig& cfg,
                        std::uint64_t seed);

/// [A; B; AB_1 .. AB_K] with AB_k = A except column k taken from B.
DesignMatrix sobol_blocks(const ParameterSpace& space, const SobolBlockConfig& cfg,
                          std::uint64_t seed);

/// Star-based design: LHS centers snapped to the h-grid, then for every
/// dimension the full cross-section {0, h, ..., 1} through the center.
DesignMatrix vars_stars(const ParameterSpace& space, const VarsStarConfig& cfg,
                        std::uint64_t seed);

double min_pairwise_distance(const Matrix& points);

/// Points [skip, skip + n) of the base-2 Sobol' sequence in `dims`
/// dimensions (dims <= sobol_sequence_max_dims()).
Matrix sobol_sequence(std::size_t n, std::size_t dims, std::size_t skip = 0);
std::size_t sobol_sequence_max_dims();

}  // namespace sensa
