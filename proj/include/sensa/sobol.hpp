#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

enum class FirstOrderEstimator { Saltelli2010, Jansen1999, Sobol1993 };
enum class TotalEstimator { Jansen1999, Sobol2007, Homma1996 };

struct SobolOptions {
  std::size_t bootReps = 1000;  // 0 disables the bootstrap
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  FirstOrderEstimator firstOrder = FirstOrderEstimator::Saltelli2010;
  TotalEstimator total = TotalEstimator::Jansen1999;
  double interactionThreshold = 0.05;  // flag when t - s1 exceeds this
  double ciLevel = 0.95;
};

struct SobolIndices {
  std::vector<double> s1;
  std::vector<double> t;
  double vY = 0.0;
  std::optional<std::vector<Interval>> ciS1;
  std::optional<std::vector<Interval>> ciT;
  std::optional<double> dummyS1;
  std::optional<double> dummyT;
  std::size_t bootReps = 0;
  std::size_t tuplesUsed = 0;
  std::vector<std::uint8_t> interaction;  // t_k - s1_k > threshold
};

/// First-order and total indices from an [A; B; AB_1..AB_K] design. A tuple
/// (A_i, B_i, AB_1i .. AB_Ki) with any masked row is dropped. Bootstrap CIs
/// resample tuple indices; the result does not depend on opts.jobs.
SobolIndices sobol_indices(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                           const SobolOptions& opts = {});

/// Significance cutoffs from a virtual parameter the model ignores. For such
/// a column AB_d = A, so the default estimators are identically zero there;
/// the cutoff instead uses the noise-carrying forms
///   S_d = (mean(fA fB) - f0^2) / V,   T_d = 1 - (mean(fA^2) - f0^2) / V
/// and returns the upper bootstrap percentile of each.
std::pair<double, double> dummy_cutoffs(const DesignMatrix& design, const OutputMatrix& out,
                                        std::size_t column, const SobolOptions& opts = {});

/// S1 and T as SensitivityResults (in that order). Dummy cutoffs, when
/// present, go to scalars["dummy_s1"] / scalars["dummy_t"].
std::pair<SensitivityResult, SensitivityResult> sobol_results(const SobolIndices& idx,
                                                              std::vector<std::string> params);

/// Type-7 sample quantile of an unsorted vector.
double quantile(std::vector<double> values, double p);

}  // namespace sensa
