#pragma once

#include <cstddef>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

struct ElementaryEffects {
  std::vector<std::vector<double>> perParam;  // one EE per valid trajectory
  std::vector<double> mu;
  std::vector<double> muStar;
  std::vector<double> sigma;  // n-1 denominator; 0 with a single trajectory
  std::vector<double> dgsm;   // sqrt(muStar^2 + sigma^2)
  std::size_t trajectoriesUsed = 0;
  std::size_t trajectoriesDropped = 0;
};

/// Elementary effects on a Morris design. Steps are measured in unit-cube
/// coordinates. A trajectory containing any masked row is dropped whole.
ElementaryEffects elementary_effects(const DesignMatrix& design, const OutputMatrix& out,
                                     std::size_t column);

/// dgsm as raw measure, with mu, mu*, sigma attached as extras.
SensitivityResult morris_result(const ElementaryEffects& ee, std::vector<std::string> params);

struct MorrisScatterRow {
  std::string param;
  double muStar;
  double sigma;
  double mu;
};

/// The sigma-vs-mu* plot data, one row per parameter.
std::vector<MorrisScatterRow> morris_scatter(const ElementaryEffects& ee,
                                             const std::vector<std::string>& params);

}  // namespace sensa
