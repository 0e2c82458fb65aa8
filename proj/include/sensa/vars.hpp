#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

struct VarsResult {
  std::vector<std::vector<std::pair<double, double>>> gammaByLag;  // per k: (lag, gamma)
  std::vector<double> varsTo;
  std::map<double, std::vector<double>> ivars;  // p -> per-parameter IVARS
  double vYhat = 0.0;
};

/// gamma_k(lag) = mean of (y_a - y_b)^2 / 2 over all same-star, dimension-k
/// pairs whose grid positions differ by lag / h. Masked rows drop only the
/// pairs they belong to.
std::vector<double> directional_variogram(const DesignMatrix& design, const OutputMatrix& out,
                                          std::size_t column, double lag);

/// VARS-TO_k = (gamma_k(h) + C_k(h)) / V, where C_k(h) is the across-star
/// mean of the (n-1) sample covariance between y(x) and y(x + h) along the
/// dimension-k cross-section, and V is the sample variance over all valid
/// star points. Proportional to the total-order index.
std::vector<double> vars_to(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column);

/// Trapezoidal integral of gamma_k over [0, p] with gamma_k(0) = 0. p must be
/// a multiple of h no larger than 0.5.
std::vector<double> ivars(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                          double p);

/// Everything above in one pass; IVARS is reported for each p in `ivarsAt`
/// that is a multiple of h.
VarsResult vars_analyze(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                        const std::vector<double>& ivarsAt = {0.1, 0.3, 0.5});

SensitivityResult vars_result(const VarsResult& vr, std::vector<std::string> params);

}  // namespace sensa
