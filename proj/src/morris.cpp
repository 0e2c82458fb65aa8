#include "sensa/morris.hpp"

#include <cmath>
#include <numeric>

#include "sensa/log.hpp"

namespace sensa {

ElementaryEffects elementary_effects(const DesignMatrix& design, const OutputMatrix& out,
                                     std::size_t column) {
  const auto& layout = design.layout_as<MorrisLayout>();
  check_aligned(design, out, column);
  const std::size_t k = design.dims();
  require(design.rows() == layout.trajectories * (k + 1), ErrorKind::Structural,
          "Morris design row count does not match its trajectory layout");

  ElementaryEffects ee;
  ee.perParam.assign(k, {});
  for (std::size_t t = 0; t < layout.trajectories; ++t) {
    const std::size_t base = t * (k + 1);
    bool ok = true;
    for (std::size_t s = 0; s <= k; ++s) ok = ok && out.is_valid(base + s);
    if (!ok) {
      ++ee.trajectoriesDropped;
      continue;
    }
    for (std::size_t s = 0; s < k; ++s) {
      const auto a = static_cast<Eigen::Index>(base + s);
      const auto b = a + 1;
      Eigen::Index moved = -1;
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k); ++c) {
        if (design.unit(a, c) != design.unit(b, c)) {
          require(moved < 0, ErrorKind::Structural,
                  "Morris step changes more than one coordinate");
          moved = c;
        }
      }
      require(moved >= 0, ErrorKind::Structural, "Morris step changes no coordinate");
      const double du = design.unit(b, moved) - design.unit(a, moved);
      const double dy = out.values(b, static_cast<Eigen::Index>(column)) -
                        out.values(a, static_cast<Eigen::Index>(column));
      ee.perParam[static_cast<std::size_t>(moved)].push_back(dy / du);
    }
    ++ee.trajectoriesUsed;
  }
  if (ee.trajectoriesDropped > 0) {
    log_warning("Morris: dropped " + std::to_string(ee.trajectoriesDropped) +
                " trajectories containing masked rows");
  }
  require(ee.trajectoriesUsed > 0, ErrorKind::NoData, "Morris: no valid trajectories");

  ee.mu.resize(k);
  ee.muStar.resize(k);
  ee.sigma.resize(k);
  ee.dgsm.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& e = ee.perParam[c];
    const double n = static_cast<double>(e.size());
    double sum = 0.0, abs_sum = 0.0;
    for (double v : e) {
      sum += v;
      abs_sum += std::abs(v);
    }
    ee.mu[c] = sum / n;
    ee.muStar[c] = abs_sum / n;
    double ss = 0.0;
    for (double v : e) ss += (v - ee.mu[c]) * (v - ee.mu[c]);
    ee.sigma[c] = e.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    ee.dgsm[c] = std::hypot(ee.muStar[c], ee.sigma[c]);
  }
  return ee;
}

SensitivityResult morris_result(const ElementaryEffects& ee, std::vector<std::string> params) {
  auto r = make_result(Method::MorrisDgsm, std::move(params), ee.dgsm);
  r.extra["mu"] = ee.mu;
  r.extra["mu_star"] = ee.muStar;
  r.extra["sigma"] = ee.sigma;
  r.scalars["trajectories"] = static_cast<double>(ee.trajectoriesUsed);
  if (ee.trajectoriesDropped > 0) {
    r.warnings.push_back(std::to_string(ee.trajectoriesDropped) +
                         " trajectories dropped for masked rows");
  }
  return r;
}

std::vector<MorrisScatterRow> morris_scatter(const ElementaryEffects& ee,
                                             const std::vector<std::string>& params) {
  require(params.size() == ee.muStar.size(), ErrorKind::Structural,
          "parameter names do not match the effects");
  std::vector<MorrisScatterRow> rows;
  for (std::size_t k = 0; k < params.size(); ++k) {
    rows.push_back({params[k], ee.muStar[k], ee.sigma[k], ee.mu[k]});
  }
  return rows;
}

}  // namespace sensa
