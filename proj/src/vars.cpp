#include "sensa/vars.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace sensa {

namespace {

constexpr std::ptrdiff_t kMissing = -1;

/// Row indices laid out as section[star][dim][grid]; kMissing where the row
/// is masked or absent.
struct Sections {
  int m = 0;  // grid intervals, 1/h
  double h = 0.0;
  std::vector<std::vector<std::vector<std::ptrdiff_t>>> rows;
};

Sections build_sections(const DesignMatrix& design, const OutputMatrix& out, std::size_t column) {
  const auto& layout = design.layout_as<VarsLayout>();
  check_aligned(design, out, column);
  require(layout.points.size() == design.rows(), ErrorKind::Structural,
          "VARS layout does not describe every design row");
  Sections s;
  s.h = layout.h;
  s.m = static_cast<int>(std::lround(1.0 / layout.h));
  const std::size_t k = design.dims();
  s.rows.assign(layout.centers,
                std::vector<std::vector<std::ptrdiff_t>>(
                    k, std::vector<std::ptrdiff_t>(static_cast<std::size_t>(s.m) + 1, kMissing)));
  for (std::size_t i = 0; i < layout.points.size(); ++i) {
    const auto& p = layout.points[i];
    require(p.star < layout.centers, ErrorKind::Structural, "VARS star index out of range");
    if (!out.is_valid(i)) continue;
    if (p.dim < 0) {
      for (std::size_t c = 0; c < k; ++c) {
        const auto g = std::lround(design.unit(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(c)) * s.m);
        s.rows[p.star][c][static_cast<std::size_t>(g)] = static_cast<std::ptrdiff_t>(i);
      }
    } else {
      s.rows[p.star][static_cast<std::size_t>(p.dim)][static_cast<std::size_t>(p.grid)] =
          static_cast<std::ptrdiff_t>(i);
    }
  }
  return s;
}

int lag_steps(const Sections& s, double lag, const char* what) {
  const double steps = lag / s.h;
  const auto j = static_cast<int>(std::lround(steps));
  if (std::abs(steps - j) > 1e-9 || j < 0 || j > s.m) {
    std::ostringstream msg;
    msg << what << ' ' << lag << " is not a multiple of h = " << s.h << " within [0, 1]";
    fail(ErrorKind::Config, msg.str());
  }
  return j;
}

/// gamma_k at lag j*h for every k; nullopt where no pair exists.
std::vector<std::optional<double>> gamma_at(const Sections& s, const OutputMatrix& out,
                                            std::size_t column, int j) {
  const std::size_t k = s.rows.empty() ? 0 : s.rows.front().size();
  std::vector<std::optional<double>> g(k);
  const auto col = static_cast<Eigen::Index>(column);
  for (std::size_t c = 0; c < k; ++c) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (const auto& star : s.rows) {
      const auto& sec = star[c];
      for (std::size_t a = 0; a + static_cast<std::size_t>(j) < sec.size(); ++a) {
        const auto ra = sec[a], rb = sec[a + static_cast<std::size_t>(j)];
        if (ra == kMissing || rb == kMissing) continue;
        const double d = out.values(ra, col) - out.values(rb, col);
        sum += 0.5 * d * d;
        ++pairs;
      }
    }
    if (pairs > 0) g[c] = sum / static_cast<double>(pairs);
  }
  return g;
}

std::vector<double> require_all(const std::vector<std::optional<double>>& g, double lag) {
  std::vector<double> out(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    require(g[c].has_value(), ErrorKind::NoData,
            "VARS: no valid pairs at lag " + std::to_string(lag) + " for parameter " +
                std::to_string(c + 1));
    out[c] = *g[c];
  }
  return out;
}

/// Across-star mean of the lag-j sample covariance along each dimension.
std::vector<double> mean_covariance(const Sections& s, const OutputMatrix& out,
                                    std::size_t column, int j) {
  const std::size_t k = s.rows.empty() ? 0 : s.rows.front().size();
  const auto col = static_cast<Eigen::Index>(column);
  std::vector<double> result(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double total = 0.0;
    std::size_t stars = 0;
    for (const auto& star : s.rows) {
      const auto& sec = star[c];
      std::vector<double> xa, xb;
      for (std::size_t a = 0; a + static_cast<std::size_t>(j) < sec.size(); ++a) {
        const auto ra = sec[a], rb = sec[a + static_cast<std::size_t>(j)];
        if (ra == kMissing || rb == kMissing) continue;
        xa.push_back(out.values(ra, col));
        xb.push_back(out.values(rb, col));
      }
      if (xa.size() < 2) continue;
      const double n = static_cast<double>(xa.size());
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        ma += xa[i];
        mb += xb[i];
      }
      ma /= n;
      mb /= n;
      double cov = 0.0;
      for (std::size_t i = 0; i < xa.size(); ++i) cov += (xa[i] - ma) * (xb[i] - mb);
      total += cov / (n - 1.0);
      ++stars;
    }
    result[c] = stars > 0 ? total / static_cast<double>(stars) : 0.0;
  }
  return result;
}

double star_variance(const OutputMatrix& out, std::size_t column) {
  const auto col = static_cast<Eigen::Index>(column);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (!out.is_valid(i)) continue;
    sum += out.values(static_cast<Eigen::Index>(i), col);
    ++n;
  }
  require(n >= 2, ErrorKind::NoData, "VARS: fewer than two valid star points");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (!out.is_valid(i)) continue;
    const double d = out.values(static_cast<Eigen::Index>(i), col) - mean;
    ss += d * d;
  }
  return ss / static_cast<double>(n - 1);
}

std::vector<double> integrate(const Sections& s, const OutputMatrix& out, std::size_t column,
                              int steps) {
  const std::size_t k = s.rows.empty() ? 0 : s.rows.front().size();
  std::vector<double> area(k, 0.0), prev(k, 0.0);
  for (int j = 1; j <= steps; ++j) {
    const auto g = require_all(gamma_at(s, out, column, j), j * s.h);
    for (std::size_t c = 0; c < k; ++c) {
      area[c] += 0.5 * s.h * (prev[c] + g[c]);
      prev[c] = g[c];
    }
  }
  return area;
}

int ivars_steps(const Sections& s, double p) {
  require(p <= 0.5 + 1e-12, ErrorKind::Config, "IVARS range p must not exceed 0.5");
  return lag_steps(s, p, "IVARS range");
}

}  // namespace

std::vector<double> directional_variogram(const DesignMatrix& design, const OutputMatrix& out,
                                          std::size_t column, double lag) {
  const Sections s = build_sections(design, out, column);
  const int j = lag_steps(s, lag, "lag");
  if (j == 0) return std::vector<double>(design.dims(), 0.0);
  return require_all(gamma_at(s, out, column, j), lag);
}

std::vector<double> vars_to(const DesignMatrix& design, const OutputMatrix& out,
                            std::size_t column) {
  const Sections s = build_sections(design, out, column);
  const double v = star_variance(out, column);
  require(v > 0.0, ErrorKind::Degenerate, "VARS: output variance over the stars is zero");
  const auto g = require_all(gamma_at(s, out, column, 1), s.h);
  const auto cov = mean_covariance(s, out, column, 1);
  std::vector<double> to(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) to[c] = (g[c] + cov[c]) / v;
  return to;
}

std::vector<double> ivars(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                          double p) {
  const Sections s = build_sections(design, out, column);
  return integrate(s, out, column, ivars_steps(s, p));
}

VarsResult vars_analyze(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                        const std::vector<double>& ivarsAt) {
  const Sections s = build_sections(design, out, column);
  VarsResult r;
  r.vYhat = star_variance(out, column);
  require(r.vYhat > 0.0, ErrorKind::Degenerate, "VARS: output variance over the stars is zero");
  const std::size_t k = design.dims();
  r.gammaByLag.assign(k, {});
  const int max_steps = std::min(s.m, static_cast<int>(std::floor(0.5 / s.h + 1e-9)));
  for (int j = 1; j <= std::max(max_steps, 1); ++j) {
    const auto g = gamma_at(s, out, column, j);
    for (std::size_t c = 0; c < k; ++c) {
      if (g[c]) r.gammaByLag[c].emplace_back(j * s.h, *g[c]);
    }
  }
  const auto g1 = require_all(gamma_at(s, out, column, 1), s.h);
  const auto cov = mean_covariance(s, out, column, 1);
  r.varsTo.resize(k);
  for (std::size_t c = 0; c < k; ++c) r.varsTo[c] = (g1[c] + cov[c]) / r.vYhat;
  for (double p : ivarsAt) {
    const double steps = p / s.h;
    if (p > 0.5 + 1e-12 || std::abs(steps - std::round(steps)) > 1e-9) continue;
    r.ivars[p] = integrate(s, out, column, static_cast<int>(std::lround(steps)));
  }
  return r;
}

SensitivityResult vars_result(const VarsResult& vr, std::vector<std::string> params) {
  auto r = make_result(Method::VarsTo, std::move(params), vr.varsTo);
  r.scalars["v_y_hat"] = vr.vYhat;
  for (const auto& [p, values] : vr.ivars) {
    r.extra["ivars_" + std::to_string(static_cast<int>(std::lround(p * 100)))] = values;
  }
  return r;
}

}  // namespace sensa
