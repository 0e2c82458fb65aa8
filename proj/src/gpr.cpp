#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sensa/log.hpp"
#include "sensa/parallel.hpp"
#include "sensa/regress.hpp"

namespace sensa {

namespace {

constexpr double kJitter[] = {0.0, 1e-10, 1e-8, 1e-6};
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Pairwise |u_i - u_j|^alpha per dimension, lower triangle packed row-wise.
struct DistanceCache {
  std::size_t n = 0;
  std::vector<std::vector<double>> d;  // [dim][pair]

  DistanceCache(const Matrix& u, double alpha) : n(static_cast<std::size_t>(u.rows())) {
    d.resize(static_cast<std::size_t>(u.cols()));
    for (std::size_t k = 0; k < d.size(); ++k) {
      auto& dk = d[k];
      dk.reserve(n * (n - 1) / 2);
      for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          const double diff = u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) -
                              u(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
          dk.push_back(std::pow(std::abs(diff), alpha));
        }
      }
    }
  }

  Eigen::MatrixXd correlation(std::span<const double> ranges, double alpha) const {
    std::vector<double> w(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) w[k] = std::pow(ranges[k], -alpha);
    Eigen::MatrixXd r(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      r(ii, ii) = 1.0;
      for (std::size_t j = 0; j < i; ++j, ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) s += d[k][p] * w[k];
        r(ii, static_cast<Eigen::Index>(j)) = std::exp(-s);
      }
    }
    return r;
  }
};

struct Profile {
  double logLik = -kInf;
  Vector beta;
  double sigma2 = 0.0;
  double jitter = 0.0;
};

/// Generalized least squares profile at fixed ranges. y is standardized, so
/// sigma^2 is floored relative to 1.
Profile profile(const DistanceCache& cache, const Eigen::MatrixXd& h, const Vector& y,
                std::span<const double> ranges, double alpha) {
  Profile out;
  Eigen::MatrixXd r = cache.correlation(ranges, alpha);
  const auto n = r.rows();
  for (double j : kJitter) {
    Eigen::MatrixXd rj = r;
    rj.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(rj);
    if (llt.info() != Eigen::Success) continue;
    const auto l = llt.matrixL();
    const Eigen::MatrixXd ht = l.solve(h);
    const Vector yt = l.solve(y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ht);
    if (qr.rank() < ht.cols()) return out;
    out.beta = qr.solve(yt);
    const double rss = (yt - ht * out.beta).squaredNorm();
    out.sigma2 = std::max(rss / static_cast<double>(n), 1e-14);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
    logdet *= 2.0;
    const double nn = static_cast<double>(n);
    out.logLik = -0.5 * (nn * std::log(out.sigma2) + logdet +
                         nn * (1.0 + std::log(2.0 * std::numbers::pi)));
    out.jitter = j;
    return out;
  }
  return out;
}

struct NmResult {
  std::vector<double> x;
  double f = kInf;
  bool converged = false;
};

/// Nelder-Mead minimization with box constraints applied by clamping.
template <typename F>
NmResult nelder_mead(F&& f, std::vector<double> x0, double lo, double hi, double relTol,
                     std::size_t maxEvals) {
  const std::size_t k = x0.size();
  auto clamp = [&](std::vector<double>& x) {
    for (auto& v : x) v = std::clamp(v, lo, hi);
  };
  std::size_t evals = 0;
  auto eval = [&](std::vector<double>& x) {
    clamp(x);
    ++evals;
    return f(x);
  };
  std::vector<std::vector<double>> simplex(k + 1, x0);
  std::vector<double> fv(k + 1);
  for (std::size_t i = 0; i < k; ++i) {
    simplex[i + 1][i] += (x0[i] + 0.5 <= hi) ? 0.5 : -0.5;
  }
  for (std::size_t i = 0; i <= k; ++i) fv[i] = eval(simplex[i]);

  std::vector<std::size_t> order(k + 1);
  NmResult res;
  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[k - 1];
    const double spread = fv[worst] - fv[best];
    if (std::isfinite(fv[best]) && spread <= relTol * (std::abs(fv[best]) + 1e-10)) {
      res.converged = true;
      break;
    }
    if (evals >= maxEvals) break;

    std::vector<double> c(k, 0.0);
    for (std::size_t i = 0; i <= k; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < k; ++j) c[j] += simplex[i][j] / static_cast<double>(k);
    }
    auto along = [&](double t) {
      std::vector<double> p(k);
      for (std::size_t j = 0; j < k; ++j) p[j] = c[j] + t * (simplex[worst][j] - c[j]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    auto xc = fr < fv[worst] ? along(-0.5) : along(0.5);
    const double fc = eval(xc);
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= k; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < k; ++j) {
        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      }
      fv[i] = eval(simplex[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = simplex[best];
  res.f = fv[best];
  return res;
}

double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

std::vector<double> exp_all(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::exp(x); });
  return out;
}

Eigen::MatrixXd trend_matrix(const Matrix& u) {
  Eigen::MatrixXd h(u.rows(), u.cols() + 1);
  h.col(0).setOnes();
  h.rightCols(u.cols()) = u;
  return h;
}

}  // namespace

double gpr_profile_loglik(const Matrix& u, const Vector& y, std::span<const double> ranges,
                          double alpha) {
  require(ranges.size() == static_cast<std::size_t>(u.cols()), ErrorKind::Structural,
          "gpr: one range per input expected");
  const DistanceCache cache(u, alpha);
  return profile(cache, trend_matrix(u), y, ranges, alpha).logLik;
}

GprFit fit_gpr_data(const Matrix& uAll, const Vector& yAll, const GprOptions& opts) {
  const auto k = static_cast<std::size_t>(uAll.cols());
  require(yAll.size() == uAll.rows(), ErrorKind::Structural, "gpr: x and y lengths differ");
  require(opts.alpha > 0.0 && opts.alpha <= 2.0, ErrorKind::Config,
          "gpr: power exponent must lie in (0, 2]");
  require(opts.rangeLower > 0.0 && opts.rangeLower < opts.rangeUpper, ErrorKind::Config,
          "gpr: invalid range bounds");
  require(static_cast<std::size_t>(uAll.rows()) >= k + 3, ErrorKind::InsufficientData,
          "gpr: needs at least K + 3 valid rows");

  std::vector<std::size_t> keep(static_cast<std::size_t>(uAll.rows()));
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (keep.size() > opts.maxN) {
    Rng rng(derive_seed(opts.seed, 7));
    rng.shuffle(std::span(keep));
    keep.resize(opts.maxN);
    std::sort(keep.begin(), keep.end());
    log_info("gpr: fitting a subsample of " + std::to_string(opts.maxN) + " rows");
  }
  Matrix u(static_cast<Eigen::Index>(keep.size()), uAll.cols());
  Vector y(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    u.row(static_cast<Eigen::Index>(i)) = uAll.row(static_cast<Eigen::Index>(keep[i]));
    y(static_cast<Eigen::Index>(i)) = yAll(static_cast<Eigen::Index>(keep[i]));
  }
  const double y_mean = y.mean();
  const double y_sd = sample_sd(y);
  require(y_sd > 0.0, ErrorKind::Degenerate, "gpr: output is constant");
  const Vector ys = (y.array() - y_mean) / y_sd;

  const DistanceCache cache(u, opts.alpha);
  const Eigen::MatrixXd h = trend_matrix(u);
  const double lo = std::log(opts.rangeLower), hi = std::log(opts.rangeUpper);
  const std::size_t max_evals = opts.maxEvals > 0 ? opts.maxEvals : 400 * (k + 1);
  auto objective = [&](const std::vector<double>& theta) {
    const auto p = profile(cache, h, ys, exp_all(theta), opts.alpha);
    return std::isfinite(p.logLik) ? -p.logLik : kInf;
  };

  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  std::vector<NmResult> runs(restarts);
  parallel_for(restarts, opts.jobs, [&](std::size_t r) {
    std::vector<double> start(k, 0.0);
    if (r > 0) {
      // Random starts over ranges between 0.05 and 10.
      Rng rng(derive_seed(opts.seed, 100 + r));
      for (auto& v : start) v = std::log(0.05) + rng.uniform() * std::log(200.0);
    }
    runs[r] = nelder_mead(objective, std::move(start), lo, hi, opts.relTol, max_evals);
  });

  std::size_t best = restarts;
  std::size_t fallback = 0;
  for (std::size_t r = 0; r < restarts; ++r) {
    if (runs[r].f < runs[fallback].f) fallback = r;
    if (runs[r].converged && (best == restarts || runs[r].f < runs[best].f)) best = r;
  }
  const bool converged = best < restarts;
  const auto& winner = runs[converged ? best : fallback];

  GprFit fit;
  fit.alphaExp = opts.alpha;
  fit.converged = converged;
  fit.subsampleIdx = keep;
  fit.ranges = exp_all(winner.x);
  const auto p = profile(cache, h, ys, fit.ranges, opts.alpha);
  if (!std::isfinite(p.logLik)) {
    fail(ErrorKind::Singular, "gpr: correlation matrix is singular even with jitter");
  }
  fit.trendBeta = p.beta * y_sd;
  fit.trendBeta(0) += y_mean;
  fit.sigma2 = p.sigma2 * y_sd * y_sd;
  fit.logLik = p.logLik - static_cast<double>(keep.size()) * std::log(y_sd);
  fit.jitter = p.jitter;
  if (p.jitter > 0.0) {
    log_warning("gpr: added " + std::to_string(p.jitter) + " to the correlation diagonal");
  }
  fit.trendSrcAbs.resize(k);
  double inv_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    fit.trendSrcAbs[c] = std::abs(fit.trendBeta(static_cast<Eigen::Index>(c + 1))) *
                         sample_sd(u.col(static_cast<Eigen::Index>(c))) / y_sd;
    inv_sum += 1.0 / fit.ranges[c];
  }
  fit.invRangeNorm.resize(k);
  for (std::size_t c = 0; c < k; ++c) fit.invRangeNorm[c] = (1.0 / fit.ranges[c]) / inv_sum;

  if (!converged) {
    throw GprConvergenceError("gpr: no optimizer restart converged within " +
                                  std::to_string(max_evals) + " evaluations",
                              std::move(fit));
  }
  return fit;
}

GprFit fit_gpr(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
               const GprOptions& opts) {
  const auto d = collect(design, out, column, true);
  auto fit = fit_gpr_data(d.x, d.y, opts);
  for (auto& i : fit.subsampleIdx) i = d.rows[i];
  return fit;
}

SensitivityResult gpr_slope_result(const GprFit& fit, std::vector<std::string> params) {
  auto r = make_result(Method::GprSlope, std::move(params), fit.trendSrcAbs);
  r.extra["beta"] = std::vector<double>(fit.trendBeta.data() + 1,
                                        fit.trendBeta.data() + fit.trendBeta.size());
  r.scalars["log_lik"] = fit.logLik;
  r.scalars["n"] = static_cast<double>(fit.subsampleIdx.size());
  return r;
}

SensitivityResult gpr_invrange_result(const GprFit& fit, std::vector<std::string> params) {
  auto r = make_result(Method::GprInvRange, std::move(params), fit.invRangeNorm);
  r.extra["range"] = fit.ranges;
  r.scalars["log_lik"] = fit.logLik;
  r.scalars["alpha"] = fit.alphaExp;
  if (fit.jitter > 0.0) r.warnings.push_back("jitter " + std::to_string(fit.jitter) + " added");
  return r;
}

}  // namespace sensa
