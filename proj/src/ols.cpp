#include <cmath>
#include <limits>

#include "sensa/log.hpp"
#include "sensa/regress.hpp"

namespace sensa {

Dataset collect(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                bool unitInputs) {
  check_aligned(design, out, column);
  const Matrix& src = unitInputs ? design.unit : design.mapped;
  Dataset d;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    if (out.is_valid(i)) d.rows.push_back(i);
  }
  d.x.resize(static_cast<Eigen::Index>(d.rows.size()), src.cols());
  d.y.resize(static_cast<Eigen::Index>(d.rows.size()));
  for (std::size_t j = 0; j < d.rows.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(d.rows[j]);
    d.x.row(static_cast<Eigen::Index>(j)) = src.row(i);
    d.y(static_cast<Eigen::Index>(j)) = out.values(i, static_cast<Eigen::Index>(column));
  }
  return d;
}

namespace {

struct LsqSolution {
  Vector beta;
  Vector se;
  Vector residuals;
  double r2 = 0.0;
  double r2adj = 0.0;
};

LsqSolution least_squares(const Eigen::MatrixXd& h, const Vector& y) {
  const auto n = h.rows();
  const auto p = h.cols();
  require(n > p, ErrorKind::InsufficientData,
          "regression needs more than " + std::to_string(p) + " valid rows, got " +
              std::to_string(n));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
  require(qr.rank() == p, ErrorKind::Singular,
          "regressors are rank deficient (rank " + std::to_string(qr.rank()) + " of " +
              std::to_string(p) + ")");
  LsqSolution s;
  s.beta = qr.solve(y);
  s.residuals = y - h * s.beta;
  const double sse = s.residuals.squaredNorm();
  const double sst = (y.array() - y.mean()).square().sum();
  s.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  s.r2adj = 1.0 - (1.0 - s.r2) * static_cast<double>(n - 1) / static_cast<double>(n - p);

  // (H'H)^-1 = P R^-1 R^-T P' for H P = Q R.
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation();
  const Eigen::MatrixXd cov = perm * cov_perm * perm.transpose();
  const double sigma2 = sse / static_cast<double>(n - p);
  s.se = (cov.diagonal() * sigma2).cwiseSqrt();
  return s;
}

}  // namespace

OlsFit ols_fit(const Matrix& x, const Vector& y, const OlsOptions& opts) {
  const auto n = x.rows();
  const auto k = x.cols();
  require(y.size() == n, ErrorKind::Structural, "regression x and y lengths differ");
  Eigen::MatrixXd h(n, k + 1);
  h.col(0).setOnes();
  h.rightCols(k) = x;
  const auto s = least_squares(h, y);

  OlsFit fit;
  fit.beta = s.beta;
  fit.se = s.se;
  fit.residuals = s.residuals;
  fit.r2 = s.r2;
  fit.r2adj = s.r2adj;
  fit.n = static_cast<std::size_t>(n);
  fit.lowFit = s.r2 < opts.lowFitR2;
  fit.tAbs.resize(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const double b = s.beta(j + 1), e = s.se(j + 1);
    fit.tAbs[static_cast<std::size_t>(j)] =
        e > 0.0 ? std::abs(b / e) : (b == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  }

  if (opts.quadratic) {
    const auto terms = 1 + 2 * k + k * (k - 1) / 2;
    Eigen::MatrixXd q(n, terms);
    q.leftCols(k + 1) = h;
    Eigen::Index c = k + 1;
    for (Eigen::Index a = 0; a < k; ++a) q.col(c++) = x.col(a).array().square();
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = a + 1; b < k; ++b) q.col(c++) = x.col(a).cwiseProduct(x.col(b));
    }
    try {
      fit.quadraticR2 = least_squares(q, y).r2;
    } catch (const Error& e) {
      log_warning(std::string("quadratic regression skipped: ") + e.what());
    }
  }
  return fit;
}

OlsFit ols_src(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
               const OlsOptions& opts) {
  const auto d = collect(design, out, column);
  require(!d.rows.empty(), ErrorKind::NoData, "regression: no valid rows");
  return ols_fit(d.x, d.y, opts);
}

SensitivityResult ols_result(const OlsFit& fit, std::vector<std::string> params) {
  auto r = make_result(Method::RegSrc, std::move(params), fit.tAbs);
  r.scalars["r2"] = fit.r2;
  r.scalars["r2_adj"] = fit.r2adj;
  if (fit.quadraticR2) r.scalars["r2_quadratic"] = *fit.quadraticR2;
  r.extra["beta"] = std::vector<double>(fit.beta.data() + 1, fit.beta.data() + fit.beta.size());
  if (fit.lowFit) {
    r.warnings.push_back("linear fit R^2 = " + std::to_string(fit.r2) +
                         " is below the 0.7 rule of thumb");
  }
  return r;
}

}  // namespace sensa
