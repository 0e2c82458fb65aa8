#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sensa/sampling.hpp"
#include "sensa/vars.hpp"

using namespace sensa;

namespace {

OutputMatrix evaluate(const DesignMatrix& d, auto&& f) {
  Matrix y(d.rows(), 1);
  for (Eigen::Index i = 0; i < d.unit.rows(); ++i) y(i, 0) = f(d.unit.row(i));
  return OutputMatrix::from_values(std::move(y), {"y"});
}

/// Brute force: every pair of valid rows in the same star lying on the
/// dimension-k line through the center at the given distance.
std::vector<double> oracle_gamma(const DesignMatrix& d, const OutputMatrix& out, double lag) {
  const auto& lay = d.layout_as<VarsLayout>();
  const auto k = d.dims();
  std::vector<double> g(k, 0.0);
  std::vector<int> n(k, 0);
  for (std::size_t a = 0; a < d.rows(); ++a) {
    for (std::size_t b = a + 1; b < d.rows(); ++b) {
      const auto& pa = lay.points[a];
      const auto& pb = lay.points[b];
      if (pa.star != pb.star || !out.is_valid(a) || !out.is_valid(b)) continue;
      for (std::size_t c = 0; c < k; ++c) {
        const bool on_line = (pa.dim < 0 || pa.dim == static_cast<int>(c)) &&
                             (pb.dim < 0 || pb.dim == static_cast<int>(c));
        const double dist = std::abs(d.unit(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) -
                                     d.unit(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)));
        if (on_line && std::abs(dist - lag) < 1e-9) {
          const double dy = out.values(static_cast<Eigen::Index>(a), 0) -
                            out.values(static_cast<Eigen::Index>(b), 0);
          g[c] += 0.5 * dy * dy;
          ++n[c];
        }
      }
    }
  }
  for (std::size_t c = 0; c < k; ++c) g[c] /= n[c];
  return g;
}

}  // namespace

TEST_CASE("variogram of a linear response") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = vars_stars(s, {10, 0.1}, 3);
  auto out = evaluate(d, [](auto u) { return u(0); });
  for (double lag : {0.1, 0.2, 0.5}) {
    auto g = directional_variogram(d, out, 0, lag);
    CHECK(g[0] == doctest::Approx(lag * lag / 2).epsilon(1e-9));
    CHECK(g[1] == 0.0);
  }
  auto to = vars_to(d, out, 0);
  CHECK(std::abs(to[1]) < 1e-20);
  CHECK(to[0] > 0.0);

  auto iv = ivars(d, out, 0, 0.5);
  double trapezoid = 0.0;
  for (int j = 1; j <= 5; ++j) {
    const double a = (j - 1) * 0.1, b = j * 0.1;
    trapezoid += 0.05 * (a * a / 2 + b * b / 2);
  }
  CHECK(iv[0] == doctest::Approx(trapezoid).epsilon(1e-9));
  CHECK(std::abs(iv[0] - 0.125 / 6.0) < 5e-4);
}

TEST_CASE("variogram matches brute-force pair enumeration") {
  auto s = ParameterSpace::unit_cube(3);
  auto d = vars_stars(s, {7, 0.1}, 12);
  auto out = evaluate(d, [](auto u) {
    return std::sin(2 * std::numbers::pi * u(0)) + u(1) * u(2) * 3.0;
  });
  out.valid[5] = 0;
  out.valid[40] = 0;
  for (double lag : {0.1, 0.3}) {
    auto g = directional_variogram(d, out, 0, lag);
    auto o = oracle_gamma(d, out, lag);
    for (std::size_t c = 0; c < 3; ++c) CHECK(g[c] == doctest::Approx(o[c]).epsilon(1e-12));
  }
}

TEST_CASE("constant response and configuration errors") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = vars_stars(s, {5, 0.1}, 1);
  auto flat = evaluate(d, [](auto) { return 4.0; });
  auto g = directional_variogram(d, flat, 0, 0.2);
  CHECK(g[0] == 0.0);
  CHECK(ivars(d, flat, 0, 0.3)[1] == 0.0);
  CHECK_THROWS_AS(vars_to(d, flat, 0), Error);
  CHECK_THROWS_AS(ivars(d, flat, 0, 0.25), Error);
  CHECK_THROWS_AS(ivars(d, flat, 0, 0.7), Error);
  std::fill(flat.valid.begin(), flat.valid.end(), 0);
  CHECK_THROWS_AS(directional_variogram(d, flat, 0, 0.1), Error);
}

TEST_CASE("full analysis: ivars monotone, gamma table") {
  auto s = ParameterSpace::unit_cube(3);
  auto d = vars_stars(s, {20, 0.1}, 4);
  auto out = evaluate(d, [](auto u) { return u(0) * u(0) + 0.2 * u(1); });
  auto r = vars_analyze(d, out, 0);
  CHECK(r.ivars.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(r.ivars.at(0.1)[c] <= r.ivars.at(0.3)[c]);
    CHECK(r.ivars.at(0.3)[c] <= r.ivars.at(0.5)[c]);
    CHECK(r.gammaByLag[c].size() == 5);
  }
  CHECK(r.varsTo == vars_to(d, out, 0));
  auto res = vars_result(r, s.names());
  CHECK(res.scaled[0] > res.scaled[1]);
  CHECK(res.scaled[2] < 1e-20);
  CHECK(res.extra.count("ivars_30") == 1);
}
