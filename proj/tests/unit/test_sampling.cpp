#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sensa/sampling.hpp"

using namespace sensa;

namespace {

bool is_latin(const Matrix& u) {
  const auto n = u.rows();
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    std::vector<int> hits(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto bin = static_cast<std::size_t>(std::floor(u(i, c) * static_cast<double>(n)));
      if (bin >= hits.size()) return false;
      ++hits[bin];
    }
    if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; })) return false;
  }
  return true;
}

int changed_coords(const Matrix& u, Eigen::Index a, Eigen::Index b) {
  return static_cast<int>(((u.row(a) - u.row(b)).array() != 0.0).count());
}

}  // namespace

TEST_CASE("lhs stratification and determinism") {
  auto s = ParameterSpace::unit_cube(2);
  auto d = lhs_maximin(s, {4, 11, 0});
  CHECK(d.rows() == 4);
  CHECK(is_latin(d.unit));
  auto again = lhs_maximin(s, {4, 11, 0});
  CHECK(again.unit == d.unit);

  auto one = lhs_maximin(s, {1, 3, 0});
  CHECK(one.rows() == 1);
  CHECK(one.unit.maxCoeff() < 1.0);
  CHECK(one.unit.minCoeff() >= 0.0);
}

TEST_CASE("maximin sweeps never shrink the minimum distance") {
  auto s = ParameterSpace::unit_cube(5);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto plain = lhs_maximin(s, {100, seed, 0});
    auto opt = lhs_maximin(s, {100, seed, 50});
    CHECK(is_latin(opt.unit));
    CHECK(min_pairwise_distance(opt.unit) >= min_pairwise_distance(plain.unit));
  }
  // Improvement is strict for a typical random start.
  auto plain = lhs_maximin(s, {100, 9, 0});
  auto opt = lhs_maximin(s, {100, 9, 50});
  CHECK(min_pairwise_distance(opt.unit) > min_pairwise_distance(plain.unit));
}

TEST_CASE("prefix extension of an oversample is bit exact") {
  auto s = ParameterSpace::unit_cube(3);
  auto over = lhs_maximin(s, {1000, 5, 0});
  auto n1 = take_rows(over, 0, 100);
  CHECK(n1.unit == over.unit.topRows(100));
  auto n2 = append_batch(s, n1, {100, 77, 0});
  CHECK(n2.rows() == 200);
  CHECK(n2.unit.topRows(100) == n1.unit);
  CHECK(n2.unit == over.unit.topRows(200));
  CHECK_FALSE(n2.layout_as<LhsLayout>().approximate);

  auto plain = lhs_maximin(s, {100, 5, 0});
  auto cat = append_batch(s, plain, {100, 6, 0});
  CHECK(cat.rows() == 200);
  CHECK(cat.layout_as<LhsLayout>().approximate);
  CHECK(cat.unit.topRows(100) == plain.unit);

  auto morris = morris_oat(s, {5, 4, 0}, 1);
  CHECK_THROWS_AS(append_batch(s, morris, {10, 1, 0}), Error);
  try {
    append_batch(s, morris, {10, 1, 0});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedDesign);
  }
}

TEST_CASE("morris trajectories are one-at-a-time on the grid") {
  auto s = ParameterSpace::unit_cube(3);
  auto d = morris_oat(s, {10, 4, 0}, 7);
  CHECK(d.rows() == 40);
  const auto& lay = d.layout_as<MorrisLayout>();
  CHECK(lay.delta == doctest::Approx(2.0 / 3.0));
  CHECK(morris_default_delta(4) == doctest::Approx(2.0 / 3.0));
  for (std::size_t t = 0; t < 10; ++t) {
    const auto base = static_cast<Eigen::Index>(t * 4);
    std::set<Eigen::Index> moved;
    for (Eigen::Index s_ = 0; s_ < 3; ++s_) {
      const auto a = base + s_, b = a + 1;
      CHECK(changed_coords(d.unit, a, b) == 1);
      for (Eigen::Index c = 0; c < 3; ++c) {
        if (d.unit(a, c) != d.unit(b, c)) {
          CHECK(std::abs(d.unit(a, c) - d.unit(b, c)) == doctest::Approx(2.0 / 3.0));
          moved.insert(c);
        }
      }
    }
    CHECK(moved.size() == 3);
    for (Eigen::Index a = base; a < base + 4; ++a) {
      for (Eigen::Index b = a + 1; b < base + 4; ++b) CHECK(changed_coords(d.unit, a, b) >= 1);
    }
  }
  for (Eigen::Index i = 0; i < d.unit.rows(); ++i) {
    for (Eigen::Index c = 0; c < 3; ++c) {
      const double l = d.unit(i, c) * 3.0;
      CHECK(std::abs(l - std::round(l)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(morris_oat(s, {10, 4, 0.5}, 1), Error);
  CHECK_THROWS_AS(morris_oat(s, {10, 5, 0}, 1), Error);
}

TEST_CASE("sobol blocks layout") {
  auto s6 = ParameterSpace::unit_cube(6);
  CHECK(sobol_blocks(s6, {10000, BaseSampler::Lhs}, 1).rows() == 80000);

  auto s = ParameterSpace::unit_cube(2);
  auto d = sobol_blocks(s, {4, BaseSampler::Lhs}, 3);
  REQUIRE(d.rows() == 16);
  const Matrix a = d.unit.topRows(4);
  const Matrix b = d.unit.middleRows(4, 4);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const Matrix ab = d.unit.middleRows(8 + 4 * k, 4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        CHECK(ab(i, c) == (c == k ? b(i, c) : a(i, c)));
      }
    }
  }
  CHECK(is_latin(a));
  CHECK(is_latin(b));
  CHECK(a != b);

  auto q = sobol_blocks(s, {8, BaseSampler::SobolSequence}, 0);
  CHECK(q.rows() == 32);
}

TEST_CASE("sobol sequence first points") {
  const Matrix q = sobol_sequence(4, 3, 0);
  // Standard Joe-Kuo sequence: (0,0,0), (.5,.5,.5), (.75,.25,.25), (.25,.75,.75).
  CHECK(q(1, 0) == 0.5);
  CHECK(q(1, 2) == 0.5);
  CHECK(q(2, 0) == 0.75);
  CHECK(q(2, 1) == 0.25);
  CHECK(q(3, 1) == 0.75);
  CHECK(q(3, 2) == 0.75);
  const Matrix big = sobol_sequence(1024, 21, 0);
  CHECK(is_latin(sobol_sequence(1024, 21, 0)));
  CHECK(big.maxCoeff() < 1.0);
  CHECK_THROWS_AS(sobol_sequence(4, 22, 0), Error);
}

TEST_CASE("vars stars") {
  auto s13 = ParameterSpace::unit_cube(13);
  auto d = vars_stars(s13, {50, 0.1}, 4);
  CHECK(d.rows() == 50u * (1 + 13 * 10));

  auto s1 = ParameterSpace::unit_cube(1);
  auto tiny = vars_stars(s1, {1, 0.5}, 2);
  CHECK(tiny.rows() == 3);
  std::set<double> vals(tiny.unit.data(), tiny.unit.data() + 3);
  CHECK(vals.size() == 3);

  auto s3 = ParameterSpace::unit_cube(3);
  auto v = vars_stars(s3, {4, 0.25}, 9);
  const auto& lay = v.layout_as<VarsLayout>();
  REQUIRE(lay.points.size() == v.rows());
  Eigen::Index center = 0;
  for (Eigen::Index i = 0; i < v.unit.rows(); ++i) {
    const auto& p = lay.points[static_cast<std::size_t>(i)];
    if (p.dim < 0) {
      center = i;
      continue;
    }
    CHECK(changed_coords(v.unit, i, center) == 1);
    CHECK(v.unit(i, p.dim) == doctest::Approx(p.grid * 0.25));
  }
  CHECK_THROWS_AS(vars_stars(s3, {4, 0.3}, 1), Error);
  CHECK_THROWS_AS(vars_stars(s3, {4, 0.6}, 1), Error);
}
