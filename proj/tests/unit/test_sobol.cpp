#include <doctest.h>

#include <cmath>

#include "sensa/sampling.hpp"
#include "sensa/sobol.hpp"
#include "sensa/testbed.hpp"

using namespace sensa;

namespace {

OutputMatrix evaluate(const AnalyticFn& f, const DesignMatrix& d) {
  Matrix y(d.rows(), 1);
  y.col(0) = f.eval(d.unit);
  return OutputMatrix::from_values(std::move(y), {"y"});
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("single active input carries all variance") {
  auto f = AnalyticFn::linear({1.0, 0.0});
  auto d = sobol_blocks(f.space(), {4096, BaseSampler::Lhs}, 3);
  auto r = sobol_indices(d, evaluate(f, d), 0, {.bootReps = 0});
  CHECK(r.s1[0] == doctest::Approx(1.0).epsilon(0.03));
  CHECK(r.t[0] == doctest::Approx(1.0).epsilon(0.03));
  CHECK(r.s1[1] == 0.0);
  CHECK(r.t[1] == 0.0);
  CHECK(r.vY == doctest::Approx(1.0 / 12.0).epsilon(0.03));
}

TEST_CASE("Ishigami at moderate budget") {
  auto f = AnalyticFn::ishigami();
  const auto exact = f.analytic_sobol();
  auto d = sobol_blocks(f.space(), {8192, BaseSampler::Lhs}, 11);
  auto r = sobol_indices(d, evaluate(f, d), 0, {.bootReps = 200, .seed = 4});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(r.s1[k] - exact.s1[k]) < 0.03);
    CHECK(std::abs(r.t[k] - exact.t[k]) < 0.03);
    CHECK((*r.ciT)[k].low <= exact.t[k] + 0.03);
    CHECK((*r.ciT)[k].high >= exact.t[k] - 0.03);
  }
  CHECK(r.interaction[0]);   // x1 interacts with x3
  CHECK_FALSE(r.interaction[1]);
  CHECK(r.interaction[2]);
}

TEST_CASE("alternative estimators agree on Ishigami") {
  auto f = AnalyticFn::ishigami();
  const auto exact = f.analytic_sobol();
  auto d = sobol_blocks(f.space(), {16384, BaseSampler::Lhs}, 21);
  auto out = evaluate(f, d);
  for (auto s1 : {FirstOrderEstimator::Jansen1999, FirstOrderEstimator::Sobol1993}) {
    for (auto t : {TotalEstimator::Sobol2007, TotalEstimator::Homma1996}) {
      auto r = sobol_indices(d, out, 0, {.bootReps = 0, .firstOrder = s1, .total = t});
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(std::abs(r.s1[k] - exact.s1[k]) < 0.06);
        CHECK(std::abs(r.t[k] - exact.t[k]) < 0.06);
      }
    }
  }
}

TEST_CASE("quasi-random base sampler") {
  auto f = AnalyticFn::ishigami();
  const auto exact = f.analytic_sobol();
  auto d = sobol_blocks(f.space(), {8192, BaseSampler::SobolSequence}, 0);
  auto r = sobol_indices(d, evaluate(f, d), 0, {.bootReps = 0});
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(r.t[k] - exact.t[k]) < 0.03);
}

TEST_CASE("bootstrap is independent of the job count") {
  auto f = AnalyticFn::sobol_g({0, 1, 9});
  auto d = sobol_blocks(f.space(), {512, BaseSampler::Lhs}, 8);
  auto out = evaluate(f, d);
  auto a = sobol_indices(d, out, 0, {.bootReps = 300, .seed = 1, .jobs = 1});
  auto b = sobol_indices(d, out, 0, {.bootReps = 300, .seed = 1, .jobs = 4});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK((*a.ciS1)[k].low == (*b.ciS1)[k].low);
    CHECK((*a.ciT)[k].high == (*b.ciT)[k].high);
  }
  auto ca = dummy_cutoffs(d, out, 0, {.bootReps = 300, .seed = 1, .jobs = 1});
  auto cb = dummy_cutoffs(d, out, 0, {.bootReps = 300, .seed = 1, .jobs = 3});
  CHECK(ca == cb);
}

TEST_CASE("dummy cutoffs") {
  auto f = AnalyticFn::linear({1.0, 0.0});
  auto small = sobol_blocks(f.space(), {1000, BaseSampler::Lhs}, 2);
  auto big = sobol_blocks(f.space(), {10000, BaseSampler::Lhs}, 2);
  auto out_small = evaluate(f, small);
  auto [s_cut, t_cut] = dummy_cutoffs(small, out_small, 0, {.bootReps = 500, .seed = 3});
  auto r = sobol_indices(small, out_small, 0, {.bootReps = 0});
  CHECK(std::abs(r.t[1]) <= t_cut);
  CHECK(std::abs(r.s1[1]) <= s_cut);
  CHECK(t_cut > 0.0);
  auto [s_big, t_big] = dummy_cutoffs(big, evaluate(f, big), 0, {.bootReps = 500, .seed = 3});
  CHECK(t_big < t_cut);
  CHECK(s_big < s_cut);
}

TEST_CASE("error cases and masking") {
  auto f = AnalyticFn::linear({0.0, 0.0});
  auto d = sobol_blocks(f.space(), {16, BaseSampler::Lhs}, 1);
  auto flat = evaluate(f, d);
  CHECK(kind_of([&] { sobol_indices(d, flat, 0); }) == ErrorKind::Degenerate);
  CHECK(kind_of([&] { dummy_cutoffs(d, flat, 0); }) == ErrorKind::Degenerate);

  auto g = AnalyticFn::linear({1.0, 2.0});
  auto out = evaluate(g, d);
  out.valid[2 * 16 + 5] = 0;  // AB_1 row of tuple 5
  auto r = sobol_indices(d, out, 0, {.bootReps = 0});
  CHECK(r.tuplesUsed == 15);
  std::fill(out.valid.begin(), out.valid.end(), 0);
  CHECK(kind_of([&] { sobol_indices(d, out, 0); }) == ErrorKind::NoData);
}

TEST_CASE("results carry intervals and cutoffs") {
  auto f = AnalyticFn::linear({2.0, 1.0});
  auto d = sobol_blocks(f.space(), {256, BaseSampler::Lhs}, 1);
  auto idx = sobol_indices(d, evaluate(f, d), 0, {.bootReps = 100});
  idx.dummyT = 0.01;
  auto [s1, t] = sobol_results(idx, {"a", "b"});
  CHECK(s1.method == Method::SobolS1);
  CHECK(t.scalars.at("dummy_t") == 0.01);
  REQUIRE(t.ci.has_value());
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK((*t.ci)[k].low <= t.raw[k]);
    CHECK((*t.ci)[k].high >= t.raw[k]);
  }
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
}
