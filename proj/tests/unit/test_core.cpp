#include <doctest.h>

#include <cmath>
#include <limits>

#include "sensa/core.hpp"

using namespace sensa;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("parameter space validation") {
  CHECK_NOTHROW(ParameterSpace({{"a", 0, 1}, {"b", -1, 1}}));
  CHECK(kind_of([] { ParameterSpace(std::vector<ParameterDef>{}); }) == ErrorKind::Config);
  CHECK(kind_of([] { ParameterSpace({{"a", 1, 1}}); }) == ErrorKind::Config);
  CHECK(kind_of([] { ParameterSpace({{"a", 0, 1}, {"a", 0, 2}}); }) == ErrorKind::Config);
  CHECK(kind_of([] { ParameterSpace({{"", 0, 1}}); }) == ErrorKind::Config);
  const auto s = ParameterSpace::unit_cube(3);
  CHECK(s.names() == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(s.index_of("x2") == 1u);
  CHECK_FALSE(s.index_of("x9").has_value());
}

TEST_CASE("unit to range mapping") {
  ParameterSpace s({{"a", -3, 2}, {"b", 10, 30}});
  Matrix u(3, 2);
  u << 0.37, 0.25, 0.0, 0.0, 1.0, 1.0;
  const Matrix m = map_unit_to_range(s, u);
  CHECK(m(0, 0) == doctest::Approx(-1.15).epsilon(1e-14));
  CHECK(m(0, 1) == doctest::Approx(15.0));
  CHECK(m(1, 0) == -3.0);
  CHECK(m(2, 1) == 30.0);
  CHECK((map_range_to_unit(s, m) - u).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix bad(1, 2);
  bad << 1.5, 0.0;
  CHECK(kind_of([&] { map_unit_to_range(s, bad); }) == ErrorKind::Domain);
  Matrix narrow(1, 1);
  narrow << 0.5;
  CHECK(kind_of([&] { map_unit_to_range(s, narrow); }) == ErrorKind::Structural);
}

TEST_CASE("filtering masks rows and is idempotent") {
  Matrix v(10, 1);
  for (int i = 0; i < 10; ++i) v(i, 0) = i;
  v(4, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto out = OutputMatrix::from_values(v, {"y"});
  CHECK(out.valid_count() == 9);
  CHECK_FALSE(out.is_valid(4));

  auto none = filter_outputs(out, [](auto row) { return row[0] <= 100; });
  CHECK(none.rejected == 0);
  CHECK(none.output.valid == out.valid);

  const RowPredicate small = [](std::span<const double> row) { return row[0] < 6; };
  auto once = filter_outputs(out, small);
  CHECK(once.rejected == 4);
  auto twice = filter_outputs(once.output, small);
  CHECK(twice.rejected == 0);
  CHECK(twice.output.valid == once.output.valid);
  CHECK(twice.output.values(7, 0) == 7.0);  // values untouched

  auto throwing = filter_outputs(out, [](auto) -> bool { throw std::runtime_error("boom"); });
  CHECK(throwing.output.valid_count() == 0);
}

TEST_CASE("scaling to unit sum") {
  auto a = scale_to_unit_sum(std::vector{2.0, 2.0});
  CHECK(a[0] == 0.5);
  auto b = scale_to_unit_sum(std::vector{0.29, 0.69, 0.02});
  CHECK(b[0] == doctest::Approx(0.29));
  CHECK(b[1] == doctest::Approx(0.69));
  auto c = scale_to_unit_sum(std::vector{1.0, 3.0});
  CHECK(c[0] == 0.25);
  CHECK(c[1] == 0.75);
  auto d = scale_to_unit_sum(std::vector{7.0, 21.0});
  CHECK(d == c);
  CHECK(kind_of([] { scale_to_unit_sum(std::vector{0.0, 0.0}); }) == ErrorKind::Degenerate);
  CHECK(kind_of([] { scale_to_unit_sum(std::vector{-1.0, 2.0}); }) == ErrorKind::Domain);
}

TEST_CASE("make_result clips noise and brackets the estimate") {
  auto r = make_result(Method::SobolT, {"a", "b"}, {0.8, -0.01},
                       std::vector<Interval>{{0.85, 0.9}, {-0.02, 0.01}});
  CHECK(r.raw[1] == -0.01);
  CHECK(r.scaled[0] == 1.0);
  CHECK(r.scaled[1] == 0.0);
  CHECK((*r.ci)[0].low == 0.8);
  CHECK(kind_of([] { make_result(Method::RegSrc, {"a"}, {-1.0}); }) == ErrorKind::Domain);
  CHECK(method_from_string("vars_to") == Method::VarsTo);
  CHECK_FALSE(method_from_string("nope").has_value());
}

TEST_CASE("layout access checks the design kind") {
  auto s = ParameterSpace::unit_cube(1);
  Matrix u(1, 1);
  u << 0.5;
  auto d = make_design(s, u, LhsLayout{}, 1);
  CHECK(d.kind() == DesignKind::Lhs);
  CHECK(kind_of([&] { d.layout_as<SobolLayout>(); }) == ErrorKind::UnsupportedDesign);
}
