#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sensa/compare.hpp"
#include "sensa/csv.hpp"

using namespace sensa;

namespace {

const std::filesystem::path kFixtures = SENSA_FIXTURE_DIR;

RankingTable table(std::initializer_list<std::initializer_list<double>> cols) {
  const auto m = static_cast<Eigen::Index>(cols.size());
  const auto k = static_cast<Eigen::Index>(cols.begin()->size());
  Eigen::MatrixXd v(k, m);
  Eigen::Index c = 0;
  std::vector<std::string> methods, params;
  for (const auto& col : cols) {
    Eigen::Index r = 0;
    for (double x : col) v(r++, c) = x;
    methods.push_back("m" + std::to_string(c++));
  }
  for (Eigen::Index i = 0; i < k; ++i) params.push_back("p" + std::to_string(i));
  return RankingTable::from_columns(params, methods, v);
}

}  // namespace

TEST_CASE("average ranks") {
  const std::vector<double> v{0.1, 0.5, 0.1, 0.3};
  CHECK(average_ranks(v) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
  const std::vector<double> flat{2, 2, 2};
  CHECK(average_ranks(flat) == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("Kendall's W on hand-checked cases") {
  auto same = table({{3, 2, 1}, {30, 20, 10}});
  auto c = kendalls_w(same);
  CHECK(c.w == doctest::Approx(1.0));
  CHECK(c.dof == 2);
  CHECK(c.chiSq == doctest::Approx(4.0));
  CHECK(c.pValue == doctest::Approx(std::exp(-2.0)));

  // Rank sums are all 4, so S = 0.
  auto reversed = table({{3, 2, 1}, {1, 2, 3}});
  CHECK(kendalls_w(reversed).w == doctest::Approx(0.0));

  // A monotone transform of one method's scores leaves W unchanged.
  auto a = table({{0.5, 0.3, 0.15, 0.05}, {0.4, 0.4, 0.1, 0.1}, {0.2, 0.6, 0.1, 0.1}});
  auto b = table({{0.25, 0.09, 0.0225, 0.0025}, {0.4, 0.4, 0.1, 0.1}, {0.2, 0.6, 0.1, 0.1}});
  CHECK(kendalls_w(a).w == doctest::Approx(kendalls_w(b).w).epsilon(1e-15));
  CHECK(kendalls_w(a).w > 0.0);
  CHECK(kendalls_w(a).w < 1.0);

  CHECK_THROWS_AS(kendalls_w(table({{1.0}, {1.0}})), Error);
  CHECK_THROWS_AS(kendalls_w(table({{1, 2, 3}})), Error);
  CHECK_THROWS_AS(table({{1, -2, 3}, {1, 2, 3}}), Error);
}

TEST_CASE("Kendall's W of the published comparison tables") {
  // Frozen from an independent brute-force rank computation of the same
  // transcribed tables.
  auto t3 = read_ranking_csv(kFixtures / "gr6j_qsim_table.csv");
  auto t5 = read_ranking_csv(kFixtures / "simplyp_tdp_table.csv");
  auto t7 = read_ranking_csv(kFixtures / "stics_mafruit_table.csv");
  CHECK(t3.k() == 6);
  CHECK(t5.k() == 13);
  CHECK(t7.k() == 12);
  CHECK(t3.m() == 8);
  CHECK(kendalls_w(t3).w == doctest::Approx(0.8696581196581197).epsilon(1e-12));
  CHECK(kendalls_w(t5).w == doctest::Approx(0.8589359310603222).epsilon(1e-12));
  CHECK(kendalls_w(t7).w == doctest::Approx(0.8139772727272727).epsilon(1e-12));
  CHECK(kendalls_w(t5).pValue == doctest::Approx(1.3993420243863503e-12).epsilon(1e-9));
  for (Eigen::Index c = 0; c < 8; ++c) CHECK(t5.scaled.col(c).sum() == doctest::Approx(1.0));
}

TEST_CASE("pairwise correlation") {
  auto t = table({{0.5, 0.3, 0.2}, {0.5, 0.3, 0.2}, {1.0 / 6, 11.0 / 30, 7.0 / 15}, {1, 1, 1}});
  auto r = pairwise_pearson(t);
  CHECK(r(0, 1) == doctest::Approx(1.0));
  CHECK(r(0, 2) == doctest::Approx(-1.0));
  CHECK(r(0, 0) == 1.0);
  CHECK(std::isnan(r(0, 3)));
  CHECK(std::isnan(r(3, 3)));
  CHECK(r(1, 2) == r(2, 1));

  auto t5 = read_ranking_csv(kFixtures / "simplyp_tdp_table.csv");
  auto p = pairwise_pearson(t5);
  CHECK(p(0, 1) > 0.79);
  CHECK(p(0, 1) < 0.98);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  CHECK(eig.eigenvalues().minCoeff() > -1e-8);
  auto s = pairwise_correlation(t5, true);
  CHECK(s(0, 0) == 1.0);
  CHECK(s(2, 5) <= 1.0);
}

TEST_CASE("ranking CSV round trip") {
  auto t = table({{0.5, 0.25, 0.25}, {0.1, 0.7, 0.2}});
  const auto path = std::filesystem::temp_directory_path() / "sensa_ranking.csv";
  write_ranking_csv(path, t);
  auto back = read_ranking_csv(path);
  CHECK(back.params == t.params);
  CHECK(back.methods == t.methods);
  CHECK(back.scaled == t.scaled);
  CHECK(back.ranks == t.ranks);
  std::filesystem::remove(path);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.0}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(-0.0) == "0");
  CHECK(format_double(0.5) == "0.5");
  CHECK(std::isnan(parse_double("nan")));
  CHECK_THROWS_AS(parse_double("1.2x"), Error);
  CHECK_THROWS_AS(parse_double(""), Error);
}
