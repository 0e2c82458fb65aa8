#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sensa/testbed.hpp"

using namespace sensa;

TEST_CASE("analytic indices") {
  auto lin = AnalyticFn::linear({1.0, 0.0}).analytic_sobol();
  CHECK(lin.s1 == std::vector<double>{1.0, 0.0});

  auto ish = AnalyticFn::ishigami().analytic_sobol();
  CHECK(ish.s1[0] == doctest::Approx(0.3139).epsilon(1e-3));
  CHECK(ish.s1[1] == doctest::Approx(0.4424).epsilon(1e-3));
  CHECK(ish.s1[2] == 0.0);
  CHECK(ish.t[0] == doctest::Approx(0.5576).epsilon(1e-3));
  CHECK(ish.t[2] == doctest::Approx(0.2437).epsilon(1e-3));

  auto g = AnalyticFn::sobol_g({0, 0, 0}).analytic_sobol();
  CHECK(g.s1[0] == doctest::Approx(g.s1[2]));
  CHECK(g.t[0] > g.s1[0]);

  auto f = AnalyticFn::ishigami();
  const double mid[] = {0.5, 0.5, 0.5};
  CHECK(std::abs(f(mid)) < 1e-12);
  const double corner[] = {0.75, 0.75, 0.5};  // x1 = x2 = pi/2, x3 = 0
  CHECK(f(corner) == doctest::Approx(8.0));
}

TEST_CASE("GR6J step arithmetic") {
  Gr6jParams p;
  auto st = Gr6jState::initial(p);
  auto d = gr6j_step(st, 5.0, 2.0, p);
  CHECK(d.pn == 3.0);
  CHECK(d.en == 0.0);
  CHECK(d.qsim == doctest::Approx(d.qr + d.qrexp + d.qd).epsilon(1e-14));
  CHECK(d.qsim >= 0.0);

  // Routing outflow at R1* = X3 and softplus at R2* = 0.
  Gr6jParams q;
  q.x2 = 0.0;
  auto s2 = Gr6jState::initial(q);
  s2.s = 0.0;
  s2.r1 = q.x3;
  s2.r2 = 0.0;
  auto dd = gr6j_step(s2, 0.0, 0.0, q);
  CHECK(dd.q9 == 0.0);
  CHECK(dd.qr == doctest::Approx(q.x3 * (1 - std::pow(2.0, -0.25))));
  CHECK(dd.qrexp == doctest::Approx(q.x6 * std::log(2.0)));

  for (double x4 : {0.84, 1.7, 7.3, 19.56}) {
    auto o1 = gr6j_uh1(x4);
    auto o2 = gr6j_uh2(x4);
    CHECK(std::accumulate(o1.begin(), o1.end(), 0.0) == doctest::Approx(1.0));
    CHECK(std::accumulate(o2.begin(), o2.end(), 0.0) == doctest::Approx(1.0));
    CHECK(o1.size() == static_cast<std::size_t>(std::ceil(x4)));
  }
  Gr6jParams bad;
  bad.x3 = 0.0;
  CHECK_THROWS_AS(Gr6jState::initial(bad), Error);
  CHECK_THROWS_AS(gr6j_step(st, -1.0, 0.0, p), Error);
}

TEST_CASE("GR6J dry-down decays monotonically") {
  Gr6jParams p;
  Forcing f;
  f.days.resize(365);
  std::iota(f.days.begin(), f.days.end(), 0);
  f.precip.assign(365, 0.0);
  f.pet.assign(365, 0.0);
  auto run = gr6j_run(p, f, 0);
  const auto q = run.series("Qsim");
  const std::size_t spin = static_cast<std::size_t>(std::ceil(2 * p.x4));
  for (std::size_t t = spin + 1; t < q.size(); ++t) CHECK(q[t] <= q[t - 1] + 1e-12);
  CHECK(q.back() < 0.1 * q[spin]);
}

TEST_CASE("GR6J run invariants") {
  const auto forcing = synthetic_forcing(1500, 7);
  auto space = gr6j_space();
  for (auto x : {std::vector<double>{350, 0.5, 90, 1.7, 0.2, 5},
                 std::vector<double>{1200, -1.5, 20, 12.0, 1.5, 150},
                 std::vector<double>{0, 2.5, 983, 0.84, -2, 0.31}}) {
    const auto p = Gr6jParams::from_values(x);
    auto st = Gr6jState::initial(p);
    double cum_q = 0, cum_p = 0, cum_gain = 0;
    const double initial = st.s + st.r1;
    for (std::size_t t = 0; t < forcing.size(); ++t) {
      auto d = gr6j_step(st, forcing.precip[t], forcing.pet[t], p);
      CHECK(st.s >= 0.0);
      CHECK(st.s <= p.x1 + 1e-9);
      CHECK(st.r1 >= 0.0);
      CHECK(d.qsim == doctest::Approx(d.qr + d.qrexp + d.qd));
      cum_q += d.qsim;
      cum_p += forcing.precip[t];
      // The exchange term enters the routing store, the exponential store
      // and the direct branch.
      cum_gain += 3.0 * std::max(d.exch, 0.0);
    }
    CHECK(cum_q <= cum_p + initial + cum_gain);
  }

  const auto p = Gr6jParams::from_values(std::vector<double>{350, 0.5, 90, 1.7, 0.2, 5});
  auto a = gr6j_run(p, forcing, 365);
  auto b = gr6j_run(p, forcing, 365);
  CHECK(a.series("Qsim") == b.series("Qsim"));
  CHECK(a.warmup == 365);
  CHECK_THROWS_AS(a.series("nope"), Error);
  CHECK_THROWS_AS(gr6j_run(p, synthetic_forcing(100, 1), 365), Error);
  auto neg = forcing;
  neg.pet[3] = -0.1;
  CHECK_THROWS_AS(gr6j_run(p, neg, 365), Error);
}

TEST_CASE("dates and forcing files") {
  CHECK(days_from_civil(1970, 1, 1) == 0);
  CHECK(civil_from_days(days_from_civil(2000, 2, 29)) == "2000-02-29");
  CHECK(parse_iso_date("2021-03-01") - parse_iso_date("2021-02-28") == 1);
  CHECK_THROWS_AS(parse_iso_date("2021-02-30"), Error);
  CHECK_THROWS_AS(parse_iso_date("21-02-03"), Error);

  const auto f = synthetic_forcing(40, 3, days_from_civil(2010, 12, 20));
  const auto path = std::filesystem::temp_directory_path() / "sensa_forcing_test.csv";
  write_forcing_csv(path, f);
  const auto g = read_forcing_csv(path);
  CHECK(g.days == f.days);
  CHECK(g.precip == f.precip);
  CHECK(g.pet == f.pet);
  std::filesystem::remove(path);
}

TEST_CASE("efficiency scores") {
  const std::vector<double> obs{1, 2, 3};
  CHECK(nse(obs, obs) == 1.0);
  CHECK(kge(obs, obs) == 1.0);
  const std::vector<double> mean{2, 2, 2};
  CHECK(nse(mean, obs) == 0.0);
  const std::vector<double> shifted{2, 3, 4};
  CHECK(nse(shifted, obs) == doctest::Approx(-0.5));  // 1 - 3/2
  CHECK(kge(shifted, obs) == doctest::Approx(0.5));   // bias ratio 2
  CHECK_THROWS_AS(nse(obs, mean), Error);
}
