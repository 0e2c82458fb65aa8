#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

// ---------------------------------------------------------------------------
// Analytic benchmark functions, all defined on the unit cube.

enum class AnalyticKind { Linear, Ishigami, SobolG };

struct AnalyticSobol {
  std::vector<double> s1;
  std::vector<double> t;
};

class AnalyticFn {
 public:
  /// f(u) = sum_k w_k u_k.
  static AnalyticFn linear(std::vector<double> weights);
  /// sin(x1) + a sin^2(x2) + b x3^4 sin(x1) with x = -pi + 2 pi u.
  static AnalyticFn ishigami(double a = 7.0, double b = 0.1);
  /// prod_k (|4u_k - 2| + a_k) / (1 + a_k).
  static AnalyticFn sobol_g(std::vector<double> a);

  AnalyticKind kind() const noexcept { return kind_; }
  std::string name() const;
  std::size_t dims() const noexcept;
  const std::vector<double>& coefficients() const noexcept { return coef_; }

  double operator()(std::span<const double> u) const;
  Vector eval(const Matrix& unit) const;

  /// Closed-form first-order and total indices.
  AnalyticSobol analytic_sobol() const;

  /// Unit-range space named x1..xK.
  ParameterSpace space() const { return ParameterSpace::unit_cube(dims()); }

 private:
  AnalyticKind kind_ = AnalyticKind::Linear;
  std::vector<double> coef_;  // weights, (a, b) or G-function a_k
};

// ---------------------------------------------------------------------------
// GR6J daily rainfall-runoff model.

struct Gr6jParams {
  double x1 = 350.0;  // production store capacity (mm)
  double x2 = 0.0;    // exchange coefficient
  double x3 = 90.0;   // routing store capacity (mm)
  double x4 = 1.7;    // unit hydrograph time constant (d)
  double x5 = 0.0;    // exchange threshold
  double x6 = 5.0;    // exponential store depletion coefficient (mm)

  static Gr6jParams from_values(std::span<const double> x);
};

/// X1..X6 with their literature ranges.
ParameterSpace gr6j_space();

struct Gr6jState {
  double s = 0.0;   // production store
  double r1 = 0.0;  // routing store
  double r2 = 0.0;  // exponential store, may be negative
  std::vector<double> uh1;  // pending UH1 outflow, uh1[0] leaves next
  std::vector<double> uh2;
  std::vector<double> ord1;  // UH ordinates for the current x4
  std::vector<double> ord2;

  /// s = 0.3 x1, r1 = 0.5 x3, r2 = 0, empty unit-hydrograph buffers.
  static Gr6jState initial(const Gr6jParams& p);
};

struct Gr6jDay {
  double pn = 0, en = 0, ps = 0, es = 0, ae = 0, perc = 0, pr = 0;
  double q9 = 0, q1 = 0, exch = 0;
  double rout = 0, exp = 0, qrexp = 0, qr = 0, qd = 0, qsim = 0, prod = 0;
};

/// Names accepted by Gr6jSeries::series, in export order.
const std::vector<std::string>& gr6j_output_names();

/// Unit-hydrograph ordinates from the S-curves with exponent 5/2;
/// UH1 has ceil(x4) ordinates, UH2 ceil(2 x4). Each sums to 1.
std::vector<double> gr6j_uh1(double x4);
std::vector<double> gr6j_uh2(double x4);

/// One day. State is updated in place.
Gr6jDay gr6j_step(Gr6jState& state, double p, double e, const Gr6jParams& params);

struct Forcing {
  std::vector<std::int64_t> days;  // days since 1970-01-01, strictly consecutive
  std::vector<double> precip;
  std::vector<double> pet;

  std::size_t size() const noexcept { return precip.size(); }
};

struct Gr6jSeries {
  std::vector<Gr6jDay> days;
  std::size_t warmup = 0;  // leading spin-up days

  /// Named series over all days (spin-up included).
  std::vector<double> series(std::string_view name) const;
};

Gr6jSeries gr6j_run(const Gr6jParams& params, const Forcing& forcing, std::size_t warmupDays = 365);

/// Seasonal PET sinusoid plus a seeded storm process.
Forcing synthetic_forcing(std::size_t days, std::uint64_t seed, std::int64_t startDay = 0);

/// CSV with header date,precip_mm,pet_mm and ISO dates.
Forcing read_forcing_csv(const std::filesystem::path& path);
void write_forcing_csv(const std::filesystem::path& path, const Forcing& forcing);

std::int64_t days_from_civil(int y, unsigned m, unsigned d);
std::string civil_from_days(std::int64_t days);
/// Parses YYYY-MM-DD; throws Domain on malformed input.
std::int64_t parse_iso_date(std::string_view text);

// ---------------------------------------------------------------------------
// Goodness of fit.

double nse(std::span<const double> sim, std::span<const double> obs);
double kge(std::span<const double> sim, std::span<const double> obs);

}  // namespace sensa
