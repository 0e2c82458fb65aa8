#include "sensa/testbed.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sensa/rng.hpp"

namespace sensa {

namespace {
constexpr double kPi = std::numbers::pi;
}

AnalyticFn AnalyticFn::linear(std::vector<double> weights) {
  require(!weights.empty(), ErrorKind::Config, "linear function needs at least one weight");
  AnalyticFn f;
  f.kind_ = AnalyticKind::Linear;
  f.coef_ = std::move(weights);
  return f;
}

AnalyticFn AnalyticFn::ishigami(double a, double b) {
  AnalyticFn f;
  f.kind_ = AnalyticKind::Ishigami;
  f.coef_ = {a, b};
  return f;
}

AnalyticFn AnalyticFn::sobol_g(std::vector<double> a) {
  require(!a.empty(), ErrorKind::Config, "G function needs at least one coefficient");
  for (double v : a) require(v >= 0.0, ErrorKind::Config, "G function coefficients must be >= 0");
  AnalyticFn f;
  f.kind_ = AnalyticKind::SobolG;
  f.coef_ = std::move(a);
  return f;
}

std::string AnalyticFn::name() const {
  switch (kind_) {
    case AnalyticKind::Linear: return "linear";
    case AnalyticKind::Ishigami: return "ishigami";
    case AnalyticKind::SobolG: return "sobolg";
  }
  return "unknown";
}

std::size_t AnalyticFn::dims() const noexcept {
  return kind_ == AnalyticKind::Ishigami ? 3 : coef_.size();
}

double AnalyticFn::operator()(std::span<const double> u) const {
  switch (kind_) {
    case AnalyticKind::Linear: {
      double y = 0.0;
      for (std::size_t k = 0; k < coef_.size(); ++k) y += coef_[k] * u[k];
      return y;
    }
    case AnalyticKind::Ishigami: {
      const double x1 = -kPi + 2.0 * kPi * u[0];
      const double x2 = -kPi + 2.0 * kPi * u[1];
      const double x3 = -kPi + 2.0 * kPi * u[2];
      const double s2 = std::sin(x2);
      return std::sin(x1) + coef_[0] * s2 * s2 + coef_[1] * std::pow(x3, 4) * std::sin(x1);
    }
    case AnalyticKind::SobolG: {
      double y = 1.0;
      for (std::size_t k = 0; k < coef_.size(); ++k) {
        y *= (std::abs(4.0 * u[k] - 2.0) + coef_[k]) / (1.0 + coef_[k]);
      }
      return y;
    }
  }
  return 0.0;
}

Vector AnalyticFn::eval(const Matrix& unit) const {
  require(static_cast<std::size_t>(unit.cols()) == dims(), ErrorKind::Structural,
          name() + " expects " + std::to_string(dims()) + " columns");
  Vector y(unit.rows());
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    y(i) = (*this)(std::span<const double>(unit.row(i).data(), dims()));
  }
  return y;
}

AnalyticSobol AnalyticFn::analytic_sobol() const {
  AnalyticSobol r;
  switch (kind_) {
    case AnalyticKind::Linear: {
      double total = 0.0;
      for (double w : coef_) total += w * w;
      require(total > 0.0, ErrorKind::Degenerate, "all-zero linear weights");
      for (double w : coef_) r.s1.push_back(w * w / total);
      r.t = r.s1;
      break;
    }
    case AnalyticKind::Ishigami: {
      const double a = coef_[0], b = coef_[1];
      const double pi4 = std::pow(kPi, 4), pi8 = pi4 * pi4;
      const double v1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
      const double v2 = a * a / 8.0;
      const double v13 = 8.0 * b * b * pi8 / 225.0;
      const double v = v1 + v2 + v13;
      r.s1 = {v1 / v, v2 / v, 0.0};
      r.t = {(v1 + v13) / v, v2 / v, v13 / v};
      break;
    }
    case AnalyticKind::SobolG: {
      std::vector<double> vi;
      double prod = 1.0;
      for (double a : coef_) {
        vi.push_back(1.0 / (3.0 * (1.0 + a) * (1.0 + a)));
        prod *= 1.0 + vi.back();
      }
      const double v = prod - 1.0;
      for (double x : vi) {
        r.s1.push_back(x / v);
        r.t.push_back(x * (prod / (1.0 + x)) / v);
      }
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

Gr6jParams Gr6jParams::from_values(std::span<const double> x) {
  require(x.size() == 6, ErrorKind::Structural, "GR6J needs exactly six parameters");
  return {x[0], x[1], x[2], x[3], x[4], x[5]};
}

ParameterSpace gr6j_space() {
  return ParameterSpace({{"X1", 0.0, 1460.0},
                         {"X2", -1.8, 2.51},
                         {"X3", 0.99, 983.52},
                         {"X4", 0.84, 19.56},
                         {"X5", -2.0, 2.0},
                         {"X6", 0.31, 262.43}});
}

namespace {

void check_params(const Gr6jParams& p) {
  require(p.x1 >= 0.0, ErrorKind::Domain, "GR6J X1 must be >= 0");
  require(p.x3 > 0.0, ErrorKind::Domain, "GR6J X3 must be > 0");
  require(p.x4 > 0.0, ErrorKind::Domain, "GR6J X4 must be > 0");
  require(p.x6 > 0.0, ErrorKind::Domain, "GR6J X6 must be > 0");
}

double s_curve1(double t, double x4) {
  if (t <= 0.0) return 0.0;
  if (t < x4) return std::pow(t / x4, 2.5);
  return 1.0;
}

double s_curve2(double t, double x4) {
  if (t <= 0.0) return 0.0;
  if (t < x4) return 0.5 * std::pow(t / x4, 2.5);
  if (t < 2.0 * x4) return 1.0 - 0.5 * std::pow(2.0 - t / x4, 2.5);
  return 1.0;
}

// Smallest capacity treated as a functioning production store.
constexpr double kMinStore = 1e-9;

}  // namespace

std::vector<double> gr6j_uh1(double x4) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(x4)));
  std::vector<double> o(n);
  for (std::size_t i = 0; i < n; ++i) {
    o[i] = s_curve1(static_cast<double>(i + 1), x4) - s_curve1(static_cast<double>(i), x4);
  }
  return o;
}

std::vector<double> gr6j_uh2(double x4) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * x4)));
  std::vector<double> o(n);
  for (std::size_t i = 0; i < n; ++i) {
    o[i] = s_curve2(static_cast<double>(i + 1), x4) - s_curve2(static_cast<double>(i), x4);
  }
  return o;
}

Gr6jState Gr6jState::initial(const Gr6jParams& p) {
  check_params(p);
  Gr6jState s;
  s.s = 0.3 * p.x1;
  s.r1 = 0.5 * p.x3;
  s.r2 = 0.0;
  s.ord1 = gr6j_uh1(p.x4);
  s.ord2 = gr6j_uh2(p.x4);
  s.uh1.assign(s.ord1.size(), 0.0);
  s.uh2.assign(s.ord2.size(), 0.0);
  return s;
}

Gr6jDay gr6j_step(Gr6jState& st, double p, double e, const Gr6jParams& x) {
  require(p >= 0.0 && e >= 0.0 && std::isfinite(p) && std::isfinite(e), ErrorKind::Domain,
          "GR6J forcing must be finite and nonnegative");
  Gr6jDay d;

  // Production store.
  d.pn = std::max(p - e, 0.0);
  d.en = std::max(e - p, 0.0);
  if (x.x1 > kMinStore) {
    const double sr = st.s / x.x1;
    if (d.pn > 0.0) {
      const double tws = std::tanh(std::min(d.pn / x.x1, 13.0));
      d.ps = x.x1 * (1.0 - sr * sr) * tws / (1.0 + sr * tws);
    } else if (d.en > 0.0) {
      const double tws = std::tanh(std::min(d.en / x.x1, 13.0));
      d.es = st.s * (2.0 - sr) * tws / (1.0 + (1.0 - sr) * tws);
    }
    st.s = std::clamp(st.s + d.ps - d.es, 0.0, x.x1);
    const double q = 4.0 * st.s / (9.0 * x.x1);
    d.perc = st.s * (1.0 - std::pow(1.0 + q * q * q * q, -0.25));
    st.s -= d.perc;
  } else {
    st.s = 0.0;
  }
  d.ae = std::min(p, e) + d.es;
  d.pr = d.perc + std::max(d.pn - d.ps, 0.0);
  d.prod = st.s;

  // Unit hydrographs: 90% through UH1, 10% through UH2.
  if (st.ord1.empty()) st.ord1 = gr6j_uh1(x.x4);
  if (st.ord2.empty()) st.ord2 = gr6j_uh2(x.x4);
  const auto& o1 = st.ord1;
  const auto& o2 = st.ord2;
  if (st.uh1.size() != o1.size()) st.uh1.assign(o1.size(), 0.0);
  if (st.uh2.size() != o2.size()) st.uh2.assign(o2.size(), 0.0);
  for (std::size_t i = 0; i < o1.size(); ++i) st.uh1[i] += 0.9 * d.pr * o1[i];
  for (std::size_t i = 0; i < o2.size(); ++i) st.uh2[i] += 0.1 * d.pr * o2[i];
  d.q9 = st.uh1.front();
  d.q1 = st.uh2.front();
  std::rotate(st.uh1.begin(), st.uh1.begin() + 1, st.uh1.end());
  st.uh1.back() = 0.0;
  std::rotate(st.uh2.begin(), st.uh2.begin() + 1, st.uh2.end());
  st.uh2.back() = 0.0;

  // Groundwater exchange, driven by the previous routing level.
  d.exch = x.x2 * (st.r1 / x.x3 - x.x5);

  // Routing store.
  st.r1 = std::max(st.r1 + 0.6 * d.q9 + d.exch, 0.0);
  const double rr = st.r1 / x.x3;
  d.qr = st.r1 * (1.0 - std::pow(1.0 + rr * rr * rr * rr, -0.25));
  st.r1 -= d.qr;
  d.rout = st.r1;

  // Exponential store; softplus written to avoid overflow.
  st.r2 += 0.4 * d.q9 + d.exch;
  const double ar = st.r2 / x.x6;
  d.qrexp = x.x6 * (std::max(ar, 0.0) + std::log1p(std::exp(-std::abs(ar))));
  st.r2 -= d.qrexp;
  d.exp = st.r2;

  // Direct branch.
  d.qd = std::max(d.q1 + d.exch, 0.0);
  d.qsim = d.qr + d.qrexp + d.qd;
  return d;
}

const std::vector<std::string>& gr6j_output_names() {
  static const std::vector<std::string> names = {
      "Pn", "En", "Ps", "Es", "AE", "Perc", "PR", "Q9", "Q1", "Exch",
      "Rout", "Exp", "QRExp", "QR", "QD", "Qsim", "Prod"};
  return names;
}

std::vector<double> Gr6jSeries::series(std::string_view name) const {
  double Gr6jDay::*field = nullptr;
  static constexpr std::pair<std::string_view, double Gr6jDay::*> kFields[] = {
      {"Pn", &Gr6jDay::pn},       {"En", &Gr6jDay::en},     {"Ps", &Gr6jDay::ps},
      {"Es", &Gr6jDay::es},       {"AE", &Gr6jDay::ae},     {"Perc", &Gr6jDay::perc},
      {"PR", &Gr6jDay::pr},       {"Q9", &Gr6jDay::q9},     {"Q1", &Gr6jDay::q1},
      {"Exch", &Gr6jDay::exch},   {"Rout", &Gr6jDay::rout}, {"Exp", &Gr6jDay::exp},
      {"QRExp", &Gr6jDay::qrexp}, {"QR", &Gr6jDay::qr},     {"QD", &Gr6jDay::qd},
      {"Qsim", &Gr6jDay::qsim},   {"Prod", &Gr6jDay::prod}};
  for (const auto& [n, f] : kFields) {
    if (n == name) field = f;
  }
  require(field != nullptr, ErrorKind::Config, "unknown GR6J output '" + std::string(name) + "'");
  std::vector<double> out;
  out.reserve(days.size());
  for (const auto& d : days) out.push_back(d.*field);
  return out;
}

Gr6jSeries gr6j_run(const Gr6jParams& params, const Forcing& forcing, std::size_t warmupDays) {
  require(forcing.precip.size() == forcing.pet.size(), ErrorKind::Structural,
          "forcing precipitation and PET lengths differ");
  require(forcing.size() > warmupDays, ErrorKind::Config,
          "forcing has " + std::to_string(forcing.size()) + " days, warmup needs more than " +
              std::to_string(warmupDays));
  for (std::size_t t = 0; t < forcing.size(); ++t) {
    require(forcing.precip[t] >= 0.0 && forcing.pet[t] >= 0.0, ErrorKind::Domain,
            "negative forcing on day " + std::to_string(t));
  }
  Gr6jState state = Gr6jState::initial(params);
  Gr6jSeries out;
  out.warmup = warmupDays;
  out.days.reserve(forcing.size());
  for (std::size_t t = 0; t < forcing.size(); ++t) {
    out.days.push_back(gr6j_step(state, forcing.precip[t], forcing.pet[t], params));
  }
  return out;
}

Forcing synthetic_forcing(std::size_t days, std::uint64_t seed, std::int64_t startDay) {
  Rng rng(derive_seed(seed, 0xf0));
  Forcing f;
  f.days.resize(days);
  f.precip.resize(days);
  f.pet.resize(days);
  for (std::size_t t = 0; t < days; ++t) {
    const double phase = 2.0 * kPi * static_cast<double>(t) / 365.25;
    f.days[t] = startDay + static_cast<std::int64_t>(t);
    f.pet[t] = std::max(0.0, 2.0 - 1.8 * std::cos(phase));
    // Wetter winters: storm probability and depth peak around day 0.
    const double wet = 0.35 + 0.15 * std::cos(phase);
    const double u = rng.uniform();
    const double depth = rng.uniform();
    f.precip[t] = u < wet ? -(4.0 + 3.0 * std::cos(phase)) * std::log1p(-depth) : 0.0;
  }
  return f;
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
  return buf;
}

std::int64_t parse_iso_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  const bool shape = text.size() == 10 && text[4] == '-' && text[7] == '-';
  const char* b = text.data();
  const bool ok = shape && std::from_chars(b, b + 4, y).ec == std::errc{} &&
                  std::from_chars(b + 5, b + 7, m).ec == std::errc{} &&
                  std::from_chars(b + 8, b + 10, d).ec == std::errc{};
  require(ok && m >= 1 && m <= 12 && d >= 1 && d <= 31, ErrorKind::Domain,
          "malformed date '" + std::string(text) + "'");
  const auto days = days_from_civil(y, m, d);
  require(civil_from_days(days) == text, ErrorKind::Domain,
          "invalid calendar date '" + std::string(text) + "'");
  return days;
}

Forcing read_forcing_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open forcing file " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "date,precip_mm,pet_mm", ErrorKind::Structural,
          "forcing header must be 'date,precip_mm,pet_mm'");
  Forcing f;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string date, p, e;
    require(std::getline(ss, date, ',') && std::getline(ss, p, ',') && std::getline(ss, e),
            ErrorKind::Structural, "forcing line " + std::to_string(lineno) + " needs 3 fields");
    const auto day = parse_iso_date(date);
    if (!f.days.empty()) {
      require(day == f.days.back() + 1, ErrorKind::Structural,
              "forcing dates must be consecutive days (line " + std::to_string(lineno) + ")");
    }
    double pv = 0.0, ev = 0.0;
    const bool ok = std::from_chars(p.data(), p.data() + p.size(), pv).ec == std::errc{} &&
                    std::from_chars(e.data(), e.data() + e.size(), ev).ec == std::errc{};
    require(ok, ErrorKind::Structural, "non-numeric forcing on line " + std::to_string(lineno));
    require(pv >= 0.0 && ev >= 0.0, ErrorKind::Domain,
            "negative forcing on line " + std::to_string(lineno));
    f.days.push_back(day);
    f.precip.push_back(pv);
    f.pet.push_back(ev);
  }
  require(f.size() > 0, ErrorKind::NoData, "forcing file has no rows");
  return f;
}

void write_forcing_csv(const std::filesystem::path& path, const Forcing& forcing) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write forcing file " + path.string());
  out << "date,precip_mm,pet_mm\n";
  char buf[64];
  for (std::size_t t = 0; t < forcing.size(); ++t) {
    out << civil_from_days(forcing.days[t]) << ',';
    out.write(buf, std::to_chars(buf, buf + sizeof buf, forcing.precip[t]).ptr - buf);
    out << ',';
    out.write(buf, std::to_chars(buf, buf + sizeof buf, forcing.pet[t]).ptr - buf);
    out << '\n';
  }
}

namespace {

struct PairStats {
  double ms = 0, mo = 0, ss = 0, so = 0, cov = 0;
};

PairStats pair_stats(std::span<const double> sim, std::span<const double> obs) {
  require(sim.size() == obs.size(), ErrorKind::Structural, "series lengths differ");
  require(sim.size() >= 2, ErrorKind::InsufficientData, "need at least two time steps");
  const double n = static_cast<double>(sim.size());
  PairStats p;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    p.ms += sim[i];
    p.mo += obs[i];
  }
  p.ms /= n;
  p.mo /= n;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    p.ss += (sim[i] - p.ms) * (sim[i] - p.ms);
    p.so += (obs[i] - p.mo) * (obs[i] - p.mo);
    p.cov += (sim[i] - p.ms) * (obs[i] - p.mo);
  }
  require(p.so > 0.0, ErrorKind::Degenerate, "observed series is constant");
  return p;
}

}  // namespace

double nse(std::span<const double> sim, std::span<const double> obs) {
  const auto p = pair_stats(sim, obs);
  double sse = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) sse += (sim[i] - obs[i]) * (sim[i] - obs[i]);
  return 1.0 - sse / p.so;
}

double kge(std::span<const double> sim, std::span<const double> obs) {
  const auto p = pair_stats(sim, obs);
  require(p.mo != 0.0, ErrorKind::Degenerate, "observed mean is zero; KGE bias term undefined");
  // A flat simulation carries no timing information: treat r as 0.
  const double r = p.ss > 0.0 ? p.cov / std::sqrt(p.ss * p.so) : 0.0;
  const double alpha = std::sqrt(p.ss / p.so);
  const double beta = p.ms / p.mo;
  return 1.0 - std::sqrt((r - 1) * (r - 1) + (alpha - 1) * (alpha - 1) + (beta - 1) * (beta - 1));
}

}  // namespace sensa
