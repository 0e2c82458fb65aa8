#include "sensa/sobol.hpp"

#include <algorithm>
#include <cmath>

#include "sensa/log.hpp"
#include "sensa/parallel.hpp"
#include "sensa/rng.hpp"

namespace sensa {

namespace {

/// Outputs of the valid tuples, gathered once. ab[k][i] is AB_k for tuple i.
struct Tuples {
  std::vector<double> a, b;
  std::vector<std::vector<double>> ab;
  std::size_t size() const { return a.size(); }
};

Tuples gather(const DesignMatrix& design, const OutputMatrix& out, std::size_t column) {
  const auto& layout = design.layout_as<SobolLayout>();
  check_aligned(design, out, column);
  const std::size_t n = layout.baseN;
  const std::size_t k = design.dims();
  require(design.rows() == n * (k + 2), ErrorKind::Structural,
          "Sobol' design row count does not match baseN * (K + 2)");
  const auto col = static_cast<Eigen::Index>(column);
  Tuples t;
  t.ab.assign(k, {});
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = out.is_valid(i) && out.is_valid(n + i);
    for (std::size_t c = 0; c < k && ok; ++c) ok = out.is_valid((c + 2) * n + i);
    if (!ok) {
      ++dropped;
      continue;
    }
    t.a.push_back(out.values(static_cast<Eigen::Index>(i), col));
    t.b.push_back(out.values(static_cast<Eigen::Index>(n + i), col));
    for (std::size_t c = 0; c < k; ++c) {
      t.ab[c].push_back(out.values(static_cast<Eigen::Index>((c + 2) * n + i), col));
    }
  }
  if (dropped > 0) {
    log_warning("Sobol': dropped " + std::to_string(dropped) + " of " + std::to_string(n) +
                " row tuples containing masked rows");
  }
  require(!t.a.empty(), ErrorKind::NoData, "Sobol': no valid row tuples");
  return t;
}

struct Moments {
  double f0 = 0.0;
  double v = 0.0;
};

/// Mean and (n-1) variance over the union of A and B for the chosen tuples.
Moments moments(const Tuples& t, std::span<const std::size_t> idx) {
  double sum = 0.0;
  for (auto i : idx) sum += t.a[i] + t.b[i];
  const double m = 2.0 * static_cast<double>(idx.size());
  Moments mo;
  mo.f0 = sum / m;
  double ss = 0.0;
  for (auto i : idx) {
    ss += (t.a[i] - mo.f0) * (t.a[i] - mo.f0) + (t.b[i] - mo.f0) * (t.b[i] - mo.f0);
  }
  mo.v = m > 1.0 ? ss / (m - 1.0) : 0.0;
  return mo;
}

double first_order(const Tuples& t, std::span<const std::size_t> idx, std::size_t k,
                   const Moments& mo, FirstOrderEstimator est) {
  const auto& ab = t.ab[k];
  double acc = 0.0;
  for (auto i : idx) {
    switch (est) {
      case FirstOrderEstimator::Saltelli2010: acc += t.b[i] * (ab[i] - t.a[i]); break;
      case FirstOrderEstimator::Jansen1999: acc += (t.b[i] - ab[i]) * (t.b[i] - ab[i]); break;
      case FirstOrderEstimator::Sobol1993: acc += t.b[i] * ab[i]; break;
    }
  }
  const double m = acc / static_cast<double>(idx.size());
  switch (est) {
    case FirstOrderEstimator::Saltelli2010: return m / mo.v;
    case FirstOrderEstimator::Jansen1999: return (mo.v - 0.5 * m) / mo.v;
    case FirstOrderEstimator::Sobol1993: return (m - mo.f0 * mo.f0) / mo.v;
  }
  return 0.0;
}

double total_order(const Tuples& t, std::span<const std::size_t> idx, std::size_t k,
                   const Moments& mo, TotalEstimator est) {
  const auto& ab = t.ab[k];
  double acc = 0.0;
  for (auto i : idx) {
    switch (est) {
      case TotalEstimator::Jansen1999: acc += (t.a[i] - ab[i]) * (t.a[i] - ab[i]); break;
      case TotalEstimator::Sobol2007: acc += t.a[i] * (t.a[i] - ab[i]); break;
      case TotalEstimator::Homma1996: acc += t.a[i] * ab[i]; break;
    }
  }
  const double m = acc / static_cast<double>(idx.size());
  switch (est) {
    case TotalEstimator::Jansen1999: return m / (2.0 * mo.v);
    case TotalEstimator::Sobol2007: return m / mo.v;
    case TotalEstimator::Homma1996: return (mo.v - m + mo.f0 * mo.f0) / mo.v;
  }
  return 0.0;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

/// Runs `reps` bootstrap replicates of `stat`, which fills `width` values
/// per replicate. Row r of the result belongs to replicate r.
template <typename Stat>
std::vector<std::vector<double>> bootstrap(std::size_t n, std::size_t reps, std::uint64_t seed,
                                           std::size_t jobs, std::size_t width, Stat&& stat) {
  std::vector<std::vector<double>> draws(reps, std::vector<double>(width));
  parallel_for(reps, jobs, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    stat(std::span<const std::size_t>(idx), draws[r]);
  });
  return draws;
}

std::vector<double> column_of(const std::vector<std::vector<double>>& draws, std::size_t j) {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& d : draws) {
    if (std::isfinite(d[j])) out.push_back(d[j]);
  }
  return out;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), ErrorKind::NoData, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SobolIndices sobol_indices(const DesignMatrix& design, const OutputMatrix& out, std::size_t column,
                           const SobolOptions& opts) {
  const Tuples t = gather(design, out, column);
  const std::size_t k = design.dims();
  const auto all = iota_indices(t.size());
  const Moments mo = moments(t, all);
  require(mo.v > 0.0, ErrorKind::Degenerate, "Sobol': output variance is zero");

  SobolIndices r;
  r.vY = mo.v;
  r.tuplesUsed = t.size();
  r.s1.resize(k);
  r.t.resize(k);
  r.interaction.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.s1[c] = first_order(t, all, c, mo, opts.firstOrder);
    r.t[c] = total_order(t, all, c, mo, opts.total);
    r.interaction[c] = r.t[c] - r.s1[c] > opts.interactionThreshold;
  }

  if (opts.bootReps > 0) {
    const auto draws =
        bootstrap(t.size(), opts.bootReps, opts.seed, opts.jobs, 2 * k,
                  [&](std::span<const std::size_t> idx, std::vector<double>& slot) {
                    const Moments m = moments(t, idx);
                    for (std::size_t c = 0; c < k; ++c) {
                      const bool ok = m.v > 0.0;
                      slot[c] = ok ? first_order(t, idx, c, m, opts.firstOrder) : NAN;
                      slot[k + c] = ok ? total_order(t, idx, c, m, opts.total) : NAN;
                    }
                  });
    const double lo = (1.0 - opts.ciLevel) / 2.0;
    const double hi = 1.0 - lo;
    std::vector<Interval> cs(k), ct(k);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ds = column_of(draws, c);
      const auto dt = column_of(draws, k + c);
      cs[c] = ds.empty() ? Interval{r.s1[c], r.s1[c]} : Interval{quantile(ds, lo), quantile(ds, hi)};
      ct[c] = dt.empty() ? Interval{r.t[c], r.t[c]} : Interval{quantile(dt, lo), quantile(dt, hi)};
    }
    r.ciS1 = std::move(cs);
    r.ciT = std::move(ct);
    r.bootReps = opts.bootReps;
  }
  return r;
}

std::pair<double, double> dummy_cutoffs(const DesignMatrix& design, const OutputMatrix& out,
                                        std::size_t column, const SobolOptions& opts) {
  const Tuples t = gather(design, out, column);
  const auto all = iota_indices(t.size());
  require(moments(t, all).v > 0.0, ErrorKind::Degenerate, "Sobol': output variance is zero");
  const std::size_t reps = std::max<std::size_t>(opts.bootReps, 1);
  // A separate stream keeps the cutoffs independent of the index bootstrap.
  const auto draws = bootstrap(t.size(), reps, derive_seed(opts.seed, 0xd0d0), opts.jobs, 2,
                               [&](std::span<const std::size_t> idx, std::vector<double>& slot) {
                                 const Moments m = moments(t, idx);
                                 if (m.v <= 0.0) {
                                   slot[0] = slot[1] = NAN;
                                   return;
                                 }
                                 double ab = 0.0, aa = 0.0;
                                 for (auto i : idx) {
                                   ab += t.a[i] * t.b[i];
                                   aa += t.a[i] * t.a[i];
                                 }
                                 const double n = static_cast<double>(idx.size());
                                 const double f2 = m.f0 * m.f0;
                                 slot[0] = (ab / n - f2) / m.v;
                                 slot[1] = 1.0 - (aa / n - f2) / m.v;
                               });
  const double hi = 1.0 - (1.0 - opts.ciLevel) / 2.0;
  const auto s = column_of(draws, 0);
  const auto tt = column_of(draws, 1);
  require(!s.empty() && !tt.empty(), ErrorKind::Degenerate,
          "Sobol': every bootstrap replicate had zero variance");
  return {quantile(s, hi), quantile(tt, hi)};
}

std::pair<SensitivityResult, SensitivityResult> sobol_results(const SobolIndices& idx,
                                                              std::vector<std::string> params) {
  auto s1 = make_result(Method::SobolS1, params, idx.s1, idx.ciS1);
  auto t = make_result(Method::SobolT, std::move(params), idx.t, idx.ciT);
  for (auto* r : {&s1, &t}) {
    r->scalars["v_y"] = idx.vY;
    r->scalars["tuples"] = static_cast<double>(idx.tuplesUsed);
    if (idx.bootReps > 0) r->scalars["boot_reps"] = static_cast<double>(idx.bootReps);
    if (idx.dummyS1) r->scalars["dummy_s1"] = *idx.dummyS1;
    if (idx.dummyT) r->scalars["dummy_t"] = *idx.dummyT;
  }
  std::vector<double> flag(idx.interaction.begin(), idx.interaction.end());
  t.extra["interaction"] = flag;
  return {std::move(s1), std::move(t)};
}

}  // namespace sensa
