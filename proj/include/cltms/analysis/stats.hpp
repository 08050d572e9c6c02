#pragma once

// Univariate tests and summaries used by the offline analysis: one-sample t,
// Holm adjustment, Wilcoxon signed-rank, KS normality with estimated
// parameters, coefficient of variation and a percentile bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cltms/errors.hpp"
#include "cltms/random.hpp"

namespace cltms::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ParameterError("mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased (n - 1) variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw ParameterError("variance: need at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// Type-7 quantile of an already sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ParameterError("quantile: empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct TTestResult {
  double mean = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero spread: t undefined
};

// Two-sided one-sample t-test of mean(x) == mu0.
inline TTestResult one_sample_t(std::span<const double> x, double mu0 = 0.0) {
  if (x.size() < 2) throw ParameterError("one_sample_t: need at least two values");
  TTestResult r;
  r.mean = mean(x);
  r.df = static_cast<double>(x.size() - 1);
  r.se = std::sqrt(variance(x) / static_cast<double>(x.size()));
  if (!(r.se > 0.0)) {
    r.degenerate = true;
    r.t = std::nan("");
    r.p = r.mean == mu0 ? 1.0 : 0.0;
    return r;
  }
  r.t = (r.mean - mu0) / r.se;
  boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

// Holm step-down adjustment; results are in the input order.
inline std::vector<double> holm(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
    running = std::max(running, v);
    adj[order[k]] = running;
  }
  return adj;
}

struct WilcoxonResult {
  double w_plus = 0.0;  // sum of ranks of positive differences
  int n = 0;            // non-zero differences
  double z = 0.0;       // normal approximation only
  double p = 1.0;
  bool exact = false;
  bool degenerate = false;  // every difference is zero
};

// Two-sided signed-rank test on paired differences. Zero differences are
// dropped, tied magnitudes get average ranks. Exact null distribution for
// n <= 25 (ranks doubled so ties stay integral), normal approximation with tie
// and continuity correction above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> d) {
  std::vector<double> nz;
  for (double v : d) {
    if (!std::isfinite(v)) throw ParameterError("wilcoxon_signed_rank: non-finite difference");
    if (v != 0.0) nz.push_back(v);
  }
  WilcoxonResult r;
  r.n = static_cast<int>(nz.size());
  if (nz.empty()) {
    r.degenerate = true;
    return r;
  }
  if (r.n < 5) throw ParameterError("wilcoxon_signed_rank: need at least 5 non-zero differences");

  std::vector<std::size_t> idx(nz.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });
  std::vector<int> rank2(nz.size());  // twice the average rank
  double tie_term = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && std::abs(nz[idx[j + 1]]) == std::abs(nz[idx[i]])) ++j;
    const int r2 = static_cast<int>(i + j + 2);  // (i+1) + (j+1)
    for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  int w2 = 0;
  for (std::size_t i = 0; i < nz.size(); ++i)
    if (nz[i] > 0) w2 += rank2[i];
  r.w_plus = w2 / 2.0;

  const double n = r.n;
  if (r.n <= 25) {
    r.exact = true;
    const int total = std::accumulate(rank2.begin(), rank2.end(), 0);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int v : rank2) {
      for (int s = reach; s >= 0; --s)
        if (count[s] != 0.0) count[s + v] += count[s];
      reach += v;
    }
    const double all = std::ldexp(1.0, r.n);
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) lower += count[s];
      if (s >= w2) upper += count[s];
    }
    r.p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    return r;
  }
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  const double diff = r.w_plus - mu;
  const double cc = diff > 0 ? 0.5 : (diff < 0 ? -0.5 : 0.0);
  r.z = (diff - cc) / std::sqrt(var);
  r.p = std::min(1.0, normal_two_sided_p(r.z));
  return r;
}

inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("wilcoxon_signed_rank: paired samples differ in length");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return wilcoxon_signed_rank(d);
}

struct KsResult {
  double d = 0.0;  // sup |F_n - F|
  double p = 1.0;
  bool degenerate = false;
};

namespace detail {

// Stephens' modified statistic for the normal case with estimated mean and
// variance; its null law is close to independent of n.
inline double lilliefors_modified(double d, double n) { return d * (std::sqrt(n) - 0.01 + 0.85 / std::sqrt(n)); }

inline double ks_d_fitted_normal(std::vector<double> x) {
  const double m = mean(x);
  const double s = sd(x);
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf((x[i] - m) / s);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Simulated null of the modified statistic, generated once with a fixed seed.
inline const std::vector<double>& lilliefors_null() {
  static const std::vector<double> table = [] {
    constexpr int kReps = 20000;
    constexpr int kN = 100;
    Rng rng(derive_seed(0x1111EF0, {kN}));
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> out(kReps), x(kN);
    for (auto& v : out) {
      for (auto& xi : x) xi = g(rng);
      v = lilliefors_modified(ks_d_fitted_normal(x), kN);
    }
    std::sort(out.begin(), out.end());
    return out;
  }();
  return table;
}

// Dallal and Wilkinson's tail approximation, accurate for p < 0.1.
inline double dallal_wilkinson_p(double d, double n) {
  if (n > 100.0) {
    d *= std::pow(n / 100.0, 0.49);
    n = 100.0;
  }
  const double a = n + 2.78019;
  return std::exp(-7.01256 * d * d * a + 2.99587 * d * std::sqrt(a) - 0.122119 + 0.974598 / std::sqrt(n) + 1.67997 / n);
}

}  // namespace detail

// One-sample Kolmogorov-Smirnov test against a normal with the sample mean
// and SD (the Lilliefors setting, so p is calibrated under estimation).
inline KsResult ks_normality(std::span<const double> x) {
  if (x.size() < 5) throw ParameterError("ks_normality: need at least 5 values");
  KsResult r;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*lo == *hi) {
    r.degenerate = true;
    r.d = std::nan("");
    r.p = std::nan("");
    return r;
  }
  const double n = static_cast<double>(x.size());
  r.d = detail::ks_d_fitted_normal(std::vector<double>(x.begin(), x.end()));
  const double dstar = detail::lilliefors_modified(r.d, n);
  const auto& null = detail::lilliefors_null();
  const double tail = static_cast<double>(null.end() - std::lower_bound(null.begin(), null.end(), dstar)) /
                      static_cast<double>(null.size());
  r.p = tail < 0.1 ? std::min(0.1, detail::dallal_wilkinson_p(r.d, n)) : tail;
  return r;
}

struct CvResult {
  double value = std::nan("");
  double pooled_sd = 0.0;
  double grand_mean = 0.0;
  bool undefined = false;  // grand mean is zero
};

// Pooled within-subject SD of the session deltas over |grand mean|. Subjects
// with a single session carry no within-subject information and are skipped.
inline CvResult coefficient_of_variation(const std::vector<std::vector<double>>& deltas_by_subject) {
  double ss = 0.0, sum = 0.0;
  std::size_t df = 0, count = 0;
  for (const auto& g : deltas_by_subject) {
    if (g.size() < 2) continue;
    const double m = mean(g);
    for (double v : g) ss += (v - m) * (v - m);
    df += g.size() - 1;
    sum += std::accumulate(g.begin(), g.end(), 0.0);
    count += g.size();
  }
  if (df == 0) throw ParameterError("coefficient_of_variation: need a subject with at least two sessions");
  CvResult r;
  r.pooled_sd = std::sqrt(ss / static_cast<double>(df));
  r.grand_mean = sum / static_cast<double>(count);
  if (r.grand_mean == 0.0) {
    r.undefined = true;
    return r;
  }
  r.value = r.pooled_sd / std::abs(r.grand_mean);
  return r;
}

struct BootstrapInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  int resamples = 0;
  double level = 0.94;
};

// Percentile interval for the mean of x.
inline BootstrapInterval bootstrap_mean(std::span<const double> x, std::uint64_t seed, int resamples = 10000,
                                        double level = 0.94) {
  if (x.empty()) throw ParameterError("bootstrap_mean: empty sample");
  if (resamples < 1 || !(level > 0.0 && level < 1.0)) throw ParameterError("bootstrap_mean: bad resamples or level");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[pick(rng)];
    m = s / static_cast<double>(x.size());
  }
  std::sort(means.begin(), means.end());
  BootstrapInterval b;
  b.estimate = mean(x);
  b.low = quantile_sorted(means, (1.0 - level) / 2.0);
  b.high = quantile_sorted(means, (1.0 + level) / 2.0);
  b.resamples = resamples;
  b.level = level;
  return b;
}

}  // namespace cltms::stats
