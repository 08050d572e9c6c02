#pragma once

// Circular statistics over phase angles and phase-bin histograms: Rayleigh
// test, chi-square homogeneity between two bin histograms, and the Pearson
// correlation of per-bin values with a cosine template.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "cltms/errors.hpp"
#include "cltms/phase_engine.hpp"

namespace cltms {

struct CircularSummary {
  double mean = 0.0;  // rad; nan when R = 0
  double r = 0.0;     // mean resultant length
  double p = 1.0;     // Rayleigh
  std::size_t n = 0;
};

// Rayleigh test with Zar's approximation p = exp(sqrt(1 + 4n + 4(n^2 - Rn^2)) - (1 + 2n)),
// which stays inside (0, 1] for every n and R.
inline CircularSummary rayleigh_test(std::span<const double> angles) {
  if (angles.size() < 3) throw ParameterError("rayleigh_test: need at least 3 angles");
  double c = 0.0, s = 0.0;
  for (double a : angles) {
    if (!std::isfinite(a)) throw ParameterError("rayleigh_test: non-finite angle");
    c += std::cos(a);
    s += std::sin(a);
  }
  CircularSummary out;
  out.n = angles.size();
  const double n = static_cast<double>(angles.size());
  const double rn = std::min(n, std::hypot(c, s));
  out.r = rn / n;
  if (out.r < 1e-12) {
    out.r = 0.0;
    out.mean = std::nan("");
    out.p = 1.0;
    return out;
  }
  out.mean = std::atan2(s, c);
  const double expo = std::sqrt(1.0 + 4.0 * n + 4.0 * (n * n - rn * rn)) - (1.0 + 2.0 * n);
  out.p = std::clamp(std::exp(expo), std::numeric_limits<double>::min(), 1.0);
  return out;
}

struct Chi2Result {
  double statistic = 0.0;
  int df = 0;
  double p = 1.0;
  std::vector<std::string> pooling;  // one entry per merge, e.g. "bin 6 -> bin 5"
};

// Pearson chi-square test of homogeneity of an r x c table (no continuity
// correction). Columns with a zero total carry no information and are dropped.
inline Chi2Result chi2_homogeneity(const std::vector<std::vector<double>>& table) {
  if (table.size() < 2) throw ParameterError("chi2_homogeneity: need at least two rows");
  const std::size_t cols = table[0].size();
  for (const auto& row : table) {
    if (row.size() != cols) throw ParameterError("chi2_homogeneity: ragged table");
    for (double v : row)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("chi2_homogeneity: counts must be finite and >= 0");
    if (std::accumulate(row.begin(), row.end(), 0.0) == 0.0) throw ParameterError("chi2_homogeneity: all-zero row");
  }
  std::vector<double> col_total(cols, 0.0), row_total(table.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      col_total[j] += table[i][j];
      row_total[i] += table[i][j];
      total += table[i][j];
    }
  Chi2Result r;
  int used = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (col_total[j] == 0.0) continue;
    ++used;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const double e = row_total[i] * col_total[j] / total;
      r.statistic += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  }
  r.df = (used - 1) * static_cast<int>(table.size() - 1);
  if (r.df <= 0) {
    r.statistic = 0.0;
    r.p = 1.0;
    return r;
  }
  r.p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.df), r.statistic));
  return r;
}

using BinCounts = std::array<double, PhaseBin::kCount>;

// 2 x 8 homogeneity test between two phase-bin histograms. While some column
// has an expected count below 1 in either row, the column with the smallest
// total is merged into its smaller circular neighbour; each merge is logged.
inline Chi2Result phase_distribution_test(const BinCounts& a, const BinCounts& b) {
  struct Column {
    double a, b;
    std::string label;
  };
  std::vector<Column> columns;
  double ta = 0.0, tb = 0.0;
  for (int k = 0; k < PhaseBin::kCount; ++k) {
    columns.push_back({a[k], b[k], "bin " + std::to_string(k)});
    ta += a[k];
    tb += b[k];
  }
  if (ta == 0.0 || tb == 0.0) throw ParameterError("phase_distribution_test: all-zero histogram");
  const double total = ta + tb;
  std::vector<std::string> log;
  auto min_expected = [&](const Column& c) { return std::min(ta, tb) * (c.a + c.b) / total; };
  while (columns.size() > 2) {
    std::size_t worst = 0;
    for (std::size_t j = 1; j < columns.size(); ++j)
      if (columns[j].a + columns[j].b < columns[worst].a + columns[worst].b) worst = j;
    if (min_expected(columns[worst]) >= 1.0) break;
    const std::size_t m = columns.size();
    const std::size_t left = (worst + m - 1) % m, right = (worst + 1) % m;
    const std::size_t into =
        columns[left].a + columns[left].b <= columns[right].a + columns[right].b ? left : right;
    log.push_back(columns[worst].label + " -> " + columns[into].label);
    columns[into].a += columns[worst].a;
    columns[into].b += columns[worst].b;
    columns[into].label += "+" + columns[worst].label;
    columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  std::vector<std::vector<double>> table(2);
  for (const auto& c : columns) {
    table[0].push_back(c.a);
    table[1].push_back(c.b);
  }
  Chi2Result r = chi2_homogeneity(table);
  r.pooling = std::move(log);
  return r;
}

// 2 x 2 variant: ascending half of the cycle (bins 0-3, phase in (-pi, 0))
// against the descending half (bins 4-7).
inline Chi2Result phase_dichotomy_test(const BinCounts& a, const BinCounts& b) {
  auto halves = [](const BinCounts& h) {
    return std::vector<double>{h[0] + h[1] + h[2] + h[3], h[4] + h[5] + h[6] + h[7]};
  };
  return chi2_homogeneity({halves(a), halves(b)});
}

struct TemplateCorrelation {
  double r = std::nan("");
  double p = std::nan("");
  bool undefined = false;  // zero-variance input
};

// Pearson r between per-bin values and cos(center_k - offset), t-test p with 6 df.
inline TemplateCorrelation cosine_template_correlation(const BinCounts& values, double offset) {
  BinCounts tmpl{};
  for (int k = 0; k < PhaseBin::kCount; ++k) tmpl[k] = std::cos(PhaseBin(k).center() - offset);
  const double mv = std::accumulate(values.begin(), values.end(), 0.0) / PhaseBin::kCount;
  const double mt = std::accumulate(tmpl.begin(), tmpl.end(), 0.0) / PhaseBin::kCount;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int k = 0; k < PhaseBin::kCount; ++k) {
    sxy += (values[k] - mv) * (tmpl[k] - mt);
    sxx += (values[k] - mv) * (values[k] - mv);
    syy += (tmpl[k] - mt) * (tmpl[k] - mt);
  }
  TemplateCorrelation out;
  if (!(sxx > 1e-24 * std::max(1.0, mv * mv))) {
    out.undefined = true;
    return out;
  }
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = PhaseBin::kCount - 2;
  if (1.0 - std::abs(out.r) < 1e-15) {
    out.p = 0.0;
    return out;
  }
  const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t))));
  return out;
}

inline BinCounts bin_histogram(std::span<const PhaseBin> bins) {
  BinCounts h{};
  for (auto b : bins) h[b.index] += 1.0;
  return h;
}

}  // namespace cltms
