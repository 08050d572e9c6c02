#pragma once

// Fixed-effects amplitude model on log10 MEP amplitudes: OLS with dummy-coded
// time, condition and their interaction, Wald z per coefficient, a
// label-permutation cross-check, and a one-way variance decomposition with a
// likelihood-ratio test for a random subject intercept.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "cltms/analysis/stats.hpp"
#include "cltms/errors.hpp"
#include "cltms/random.hpp"
#include "cltms/rl_agent.hpp"

namespace cltms {

inline constexpr double kZ975 = 1.959963984540054;

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct ModelFit {
  std::vector<Coefficient> coefficients;
  double residual_variance = 0.0;
  std::size_t n = 0;
  std::size_t df_resid = 0;
  bool degenerate = false;  // zero residual variance: z and p undefined
  std::vector<double> residuals;

  const Coefficient& coef(const std::string& name) const {
    for (const auto& c : coefficients)
      if (c.name == name) return c;
    throw ParameterError("ModelFit: no coefficient " + name);
  }
};

// Ordinary least squares via column-pivoted QR. Aliased columns are reported
// by name (a column is aliased when it adds no rank to the columns before it).
inline ModelFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto k = static_cast<std::size_t>(X.cols());
  if (names.size() != k) throw ParameterError("ols: one name per column required");
  if (static_cast<std::size_t>(y.size()) != n) throw ParameterError("ols: response length mismatch");
  if (n <= k) throw DesignError("ols: need more observations than coefficients");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (static_cast<std::size_t>(qr.rank()) < k) {
    std::string aliased;
    Eigen::Index r = 0;
    for (std::size_t j = 0; j < k; ++j) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> part(X.leftCols(static_cast<Eigen::Index>(j + 1)));
      part.setThreshold(qr.threshold());
      if (part.rank() == r) aliased += (aliased.empty() ? "" : ", ") + names[j];
      r = part.rank();
    }
    throw DesignError("rank-deficient design; aliased columns: " + aliased);
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - X * beta;

  ModelFit fit;
  fit.n = n;
  fit.df_resid = n - k;
  const double rss = resid.squaredNorm();
  fit.residual_variance = rss / static_cast<double>(fit.df_resid);
  fit.degenerate = !(fit.residual_variance > 1e-28 * std::max(1.0, y.squaredNorm() / static_cast<double>(n)));
  if (fit.degenerate) fit.residual_variance = 0.0;
  fit.residuals.assign(resid.data(), resid.data() + resid.size());

  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  for (std::size_t j = 0; j < k; ++j) {
    Coefficient c;
    c.name = names[j];
    c.estimate = beta(static_cast<Eigen::Index>(j));
    c.se = std::sqrt(fit.residual_variance * xtx_inv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    if (fit.degenerate) {
      c.z = std::nan("");
      c.p = std::nan("");
    } else {
      c.z = c.estimate / c.se;
      c.p = stats::normal_two_sided_p(c.z);
    }
    c.ci_low = c.estimate - kZ975 * c.se;
    c.ci_high = c.estimate + kZ975 * c.se;
    fit.coefficients.push_back(c);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Amplitude dataset

enum class TimeLevel { baseline, post, post30 };
enum class Regime { optimal, random };

inline const char* to_string(TimeLevel t) {
  switch (t) {
    case TimeLevel::baseline: return "Baseline";
    case TimeLevel::post: return "Post";
    case TimeLevel::post30: return "Post30";
  }
  return "?";
}

inline const char* to_string(Regime r) { return r == Regime::optimal ? "optimal" : "random"; }

struct AmplitudeRow {
  std::string session;
  std::string subject;
  Condition condition = Condition::increase;
  TimeLevel time = TimeLevel::baseline;
  Regime regime = Regime::random;  // Baseline trials use pseudo-random bins
  double log10_amp = 0.0;
};

struct AmplitudeDataset {
  std::vector<AmplitudeRow> rows;

  void add(std::string session, std::string subject, Condition c, TimeLevel t, Regime r, double amplitude_mv) {
    if (!(amplitude_mv > 0.0)) throw ParameterError("AmplitudeDataset: amplitudes must be > 0 mV");
    rows.push_back({std::move(session), std::move(subject), c, t, r, std::log10(amplitude_mv)});
  }
};

// Which rows enter the model and how factors are coded. The first entry of
// each level list is the reference level. Baseline rows are always included
// when Baseline is listed; Post levels are restricted to the chosen regime.
struct ContrastSpec {
  Regime regime = Regime::optimal;
  std::vector<TimeLevel> times{TimeLevel::baseline, TimeLevel::post};
  std::vector<Condition> conditions{Condition::decrease, Condition::increase};
  bool interaction = true;
  std::string target = "time[Post]:condition[INCREASE]";
};

namespace detail {

inline std::string time_term(TimeLevel t) { return std::string("time[") + to_string(t) + "]"; }
inline std::string condition_term(Condition c) { return std::string("condition[") + to_string(c) + "]"; }

template <class T>
int level_index(const std::vector<T>& levels, T v) {
  auto it = std::find(levels.begin(), levels.end(), v);
  return it == levels.end() ? -1 : static_cast<int>(it - levels.begin());
}

inline bool selected(const AmplitudeRow& r, const ContrastSpec& spec) {
  if (level_index(spec.times, r.time) < 0 || level_index(spec.conditions, r.condition) < 0) return false;
  return r.time == TimeLevel::baseline || r.regime == spec.regime;
}

inline std::vector<std::string> term_names(const ContrastSpec& spec) {
  std::vector<std::string> names{"intercept"};
  for (std::size_t t = 1; t < spec.times.size(); ++t) names.push_back(time_term(spec.times[t]));
  for (std::size_t c = 1; c < spec.conditions.size(); ++c) names.push_back(condition_term(spec.conditions[c]));
  if (spec.interaction)
    for (std::size_t t = 1; t < spec.times.size(); ++t)
      for (std::size_t c = 1; c < spec.conditions.size(); ++c)
        names.push_back(time_term(spec.times[t]) + ":" + condition_term(spec.conditions[c]));
  return names;
}

// Design row for time level index ti and condition level index ci.
inline void design_row(const ContrastSpec& spec, int ti, int ci, double* out) {
  const int nt = static_cast<int>(spec.times.size()) - 1;
  const int nc = static_cast<int>(spec.conditions.size()) - 1;
  int j = 0;
  out[j++] = 1.0;
  for (int t = 1; t <= nt; ++t) out[j++] = ti == t ? 1.0 : 0.0;
  for (int c = 1; c <= nc; ++c) out[j++] = ci == c ? 1.0 : 0.0;
  if (spec.interaction)
    for (int t = 1; t <= nt; ++t)
      for (int c = 1; c <= nc; ++c) out[j++] = (ti == t && ci == c) ? 1.0 : 0.0;
}

inline void check_levels(const ContrastSpec& spec, const std::vector<const AmplitudeRow*>& rows) {
  if (spec.times.size() < 2 || spec.conditions.size() < 2)
    throw ParameterError("fit_amplitude_model: need at least two time levels and two conditions");
  for (auto t : spec.times)
    if (std::none_of(rows.begin(), rows.end(), [&](const AmplitudeRow* r) { return r->time == t; }))
      throw ParameterError(std::string("fit_amplitude_model: no rows for time level ") + to_string(t));
  for (auto c : spec.conditions)
    if (std::none_of(rows.begin(), rows.end(), [&](const AmplitudeRow* r) { return r->condition == c; }))
      throw ParameterError(std::string("fit_amplitude_model: no rows for condition ") + to_string(c));
}

}  // namespace detail

inline ModelFit fit_amplitude_model(const AmplitudeDataset& data, const ContrastSpec& spec = {}) {
  std::vector<const AmplitudeRow*> rows;
  for (const auto& r : data.rows)
    if (detail::selected(r, spec)) rows.push_back(&r);
  detail::check_levels(spec, rows);
  const auto names = detail::term_names(spec);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  std::vector<double> buf(names.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail::design_row(spec, detail::level_index(spec.times, rows[i]->time),
                       detail::level_index(spec.conditions, rows[i]->condition), buf.data());
    for (std::size_t j = 0; j < names.size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
    y(static_cast<Eigen::Index>(i)) = rows[i]->log10_amp;
  }
  return ols(X, y, names);
}

struct PermutationResult {
  double p = 1.0;
  double statistic = 0.0;  // |estimate| of the target coefficient
  double arrangements = 0.0;
  int evaluated = 0;
  bool exact = false;
};

namespace detail {

// Per-session sufficient statistics: counts and sums by time level.
struct SessionCells {
  std::vector<double> count, sum;
};

inline double multinomial_count(const std::vector<int>& labels) {
  std::map<int, int> freq;
  for (int l : labels) ++freq[l];
  double lg = std::lgamma(static_cast<double>(labels.size()) + 1.0);
  for (auto [l, f] : freq) lg -= std::lgamma(static_cast<double>(f) + 1.0);
  return std::round(std::exp(lg));
}

}  // namespace detail

// Shuffles condition labels across sessions and refits; the statistic is the
// absolute target estimate. All distinct arrangements are enumerated when
// there are at most n_perm of them (p = share with statistic >= observed);
// otherwise p = (1 + hits) / (1 + n_perm).
inline PermutationResult permutation_test(const AmplitudeDataset& data, const ContrastSpec& spec, int n_perm,
                                          std::uint64_t seed) {
  if (n_perm < 1000) throw ParameterError("permutation_test: n_perm must be >= 1000");
  if (spec.target.find("condition[") == std::string::npos)
    throw ParameterError("permutation_test: target must involve the condition factor");

  std::vector<const AmplitudeRow*> rows;
  for (const auto& r : data.rows)
    if (detail::selected(r, spec)) rows.push_back(&r);
  detail::check_levels(spec, rows);
  const auto names = detail::term_names(spec);
  const auto target_it = std::find(names.begin(), names.end(), spec.target);
  if (target_it == names.end()) throw ParameterError("permutation_test: no coefficient " + spec.target);
  const auto target = static_cast<Eigen::Index>(target_it - names.begin());

  std::map<std::string, std::size_t> session_index;
  std::vector<detail::SessionCells> cells;
  std::vector<int> labels;
  const std::size_t nt = spec.times.size();
  for (const auto* r : rows) {
    auto [it, fresh] = session_index.emplace(r->session, cells.size());
    if (fresh) {
      cells.push_back({std::vector<double>(nt, 0.0), std::vector<double>(nt, 0.0)});
      labels.push_back(detail::level_index(spec.conditions, r->condition));
    } else if (labels[it->second] != detail::level_index(spec.conditions, r->condition)) {
      throw ParameterError("permutation_test: session " + r->session + " has more than one condition");
    }
    const int ti = detail::level_index(spec.times, r->time);
    cells[it->second].count[ti] += 1.0;
    cells[it->second].sum[ti] += r->log10_amp;
  }

  const auto k = static_cast<Eigen::Index>(names.size());
  std::vector<double> row(names.size());
  auto statistic = [&](const std::vector<int>& lab) {
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
    for (std::size_t s = 0; s < cells.size(); ++s)
      for (std::size_t t = 0; t < nt; ++t) {
        if (cells[s].count[t] == 0.0) continue;
        detail::design_row(spec, static_cast<int>(t), lab[s], row.data());
        const Eigen::Map<const Eigen::VectorXd> x(row.data(), k);
        xtx.noalias() += cells[s].count[t] * (x * x.transpose());
        xty.noalias() += cells[s].sum[t] * x;
      }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    if (!lu.isInvertible()) return std::nan("");  // arrangement leaves an empty cell
    return std::abs(lu.solve(xty)(target));
  };

  PermutationResult res;
  res.statistic = statistic(labels);
  res.arrangements = detail::multinomial_count(labels);
  const double tol = 1e-10 * std::max(1.0, res.statistic);
  if (res.arrangements <= n_perm) {
    res.exact = true;
    std::vector<int> perm = labels;
    std::sort(perm.begin(), perm.end());
    int hits = 0;
    do {
      const double s = statistic(perm);
      ++res.evaluated;
      if (std::isnan(s) || s >= res.statistic - tol) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    res.p = static_cast<double>(hits) / res.evaluated;
    return res;
  }
  Rng rng(seed);
  std::vector<int> perm = labels;
  int hits = 0;
  for (int i = 0; i < n_perm; ++i) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const double s = statistic(perm);
    if (std::isnan(s) || s >= res.statistic - tol) ++hits;
  }
  res.evaluated = n_perm;
  res.p = (1.0 + hits) / (1.0 + n_perm);
  return res;
}

struct VarianceComponents {
  double between = 0.0;  // method-of-moments subject variance (floored at 0)
  double within = 0.0;
  double ml_between = 0.0;  // maximum-likelihood estimates under the random-intercept model
  double ml_within = 0.0;
  double lrt = 0.0;  // 2 * (loglik with intercept - loglik without)
  double p = 1.0;    // 50:50 mixture of chi2(0) and chi2(1)
};

// One-way random-intercept decomposition of grouped observations.
inline VarianceComponents variance_components(const std::vector<std::vector<double>>& groups) {
  std::vector<const std::vector<double>*> g;
  for (const auto& v : groups)
    if (!v.empty()) g.push_back(&v);
  const std::size_t k = g.size();
  if (k < 2) throw ParameterError("variance_components: need at least two subjects");
  if (std::none_of(g.begin(), g.end(), [](const auto* v) { return v->size() >= 2; }))
    throw ParameterError("variance_components: need a subject with at least two observations");

  double big_n = 0.0, grand = 0.0, sum_n2 = 0.0, ssw = 0.0;
  std::vector<double> n(k), ybar(k), ssw_i(k);
  for (std::size_t i = 0; i < k; ++i) {
    n[i] = static_cast<double>(g[i]->size());
    ybar[i] = stats::mean(*g[i]);
    for (double v : *g[i]) ssw_i[i] += (v - ybar[i]) * (v - ybar[i]);
    ssw += ssw_i[i];
    big_n += n[i];
    sum_n2 += n[i] * n[i];
    grand += n[i] * ybar[i];
  }
  grand /= big_n;
  double ssb = 0.0;
  for (std::size_t i = 0; i < k; ++i) ssb += n[i] * (ybar[i] - grand) * (ybar[i] - grand);
  const double msb = ssb / static_cast<double>(k - 1);
  const double msw = ssw / (big_n - static_cast<double>(k));
  const double n0 = (big_n - sum_n2 / big_n) / static_cast<double>(k - 1);

  VarianceComponents vc;
  vc.within = msw;
  vc.between = std::max(0.0, (msb - msw) / n0);

  // Profile log-likelihood in lambda = between / within.
  auto profile = [&](double lambda, double* within_out) {
    double wsum = 0.0, wy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = n[i] / (1.0 + n[i] * lambda);
      wsum += w;
      wy += w * ybar[i];
    }
    const double mu = wy / wsum;
    double rss = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      rss += ssw_i[i] + n[i] * (ybar[i] - mu) * (ybar[i] - mu) / (1.0 + n[i] * lambda);
      logdet += std::log1p(n[i] * lambda);
    }
    const double s2 = rss / big_n;
    if (within_out) *within_out = s2;
    if (!(s2 > 0.0)) return std::numeric_limits<double>::infinity();
    return -0.5 * big_n * (std::log(2.0 * std::numbers::pi * s2) + 1.0) - 0.5 * logdet;
  };
  const double ll0 = profile(0.0, nullptr);
  double best_u = -30.0, best_ll = -std::numeric_limits<double>::infinity();
  for (double u = -30.0; u <= 10.0; u += 0.25) {
    const double ll = profile(std::exp(u), nullptr);
    if (ll > best_ll) {
      best_ll = ll;
      best_u = u;
    }
  }
  double a = best_u - 0.25, b = best_u + 0.25;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 80; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (profile(std::exp(c), nullptr) > profile(std::exp(d), nullptr)) b = d;
    else a = c;
  }
  double lambda = std::exp(0.5 * (a + b));
  double ll1 = profile(lambda, nullptr);
  if (!(ll1 > ll0)) {
    lambda = 0.0;
    ll1 = ll0;
  }
  profile(lambda, &vc.ml_within);
  vc.ml_between = lambda * vc.ml_within;
  vc.lrt = std::isfinite(ll1 - ll0) ? std::max(0.0, 2.0 * (ll1 - ll0)) : 0.0;
  vc.p = vc.lrt > 0.0 ? 0.5 * boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), vc.lrt)) : 1.0;
  return vc;
}

}  // namespace cltms
