#pragma once

// Reference-value oracles. Each suite computes values by an independent route
// (closed forms, brute-force enumeration, simulation) next to the library's
// answer and prints both, so the numbers can be frozen into tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "cltms/analysis/circular.hpp"
#include "cltms/analysis/connectivity.hpp"
#include "cltms/analysis/linear_model.hpp"
#include "cltms/analysis/stats.hpp"
#include "cltms/phase_engine.hpp"
#include "cltms/rl_agent.hpp"
#include "cltms/text.hpp"
#include "cltms/virtual_subject.hpp"

namespace cltms::io {

class OracleReport {
 public:
  explicit OracleReport(std::ostream& os) : os_(os) {}

  // Compares a library value against an independently derived reference.
  void check(const std::string& suite, const std::string& name, double got, double reference, double tol,
             bool relative = false) {
    const double err = std::abs(got - reference);
    const double bound = relative ? tol * std::max(1.0, std::abs(reference)) : tol;
    const bool ok = (std::isnan(got) && std::isnan(reference)) || err <= bound;
    failures_ += !ok;
    os_ << suite << ' ' << name << " value=" << text::format_double(got) << " reference=" << text::format_double(reference)
        << (ok ? " ok" : " MISMATCH") << '\n';
  }

  void info(const std::string& suite, const std::string& name, double value) {
    os_ << suite << ' ' << name << " value=" << text::format_double(value) << '\n';
  }

  void require(const std::string& suite, const std::string& name, bool ok, double value) {
    failures_ += !ok;
    os_ << suite << ' ' << name << " value=" << text::format_double(value) << (ok ? " ok" : " FAIL") << '\n';
  }

  int failures() const { return failures_; }

 private:
  std::ostream& os_;
  int failures_ = 0;
};

namespace oracle {

// AR(2) on cos(w n) has the exact recursion x[n] = 2 cos(w) x[n-1] - x[n-2].
inline void ar(OracleReport& r) {
  const double fs = 1000.0;
  for (double hz : {8.0, 10.0, 12.5}) {
    const double w = kTwoPi * hz / fs;
    TimeSeries ts;
    ts.fs = fs;
    for (int n = 0; n < 500; ++n) ts.samples.push_back(std::cos(w * n + 0.3));
    const std::string tag = text::format_double(hz) + "Hz";
    const auto model = fit_ar(ts, 2, ArMethod::forward_backward);
    r.check("ar", "a1_" + tag, model.coeffs[0], 2.0 * std::cos(w), 1e-9);
    r.check("ar", "a2_" + tag, model.coeffs[1], -1.0, 1e-9);
    const auto pred = forward_predict(model, ts, 100.0);
    double worst = 0.0;
    for (std::size_t n = ts.size(); n < pred.size(); ++n)
      worst = std::max(worst, std::abs(pred.samples[n] - std::cos(w * static_cast<double>(n) + 0.3)));
    r.check("ar", "forecast100ms_maxerr_" + tag, worst, 0.0, 1e-6);
    // Levinson on biased autocorrelation is not exact on a finite window.
    const auto lev = fit_ar(ts, 2, ArMethod::levinson);
    r.info("ar", "levinson_a1_" + tag, lev.coeffs[0]);
  }
}

// Condition labels enumerated over every assignment to sessions, each refit
// by ordinary least squares on a hand-built trial-level design.
inline void permutation(OracleReport& r) {
  AmplitudeDataset data;
  Rng rng(11);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int sessions = 6;
  for (int s = 0; s < sessions; ++s) {
    const Condition c = s < 3 ? Condition::increase : Condition::decrease;
    const double shift = c == Condition::increase ? 0.08 : -0.05;
    for (int t = 0; t < 4; ++t) {
      data.add("s" + std::to_string(s), "p" + std::to_string(s), c, TimeLevel::baseline, Regime::random,
               std::pow(10.0, noise(rng)));
      data.add("s" + std::to_string(s), "p" + std::to_string(s), c, TimeLevel::post, Regime::optimal,
               std::pow(10.0, shift + noise(rng)));
    }
  }
  const ContrastSpec spec;

  auto interaction = [&](const std::vector<int>& inc) {
    const auto n = static_cast<Eigen::Index>(data.rows.size());
    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = data.rows[static_cast<std::size_t>(i)];
      const int s = std::stoi(row.session.substr(1));
      const double t = row.time == TimeLevel::post ? 1.0 : 0.0;
      const double c = inc[static_cast<std::size_t>(s)];
      X(i, 0) = 1.0;
      X(i, 1) = t;
      X(i, 2) = c;
      X(i, 3) = t * c;
      y(i) = row.log10_amp;
    }
    return ols(X, y, {"a", "b", "c", "d"}).coefficients[3].estimate;
  };
  std::vector<int> labels{1, 1, 1, 0, 0, 0};
  const double observed = std::abs(interaction(labels));
  std::sort(labels.begin(), labels.end());
  int hits = 0, total = 0;
  do {
    ++total;
    hits += std::abs(interaction(labels)) >= observed - 1e-10 * std::max(1.0, observed);
  } while (std::next_permutation(labels.begin(), labels.end()));
  const auto res = permutation_test(data, spec, 1000, 5);
  r.check("permutation", "statistic", res.statistic, observed, 1e-12, true);
  r.check("permutation", "arrangements", res.arrangements, total, 0.0);
  r.check("permutation", "p_exact", res.p, static_cast<double>(hits) / total, 0.0);
}

// Eight-arm bandit with the subject's cosine tuning. The best arm follows
// from the expected-amplitude curve; convergence is estimated by simulation.
inline void bandit(OracleReport& r) {
  SubjectParams p;
  p.phi_opt = 1.1;
  const SubjectState st = SubjectState::initial(p);
  auto argmax_arm = [&](double sign) {
    int best = 0;
    double best_v = -1e300;
    for (int a = 0; a < PhaseBin::kCount; ++a) {
      const double v = sign * expected_amplitude(st, p, StimKind::paired, PhaseBin(a).center());
      if (v > best_v) best_v = v, best = a;
    }
    return best;
  };
  const int inc_best = argmax_arm(1.0), dec_best = argmax_arm(-1.0);
  r.check("bandit", "argmax_INCREASE", inc_best, bin_of(p.phi_opt).index, 0.0);
  r.check("bandit", "argmax_DECREASE", dec_best, bin_of(p.phi_opt + kPi).index, 0.0);

  const int runs = 200, steps = 400;
  for (Condition c : {Condition::increase, Condition::decrease}) {
    const int best = c == Condition::increase ? inc_best : dec_best;
    int within = 0;
    for (int run = 0; run < runs; ++run) {
      Rng rng(derive_seed(99, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(run)}));
      AgentConfig cfg;
      AgentState s = AgentState::initial(cfg);
      RewardSpec spec{c, p.base_ppmep_mv};
      seed_values(s, cfg, compute_reward(spec, p.base_ppmep_mv));
      std::vector<double> recent(static_cast<std::size_t>(cfg.avg_window), p.base_ppmep_mv);
      std::vector<PhaseBin> actions;
      for (int k = 0; k < steps; ++k) {
        const PhaseBin a = select_action(s, cfg, rng);
        const double amp = respond(st, p, StimKind::paired, a.center(), rng).amplitude_mv;
        recent[static_cast<std::size_t>(k % cfg.avg_window)] = amp;
        update(s, cfg, a, compute_reward(spec, stats::mean(recent)));
        actions.push_back(a);
      }
      within += bin_distance(extract_optimal_phase(actions), PhaseBin(best)) <= 1;
    }
    r.require("bandit", std::string("within_one_rate_") + to_string(c), within >= 0.8 * runs,
              static_cast<double>(within) / runs);
  }
}

// For y(t) = x(t - tau) with x a tone, the coherency at the tone frequency is
// exp(i w tau), so imcoh = sin(w tau). Independent additive noise of equal
// power on both channels scales coherency by S / (S + N).
inline void imcoh(OracleReport& r) {
  const double fs = 250.0, hz = 10.0;
  const int n = static_cast<int>(fs * 60);
  for (double lag_rad : {0.0, kPi / 6.0, kPi / 2.0, -kPi / 3.0}) {
    TimeSeries x, y;
    x.fs = y.fs = fs;
    for (int i = 0; i < n; ++i) {
      const double t = i / fs;
      x.samples.push_back(std::cos(kTwoPi * hz * t));
      y.samples.push_back(std::cos(kTwoPi * hz * t - lag_rad));
    }
    const auto spec = imaginary_coherence_spectrum(x, y);
    const auto k = static_cast<std::size_t>(std::llround(hz * 2.0));
    r.check("imcoh", "tone_lag_" + text::format_double(lag_rad), spec.imcoh[k], std::sin(lag_rad), 1e-9);
  }
  // White noise on y only. With a Hann window over N samples the unit tone
  // puts (N/4)^2 into its bin and noise of variance s^2 puts s^2 * 3N/8 there,
  // so imcoh = sqrt(S / (S + N)) at a quarter-cycle lag.
  TimeSeries x, y;
  x.fs = y.fs = fs;
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const double sigma = 2.0;
  const int long_n = static_cast<int>(fs * 20000);
  for (int i = 0; i < long_n; ++i) {
    const double t = i / fs;
    x.samples.push_back(std::cos(kTwoPi * hz * t));
    y.samples.push_back(std::cos(kTwoPi * hz * t - kPi / 2.0) + sigma * g(rng));
  }
  const auto spec = imaginary_coherence_spectrum(x, y);
  const auto k = static_cast<std::size_t>(std::llround(hz * 2.0));
  const double ne = 2.0 * fs;
  const double sig = ne * ne / 16.0, nse = 3.0 * ne / 8.0 * sigma * sigma;
  r.check("imcoh", "tone_lag_pi/2_noisy", spec.imcoh[k], std::sqrt(sig / (sig + nse)), 6e-3);
}

// Zar's exact-n approximation and a Monte Carlo check of the same tail.
inline void rayleigh(OracleReport& r) {
  auto zar = [](double n, double rbar) {
    const double rn = rbar * n;
    return std::exp(std::sqrt(1.0 + 4.0 * n + 4.0 * (n * n - rn * rn)) - (1.0 + 2.0 * n));
  };
  std::vector<double> uniform8;
  for (int k = 0; k < 8; ++k) uniform8.push_back(k * kPi / 4.0);
  const auto u = rayleigh_test(uniform8);
  r.check("rayleigh", "uniform8_R", u.r, 0.0, 1e-12);
  r.check("rayleigh", "uniform8_p", u.p, 1.0, 1e-12);
  const std::vector<double> same(10, 0.7);
  const auto s = rayleigh_test(same);
  r.check("rayleigh", "identical10_R", s.r, 1.0, 1e-12);
  r.check("rayleigh", "identical10_p", s.p, zar(10, 1.0), 1e-15, true);
  r.info("rayleigh", "identical10_large_sample_exp(-nR^2)", std::exp(-10.0));

  std::vector<double> sample{0.1, 0.3, -0.2, 0.8, 1.4, -0.6, 0.05, 2.5, 0.4, -1.1, 0.9, 0.2};
  const auto obs = rayleigh_test(sample);
  r.check("rayleigh", "sample12_p_formula", obs.p, zar(12, obs.r), 1e-12, true);
  Rng rng(17);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  const int reps = 200000;
  int hits = 0;
  for (int rep = 0; rep < reps; ++rep) {
    double c = 0.0, sn = 0.0;
    for (int i = 0; i < 12; ++i) {
      const double a = ang(rng);
      c += std::cos(a);
      sn += std::sin(a);
    }
    hits += std::hypot(c, sn) / 12.0 >= obs.r;
  }
  const double mc = static_cast<double>(hits) / reps;
  r.check("rayleigh", "sample12_p_monte_carlo", obs.p, mc, 4.0 * std::sqrt(mc * (1 - mc) / reps) + 0.003);
}

// Exact signed-rank tail by enumerating all 2^n sign assignments.
inline void wilcoxon(OracleReport& r) {
  const std::vector<std::vector<double>> cases{
      {1.8, -0.4, 2.2, 0.9, 1.1, -0.2, 0.7, 1.5},
      {0.5, -1.5, 1.0, -2.0, 2.5, 3.0, -0.1, 0.3, 1.2, -0.8},
      {1.0, 1.0, -1.0, 2.0, 2.0, 3.0, -3.0, 0.5, 4.0},  // ties
  };
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& d = cases[ci];
    // Average ranks of |d|.
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
    std::vector<double> rank(d.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
      for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = (i + j) / 2.0 + 1.0;
      i = j + 1;
    }
    double w = 0.0, total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      total += rank[i];
      if (d[i] > 0) w += rank[i];
    }
    const double mu = total / 2.0, dev = std::abs(w - mu);
    const std::size_t n = d.size();
    long extreme = 0, all = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      double wm = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1u) wm += rank[i];
      ++all;
      extreme += std::abs(wm - mu) >= dev - 1e-9;
    }
    const auto res = stats::wilcoxon_signed_rank(d);
    const std::string tag = "case" + std::to_string(ci + 1);
    r.check("wilcoxon", tag + "_w_plus", res.w_plus, w, 1e-12);
    r.check("wilcoxon", tag + "_p_exact", res.p, static_cast<double>(extreme) / all, 1e-12);
  }
}

// 2x2 shortcut N (ad - bc)^2 / (r1 r2 c1 c2) and a 2x3 hand sum.
inline void chi2(OracleReport& r) {
  const double a = 10, b = 20, c = 30, d = 40, n = a + b + c + d;
  const double x2 = n * std::pow(a * d - b * c, 2) / ((a + b) * (c + d) * (a + c) * (b + d));
  const auto res = chi2_homogeneity({{a, b}, {c, d}});
  r.check("chi2", "2x2_statistic", res.statistic, x2, 1e-12, true);
  r.check("chi2", "2x2_p", res.p, std::erfc(std::sqrt(x2 / 2.0)), 1e-12, true);

  const std::vector<std::vector<double>> t{{12, 5, 9}, {4, 10, 8}};
  double tot = 0.0, stat = 0.0;
  std::vector<double> rs(2, 0.0), cs(3, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) rs[i] += t[i][j], cs[j] += t[i][j], tot += t[i][j];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      const double e = rs[i] * cs[j] / tot;
      stat += (t[i][j] - e) * (t[i][j] - e) / e;
    }
  const auto res3 = chi2_homogeneity(t);
  r.check("chi2", "2x3_statistic", res3.statistic, stat, 1e-12, true);
  // chi2 with 2 df has survival exp(-x/2).
  r.check("chi2", "2x3_p", res3.p, std::exp(-stat / 2.0), 1e-12, true);
}

// Step-down adjustment worked by hand.
inline void holm(OracleReport& r) {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.005};
  const std::vector<double> expected{0.03, 0.06, 0.06, 0.02};
  const auto adj = stats::holm(p);
  for (std::size_t i = 0; i < p.size(); ++i) r.check("holm", "p" + std::to_string(i + 1), adj[i], expected[i], 1e-15);
  const std::vector<double> big{0.5, 0.4};
  const auto adj2 = stats::holm(big);
  r.check("holm", "capped_1", adj2[0], 0.8, 1e-15);
  r.check("holm", "capped_2", adj2[1], 0.8, 1e-15);
}

// Simple regression: slope Sxy/Sxx, intercept ybar - b xbar, se^2 = s^2/Sxx.
inline void ols(OracleReport& r) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y{2.1, 3.9, 6.2, 7.8, 10.1, 12.2, 13.8, 16.1};
  const double xb = stats::mean(x), yb = stats::mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - xb) * (x[i] - xb), sxy += (x[i] - xb) * (y[i] - yb);
  const double b1 = sxy / sxx, b0 = yb - b1 * xb;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(y[i] - b0 - b1 * x[i], 2);
  const double s2 = rss / (x.size() - 2.0);
  Eigen::MatrixXd X(8, 2);
  Eigen::VectorXd Y(8);
  for (int i = 0; i < 8; ++i) X(i, 0) = 1.0, X(i, 1) = x[i], Y(i) = y[i];
  const auto fit = cltms::ols(X, Y, {"intercept", "slope"});
  r.check("ols", "intercept", fit.coefficients[0].estimate, b0, 1e-9, true);
  r.check("ols", "slope", fit.coefficients[1].estimate, b1, 1e-9, true);
  r.check("ols", "slope_se", fit.coefficients[1].se, std::sqrt(s2 / sxx), 1e-9, true);
  r.check("ols", "intercept_se", fit.coefficients[0].se, std::sqrt(s2 * (1.0 / 8.0 + xb * xb / sxx)), 1e-9, true);
  r.check("ols", "residual_variance", fit.residual_variance, s2, 1e-9, true);
}

}  // namespace oracle

inline const std::vector<std::pair<std::string, std::function<void(OracleReport&)>>>& oracle_suites() {
  static const std::vector<std::pair<std::string, std::function<void(OracleReport&)>>> suites{
      {"ar", oracle::ar},           {"permutation", oracle::permutation}, {"bandit", oracle::bandit},
      {"imcoh", oracle::imcoh},     {"rayleigh", oracle::rayleigh},       {"wilcoxon", oracle::wilcoxon},
      {"chi2", oracle::chi2},       {"holm", oracle::holm},               {"ols", oracle::ols},
  };
  return suites;
}

// Runs one suite, or every suite for "all". Returns the number of mismatches;
// an unknown name throws ParameterError.
inline int run_oracle(const std::string& suite, std::ostream& os) {
  OracleReport report(os);
  bool found = false;
  for (const auto& [name, fn] : oracle_suites())
    if (suite == "all" || suite == name) {
      fn(report);
      found = true;
    }
  if (!found) {
    std::string names;
    for (const auto& [name, fn] : oracle_suites()) names += " " + name;
    throw ParameterError("unknown oracle suite '" + suite + "' (expected all" + names + ")");
  }
  return report.failures();
}

}  // namespace cltms::io
