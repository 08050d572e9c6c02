#pragma once

// Cohort-level analysis over session logs: amplitude models with permutation
// cross-checks, per-session bootstrap contrasts, learned-phase statistics,
// learning curves, connectivity change, and ground-truth scoring of the
// learned bin against the planted one.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cltms/analysis/circular.hpp"
#include "cltms/analysis/connectivity.hpp"
#include "cltms/analysis/linear_model.hpp"
#include "cltms/analysis/stats.hpp"
#include "cltms/orchestrator.hpp"

namespace cltms {

inline std::string session_id(const SessionConfig& cfg) {
  return cfg.subject.subject_id + "_" + to_string(cfg.condition) + "_" + std::to_string(cfg.seed);
}

struct SessionEntry {
  std::string id;
  std::string subject;
  int repetition = 0;
  SessionLog log;
  RetentionStatus status;
  // Connectivity values, computed from the rest segments when they are held
  // in memory, or read back from the session header otherwise.
  std::optional<FcSessionValues> fc;
};

inline SessionEntry make_entry(SessionLog log, int repetition = 0) {
  SessionEntry e;
  e.id = session_id(log.config);
  e.subject = log.config.subject.subject_id;
  e.repetition = repetition;
  e.status = retention_gate(log);
  e.log = std::move(log);
  return e;
}

inline std::optional<TimeLevel> time_level(Block b) {
  switch (b) {
    case Block::baseline: return TimeLevel::baseline;
    case Block::post_opt:
    case Block::post_rand: return TimeLevel::post;
    case Block::post30_opt:
    case Block::post30_rand: return TimeLevel::post30;
    case Block::train: break;
  }
  return std::nullopt;
}

inline Regime regime_of(Block b) {
  return (b == Block::post_opt || b == Block::post30_opt) ? Regime::optimal : Regime::random;
}

// One row per retained, non-rejected trial of the given stimulus kind.
inline AmplitudeDataset amplitude_dataset(const std::vector<SessionEntry>& entries, StimKind stim = StimKind::paired) {
  AmplitudeDataset d;
  for (const auto& e : entries) {
    if (!e.status.retained) continue;
    for (const auto& t : e.log.trials) {
      const auto level = time_level(t.block);
      if (!level || t.rejected || t.stim != stim) continue;
      d.add(e.id, e.subject, e.log.config.condition, *level, regime_of(t.block), t.amplitude_mv);
    }
  }
  return d;
}

// Mean log10 ppMEP of a block set minus the Baseline mean, per session.
inline double session_contrast(const SessionLog& log, TimeLevel time, Regime regime) {
  double sb = 0.0, sp = 0.0;
  int nb = 0, np = 0;
  for (const auto& t : log.trials) {
    if (t.rejected || t.stim != StimKind::paired) continue;
    const auto level = time_level(t.block);
    if (!level) continue;
    if (*level == TimeLevel::baseline) {
      sb += std::log10(t.amplitude_mv);
      ++nb;
    } else if (*level == time && regime_of(t.block) == regime) {
      sp += std::log10(t.amplitude_mv);
      ++np;
    }
  }
  if (nb == 0 || np == 0) return std::nan("");
  return sp / np - sb / nb;
}

inline bool learned_within_one(const SessionLog& log) { return bin_distance(log.learned_bin, log.planted_bin) <= 1; }

inline FcSessionValues session_fc(const SessionEntry& e, const std::vector<RoiPair>& pairs) {
  if (e.fc) return *e.fc;
  return fc_session_values(e.id, e.log.config.condition, e.log.rest_baseline.rois, e.log.rest_post30.rois, pairs,
                           individual_band(e.log.reference_hz));
}

// ---------------------------------------------------------------------------

struct ModelReport {
  std::string contrast;
  std::string target;
  bool skipped = false;
  std::string reason;
  ModelFit fit;
  std::optional<PermutationResult> permutation;
  std::optional<stats::KsResult> residual_ks;
};

struct BootstrapReport {
  Condition condition = Condition::increase;
  std::string contrast;
  std::size_t n = 0;
  stats::BootstrapInterval interval;
};

struct CircularReport {
  Condition condition = Condition::increase;
  std::size_t n = 0;
  BinCounts learned_hist{};
  std::optional<CircularSummary> rayleigh;
  TemplateCorrelation peak_template;  // histogram vs cos(center)
};

struct CurveReport {
  Condition condition = Condition::increase;
  std::size_t n = 0;
  std::vector<double> mean, sd;
};

struct ScoreReport {
  Condition condition = Condition::increase;
  std::size_t sessions = 0;  // retained
  std::size_t excluded = 0;
  std::size_t within_one = 0;
  std::size_t exact = 0;
  double hit_rate() const { return sessions ? static_cast<double>(within_one) / sessions : std::nan(""); }
};

struct CohortAnalysis {
  std::vector<ModelReport> models;
  std::vector<BootstrapReport> bootstraps;
  std::vector<CircularReport> circular;
  std::optional<Chi2Result> phase_chi2, phase_dichotomy;
  std::vector<CurveReport> curves;
  std::optional<stats::WilcoxonResult> curve_wilcoxon;
  std::string curve_wilcoxon_note;
  std::vector<ConnectionResult> fc;
  std::string fc_note;
  std::vector<ScoreReport> scores;
  std::optional<VarianceComponents> variance;
  std::optional<stats::CvResult> cv_increase, cv_decrease;
  std::string variance_note;
};

struct AnalysisOptions {
  int n_perm = 1000;
  std::uint64_t seed = 1;
  int bootstrap_resamples = 10000;
  double bootstrap_level = 0.94;
  std::vector<RoiPair> pairs{{"SMA_L", "M1_L"}};
  std::vector<Condition> fc_conditions{Condition::increase, Condition::decrease};
  bool permutation = true;
};

namespace detail {

inline std::vector<const SessionEntry*> retained(const std::vector<SessionEntry>& entries) {
  std::vector<const SessionEntry*> out;
  for (const auto& e : entries)
    if (e.status.retained) out.push_back(&e);
  return out;
}

inline bool has_condition(const std::vector<const SessionEntry*>& es, Condition c) {
  return std::any_of(es.begin(), es.end(), [&](const SessionEntry* e) { return e->log.config.condition == c; });
}

inline ModelReport run_model(const AmplitudeDataset& data, std::string name, const ContrastSpec& spec,
                             const AnalysisOptions& opt, bool permute) {
  ModelReport r;
  r.contrast = std::move(name);
  r.target = spec.target;
  try {
    r.fit = fit_amplitude_model(data, spec);
    if (r.fit.residuals.size() >= 5 && !r.fit.degenerate) r.residual_ks = stats::ks_normality(r.fit.residuals);
    if (permute) r.permutation = permutation_test(data, spec, opt.n_perm, derive_seed(opt.seed, {0x9E, r.fit.n}));
  } catch (const ParameterError& e) {
    r.skipped = true;
    r.reason = e.what();
  } catch (const DesignError& e) {
    r.skipped = true;
    r.reason = e.what();
  }
  return r;
}

}  // namespace detail

inline CohortAnalysis analyze_cohort(const std::vector<SessionEntry>& entries, const AnalysisOptions& opt = {}) {
  const auto kept = detail::retained(entries);
  if (kept.empty()) throw ParameterError("analyze_cohort: cohort has no retained sessions");
  CohortAnalysis out;
  const Condition all_conditions[] = {Condition::increase, Condition::decrease, Condition::random};

  for (Condition c : all_conditions) {
    ScoreReport s;
    s.condition = c;
    for (const auto& e : entries) {
      if (e.log.config.condition != c) continue;
      if (!e.status.retained) {
        ++s.excluded;
        continue;
      }
      ++s.sessions;
      s.within_one += learned_within_one(e.log);
      s.exact += e.log.learned_bin == e.log.planted_bin;
    }
    if (s.sessions + s.excluded > 0) out.scores.push_back(s);
  }

  // Amplitude models.
  const AmplitudeDataset data = amplitude_dataset(entries);
  const bool two_conditions = detail::has_condition(kept, Condition::increase) && detail::has_condition(kept, Condition::decrease);
  for (TimeLevel t : {TimeLevel::post, TimeLevel::post30})
    for (Regime g : {Regime::optimal, Regime::random}) {
      ContrastSpec spec;
      spec.regime = g;
      spec.times = {TimeLevel::baseline, t};
      spec.target = detail::time_term(t) + ":" + detail::condition_term(Condition::increase);
      const std::string name = std::string(to_string(t)) + "_" + to_string(g);
      if (!two_conditions) {
        ModelReport r;
        r.contrast = name;
        r.target = spec.target;
        r.skipped = true;
        r.reason = "needs retained INCREASE and DECREASE sessions";
        out.models.push_back(r);
        continue;
      }
      out.models.push_back(detail::run_model(data, name, spec, opt, opt.permutation));
    }
  {
    // Condition-independent drift: random-phase Post30 vs Baseline with a
    // condition main effect for every condition present.
    ContrastSpec spec;
    spec.regime = Regime::random;
    spec.times = {TimeLevel::baseline, TimeLevel::post30};
    spec.conditions.clear();
    for (Condition c : {Condition::decrease, Condition::increase, Condition::random})
      if (detail::has_condition(kept, c)) spec.conditions.push_back(c);
    spec.interaction = false;
    spec.target = "time[Post30]";
    ModelReport r;
    r.contrast = "Post30_random_pooled";
    r.target = spec.target;
    try {
      if (spec.conditions.size() >= 2) {
        r.fit = fit_amplitude_model(data, spec);
      } else {
        std::vector<double> y, x;
        for (const auto& row : data.rows)
          if (row.time == TimeLevel::baseline || (row.time == TimeLevel::post30 && row.regime == Regime::random)) {
            y.push_back(row.log10_amp);
            x.push_back(row.time == TimeLevel::post30 ? 1.0 : 0.0);
          }
        Eigen::MatrixXd X(static_cast<Eigen::Index>(y.size()), 2);
        X.col(0).setOnes();
        X.col(1) = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
        r.fit = ols(X, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
                    {"intercept", "time[Post30]"});
      }
      if (r.fit.residuals.size() >= 5 && !r.fit.degenerate) r.residual_ks = stats::ks_normality(r.fit.residuals);
    } catch (const std::exception& e) {
      r.skipped = true;
      r.reason = e.what();
    }
    out.models.push_back(r);
  }

  // Bootstrap of the per-session Post - Baseline contrast (optimal phase).
  for (Condition c : all_conditions)
    for (TimeLevel t : {TimeLevel::post, TimeLevel::post30}) {
      std::vector<double> deltas;
      for (const auto* e : kept)
        if (e->log.config.condition == c) {
          const double d = session_contrast(e->log, t, Regime::optimal);
          if (std::isfinite(d)) deltas.push_back(d);
        }
      if (deltas.empty()) continue;
      BootstrapReport b;
      b.condition = c;
      b.contrast = std::string(to_string(t)) + "_optimal_minus_Baseline";
      b.n = deltas.size();
      b.interval = stats::bootstrap_mean(deltas, derive_seed(opt.seed, {0xB5, static_cast<std::uint64_t>(c),
                                                                         static_cast<std::uint64_t>(t)}),
                                         opt.bootstrap_resamples, opt.bootstrap_level);
      out.bootstraps.push_back(b);
    }

  // Learned phases.
  std::map<Condition, BinCounts> hists;
  for (Condition c : all_conditions) {
    CircularReport cr;
    cr.condition = c;
    std::vector<double> angles;
    for (const auto* e : kept)
      if (e->log.config.condition == c) {
        cr.learned_hist[e->log.learned_bin.index] += 1.0;
        angles.push_back(e->log.learned_bin.center());
      }
    cr.n = angles.size();
    if (cr.n == 0) continue;
    if (cr.n >= 3) cr.rayleigh = rayleigh_test(angles);
    cr.peak_template = cosine_template_correlation(cr.learned_hist, 0.0);
    hists[c] = cr.learned_hist;
    out.circular.push_back(cr);
  }
  if (hists.count(Condition::increase) && hists.count(Condition::decrease)) {
    out.phase_chi2 = phase_distribution_test(hists[Condition::increase], hists[Condition::decrease]);
    out.phase_dichotomy = phase_dichotomy_test(hists[Condition::increase], hists[Condition::decrease]);
  }

  // Learning curves.
  std::map<std::pair<std::string, int>, std::map<Condition, double>> paired;
  for (Condition c : all_conditions) {
    CurveReport cr;
    cr.condition = c;
    std::vector<std::vector<double>> per_epoch;
    for (const auto* e : kept) {
      if (e->log.config.condition != c) continue;
      const auto& f = e->log.curve.fraction;
      if (per_epoch.empty()) per_epoch.resize(f.size());
      if (f.size() != per_epoch.size()) continue;
      for (std::size_t k = 0; k < f.size(); ++k) per_epoch[k].push_back(f[k]);
      double m = 0.0;
      for (double v : f) m += v;
      paired[{e->subject, e->repetition}][c] = m / static_cast<double>(f.size());
      ++cr.n;
    }
    if (cr.n == 0) continue;
    for (const auto& v : per_epoch) {
      cr.mean.push_back(stats::mean(v));
      cr.sd.push_back(v.size() > 1 ? stats::sd(v) : 0.0);
    }
    out.curves.push_back(cr);
  }
  {
    std::vector<double> a, b;
    for (const auto& [key, m] : paired)
      if (m.count(Condition::increase) && m.count(Condition::decrease)) {
        a.push_back(m.at(Condition::increase));
        b.push_back(m.at(Condition::decrease));
      }
    try {
      out.curve_wilcoxon = stats::wilcoxon_signed_rank(a, b);
    } catch (const ParameterError& e) {
      out.curve_wilcoxon_note = e.what();
    }
  }

  // Functional connectivity.
  try {
    std::vector<FcSessionValues> values;
    for (const auto* e : kept)
      if (std::find(opt.fc_conditions.begin(), opt.fc_conditions.end(), e->log.config.condition) != opt.fc_conditions.end())
        values.push_back(session_fc(*e, opt.pairs));
    out.fc = fc_change_analysis(values, opt.fc_conditions, opt.pairs);
    if (out.fc.empty()) out.fc_note = "fewer than two sessions per condition";
  } catch (const ParameterError& e) {
    out.fc_note = e.what();
  }

  // Between-session variability of the INCREASE/DECREASE Post contrast.
  {
    std::map<std::string, std::vector<double>> inc, dec, pooled;
    for (const auto* e : kept) {
      const Condition c = e->log.config.condition;
      if (c == Condition::random) continue;
      const double d = session_contrast(e->log, TimeLevel::post, Regime::optimal);
      if (!std::isfinite(d)) continue;
      (c == Condition::increase ? inc : dec)[e->subject].push_back(d);
      pooled[e->subject + "_" + to_string(c)].push_back(d);
    }
    auto values = [](const std::map<std::string, std::vector<double>>& m) {
      std::vector<std::vector<double>> out;
      for (const auto& [k, v] : m) out.push_back(v);
      return out;
    };
    try {
      out.variance = variance_components(values(pooled));
    } catch (const ParameterError& e) {
      out.variance_note = e.what();
    }
    try {
      out.cv_increase = stats::coefficient_of_variation(values(inc));
    } catch (const ParameterError&) {
    }
    try {
      out.cv_decrease = stats::coefficient_of_variation(values(dec));
    } catch (const ParameterError&) {
    }
  }
  return out;
}

}  // namespace cltms
