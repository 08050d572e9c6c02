#pragma once

// Report bundle: the cohort analysis written as CSV tables plus a
// summary.json carrying the file list and per-check pass/fail verdicts.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cltms/analysis/cohort.hpp"
#include "cltms/io/session_store.hpp"
#include "cltms/text.hpp"

namespace cltms::io {

struct CheckResult {
  std::string name;
  std::string status;  // pass | fail | n/a
  double value = std::nan("");
  std::string criterion;
};

struct ReportBundle {
  fs::path dir;
  std::vector<fs::path> files;
  std::vector<CheckResult> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (c.status == "fail") return false;
    return true;
  }
};

namespace detail {

inline std::string num(double v) { return text::format_double(v); }

inline std::string csv_field(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

inline nlohmann::json json_num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline const ModelReport* find_model(const CohortAnalysis& a, const std::string& name) {
  for (const auto& m : a.models)
    if (m.contrast == name) return &m;
  return nullptr;
}

inline const Coefficient* target_coef(const ModelReport& m) {
  if (m.skipped) return nullptr;
  for (const auto& c : m.fit.coefficients)
    if (c.name == m.target) return &c;
  return nullptr;
}

}  // namespace detail

inline std::string model_fits_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "contrast,term,is_target,estimate,se,z,p,ci_low,ci_high,n,residual_variance,perm_p,perm_exact,perm_evaluated,"
        "ks_d,ks_p,skipped,reason\n";
  using detail::num;
  for (const auto& m : a.models) {
    const std::string perm = m.permutation ? num(m.permutation->p) + "," + (m.permutation->exact ? "1" : "0") + "," +
                                                 std::to_string(m.permutation->evaluated)
                                           : "nan,0,0";
    const std::string ks = m.residual_ks ? num(m.residual_ks->d) + "," + num(m.residual_ks->p) : "nan,nan";
    if (m.skipped) {
      os << m.contrast << ",," << 0 << ",nan,nan,nan,nan,nan,nan,0,nan," << perm << ',' << ks << ",1,"
         << detail::csv_field(m.reason) << '\n';
      continue;
    }
    for (const auto& c : m.fit.coefficients)
      os << m.contrast << ',' << c.name << ',' << (c.name == m.target ? 1 : 0) << ',' << num(c.estimate) << ','
         << num(c.se) << ',' << num(c.z) << ',' << num(c.p) << ',' << num(c.ci_low) << ',' << num(c.ci_high) << ','
         << m.fit.n << ',' << num(m.fit.residual_variance) << ',' << perm << ',' << ks << ",0,\n";
  }
  return os.str();
}

inline std::string bootstrap_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "condition,contrast,n,estimate,low,high,level,resamples\n";
  for (const auto& b : a.bootstraps)
    os << to_string(b.condition) << ',' << b.contrast << ',' << b.n << ',' << detail::num(b.interval.estimate) << ','
       << detail::num(b.interval.low) << ',' << detail::num(b.interval.high) << ',' << detail::num(b.interval.level)
       << ',' << b.interval.resamples << '\n';
  return os.str();
}

inline std::string circular_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "condition,n";
  for (int k = 0; k < PhaseBin::kCount; ++k) os << ",bin" << k;
  os << ",mean_rad,resultant,rayleigh_p,template_r,template_p\n";
  for (const auto& c : a.circular) {
    os << to_string(c.condition) << ',' << c.n;
    for (double v : c.learned_hist) os << ',' << detail::num(v);
    if (c.rayleigh)
      os << ',' << detail::num(c.rayleigh->mean) << ',' << detail::num(c.rayleigh->r) << ',' << detail::num(c.rayleigh->p);
    else
      os << ",nan,nan,nan";
    os << ',' << detail::num(c.peak_template.r) << ',' << detail::num(c.peak_template.p) << '\n';
  }
  return os.str();
}

inline std::string phase_tests_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "test,statistic,df,p,pooling\n";
  auto row = [&](const char* name, const std::optional<Chi2Result>& r) {
    if (!r) return;
    std::string pooling;
    for (const auto& p : r->pooling) pooling += (pooling.empty() ? "" : "; ") + p;
    os << name << ',' << detail::num(r->statistic) << ',' << r->df << ',' << detail::num(r->p) << ','
       << detail::csv_field(pooling) << '\n';
  };
  row("chi2_8bin", a.phase_chi2);
  row("chi2_dichotomy", a.phase_dichotomy);
  if (a.curve_wilcoxon)
    os << "curve_wilcoxon," << detail::num(a.curve_wilcoxon->w_plus) << ',' << a.curve_wilcoxon->n << ','
       << detail::num(a.curve_wilcoxon->p) << ",\n";
  return os.str();
}

inline std::string learning_curves_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "condition,epoch,n,mean_fraction,sd_fraction\n";
  for (const auto& c : a.curves)
    for (std::size_t k = 0; k < c.mean.size(); ++k)
      os << to_string(c.condition) << ',' << k + 1 << ',' << c.n << ',' << detail::num(c.mean[k]) << ','
         << detail::num(c.sd[k]) << '\n';
  return os.str();
}

inline std::string fc_results_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "condition,connection,n,baseline,post30,delta,t,p_raw,p_holm,significant\n";
  for (const auto& r : a.fc)
    os << to_string(r.condition) << ',' << r.pair.name() << ',' << r.n << ',' << detail::num(r.baseline) << ','
       << detail::num(r.post30) << ',' << detail::num(r.delta) << ',' << detail::num(r.t) << ',' << detail::num(r.p_raw)
       << ',' << detail::num(r.p_corrected) << ',' << (r.significant ? 1 : 0) << '\n';
  return os.str();
}

inline std::string scorecard_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "condition,retained,excluded,within_one_bin,exact_bin,hit_rate\n";
  for (const auto& s : a.scores)
    os << to_string(s.condition) << ',' << s.sessions << ',' << s.excluded << ',' << s.within_one << ',' << s.exact << ','
       << detail::num(s.hit_rate()) << '\n';
  return os.str();
}

inline std::string variability_csv(const CohortAnalysis& a) {
  std::ostringstream os;
  os << "quantity,value\n";
  if (a.variance) {
    os << "between_mom," << detail::num(a.variance->between) << '\n'
       << "within_mom," << detail::num(a.variance->within) << '\n'
       << "between_ml," << detail::num(a.variance->ml_between) << '\n'
       << "within_ml," << detail::num(a.variance->ml_within) << '\n'
       << "lrt," << detail::num(a.variance->lrt) << '\n'
       << "lrt_p," << detail::num(a.variance->p) << '\n';
  }
  if (a.cv_increase) os << "cv_INCREASE," << detail::num(a.cv_increase->value) << '\n';
  if (a.cv_decrease) os << "cv_DECREASE," << detail::num(a.cv_decrease->value) << '\n';
  return os.str();
}

// Cohort-level checks mirroring the simulator's acceptance targets. A check
// whose inputs are missing from the cohort is reported as n/a.
inline std::vector<CheckResult> cohort_checks(const CohortAnalysis& a) {
  std::vector<CheckResult> out;
  auto add = [&](std::string name, std::optional<bool> ok, double value, std::string criterion) {
    out.push_back({std::move(name), ok ? (*ok ? "pass" : "fail") : "n/a", value, std::move(criterion)});
  };
  for (Condition c : {Condition::increase, Condition::decrease}) {
    const ScoreReport* s = nullptr;
    for (const auto& r : a.scores)
      if (r.condition == c && r.sessions > 0) s = &r;
    add(std::string("learned_bin_hit_rate_") + to_string(c), s ? std::optional<bool>(s->hit_rate() >= 0.8) : std::nullopt,
        s ? s->hit_rate() : std::nan(""), ">= 0.8 of sessions within one bin of the planted bin");
  }
  for (Condition c : {Condition::increase, Condition::decrease}) {
    const CurveReport* cr = nullptr;
    for (const auto& r : a.curves)
      if (r.condition == c && r.mean.size() >= 2) cr = &r;
    const double gain = cr ? cr->mean.back() - cr->mean.front() : std::nan("");
    add(std::string("curve_gain_") + to_string(c), cr ? std::optional<bool>(gain >= 0.3) : std::nullopt, gain,
        "last-epoch minus first-epoch learnt fraction >= 0.3");
  }
  add("curve_wilcoxon_ns", a.curve_wilcoxon ? std::optional<bool>(a.curve_wilcoxon->p > 0.05) : std::nullopt,
      a.curve_wilcoxon ? a.curve_wilcoxon->p : std::nan(""), "INCREASE vs DECREASE curves p > 0.05");
  {
    const auto* m = detail::find_model(a, "Post_optimal");
    const auto* c = m ? detail::target_coef(*m) : nullptr;
    add("post_optimal_interaction", c ? std::optional<bool>(c->p < 0.05) : std::nullopt, c ? c->p : std::nan(""),
        "time x condition Wald p < 0.05");
    const bool perm = c && m->permutation;
    add("post_optimal_permutation_agrees",
        perm ? std::optional<bool>((m->permutation->p < 0.05) == (c->p < 0.05)) : std::nullopt,
        perm ? m->permutation->p : std::nan(""), "permutation and Wald agree in significance");
  }
  {
    const auto* m = detail::find_model(a, "Post30_random_pooled");
    const auto* c = m ? detail::target_coef(*m) : nullptr;
    add("post30_random_drift", c ? std::optional<bool>(c->estimate > 0.0) : std::nullopt, c ? c->estimate : std::nan(""),
        "pooled random-phase Post30 above Baseline");
  }
  {
    const ConnectionResult* inc = nullptr;
    const ConnectionResult* dec = nullptr;
    for (const auto& r : a.fc) {
      if (r.pair.a != "SMA_L" || r.pair.b != "M1_L") continue;
      if (r.condition == Condition::increase) inc = &r;
      if (r.condition == Condition::decrease) dec = &r;
    }
    add("fc_increase_positive", inc ? std::optional<bool>(inc->significant && inc->delta > 0) : std::nullopt,
        inc ? inc->p_corrected : std::nan(""), "INCREASE SMA-M1 delta significantly positive");
    add("fc_decrease_nonpositive",
        dec ? std::optional<bool>(!(dec->significant && dec->delta > 0)) : std::nullopt,
        dec ? dec->delta : std::nan(""), "DECREASE SMA-M1 delta not significantly positive");
  }
  return out;
}

inline nlohmann::json summary_json(const CohortAnalysis& a, const std::vector<CheckResult>& checks,
                                   const std::vector<std::string>& files, std::size_t sessions) {
  nlohmann::json j;
  j["sessions"] = sessions;
  j["files"] = files;
  auto& scores = j["scorecard"] = nlohmann::json::array();
  for (const auto& s : a.scores)
    scores.push_back({{"condition", to_string(s.condition)},
                      {"retained", s.sessions},
                      {"excluded", s.excluded},
                      {"within_one_bin", s.within_one},
                      {"exact_bin", s.exact},
                      {"hit_rate", detail::json_num(s.hit_rate())}});
  auto& models = j["models"] = nlohmann::json::array();
  for (const auto& m : a.models) {
    nlohmann::json mj{{"contrast", m.contrast}, {"target", m.target}, {"skipped", m.skipped}};
    if (m.skipped) mj["reason"] = m.reason;
    if (const auto* c = detail::target_coef(m))
      mj["estimate"] = detail::json_num(c->estimate), mj["p"] = detail::json_num(c->p);
    if (m.permutation) mj["permutation_p"] = detail::json_num(m.permutation->p);
    models.push_back(mj);
  }
  if (!a.fc_note.empty()) j["fc_note"] = a.fc_note;
  if (!a.curve_wilcoxon_note.empty()) j["curve_wilcoxon_note"] = a.curve_wilcoxon_note;
  if (!a.variance_note.empty()) j["variance_note"] = a.variance_note;
  auto& cj = j["checks"] = nlohmann::json::array();
  bool ok = true;
  for (const auto& c : checks) {
    cj.push_back({{"name", c.name}, {"status", c.status}, {"value", detail::json_num(c.value)}, {"criterion", c.criterion}});
    ok = ok && c.status != "fail";
  }
  j["all_passed"] = ok;
  return j;
}

inline ReportBundle write_report(const fs::path& dir, const CohortAnalysis& a, std::size_t sessions) {
  fs::create_directories(dir);
  ReportBundle b;
  b.dir = dir;
  b.checks = cohort_checks(a);
  const std::pair<const char*, std::string> tables[] = {
      {"model_fits.csv", model_fits_csv(a)},         {"bootstrap.csv", bootstrap_csv(a)},
      {"circular_stats.csv", circular_csv(a)},       {"phase_tests.csv", phase_tests_csv(a)},
      {"learning_curves.csv", learning_curves_csv(a)}, {"fc_results.csv", fc_results_csv(a)},
      {"scorecard.csv", scorecard_csv(a)},           {"variability.csv", variability_csv(a)},
  };
  std::vector<std::string> names;
  for (const auto& [name, body] : tables) {
    write_file(dir / name, body);
    b.files.push_back(dir / name);
    names.emplace_back(name);
  }
  write_file(dir / "summary.json", summary_json(a, b.checks, names, sessions).dump(2) + "\n");
  b.files.push_back(dir / "summary.json");
  return b;
}

// Human-readable scorecard from a summary.json written by write_report.
inline std::string format_summary(const nlohmann::json& j) {
  std::ostringstream os;
  os << "sessions: " << j.value("sessions", 0) << "\n";
  for (const auto& s : j.at("scorecard"))
    os << "  " << s.at("condition").get<std::string>() << ": " << s.at("within_one_bin").get<int>() << "/"
       << s.at("retained").get<int>() << " learned within one bin (" << s.at("excluded").get<int>() << " excluded)\n";
  os << "checks:\n";
  for (const auto& c : j.at("checks")) {
    os << "  [" << c.at("status").get<std::string>() << "] " << c.at("name").get<std::string>();
    if (!c.at("value").is_null()) os << " = " << text::format_double(c.at("value").get<double>());
    os << "  (" << c.at("criterion").get<std::string>() << ")\n";
  }
  return os.str();
}

}  // namespace cltms::io
