#pragma once

// Line-oriented configuration text: "[section]" headers and "key = value"
// lines, '#' comments. Every SessionConfig field has exactly one key; the
// serializer writes every key so parse(serialize(c)) reproduces c.
//
//   [session]  condition, seed, block sizes, ITI, rest, gap, retry policy
//   [subject]  SubjectParams
//   [agent]    AgentConfig
//   [predictor] PredictorConfig
//
// condition and seed are required; everything else defaults.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cltms/errors.hpp"
#include "cltms/orchestrator.hpp"
#include "cltms/text.hpp"

namespace cltms::io {

// Raw parsed text: section -> key -> (value, line).
struct ConfigText {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;

  const Entry* find(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

inline ConfigText parse_config_text(std::string_view text) {
  ConfigText out;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", lineno);
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError("empty section name", lineno);
      out.sections[section];
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lineno);
      const std::string key(text::trim(line.substr(0, eq)));
      if (key.empty()) throw ParseError("empty key", lineno);
      if (section.empty()) throw ParseError("key outside of a section", lineno, key);
      auto [it, fresh] = out.sections[section].emplace(key, ConfigText::Entry{std::string(text::trim(line.substr(eq + 1))), lineno});
      if (!fresh) throw ParseError("duplicate key " + section + "." + key, lineno, section + "." + key);
    }
    if (end == text.size()) break;
  }
  return out;
}

namespace detail {

template <class T>
struct Field {
  std::string section, key;
  std::function<std::string(const T&)> get;
  std::function<void(T&, std::string_view)> set;  // throws std::invalid_argument on bad value
};

inline double to_double(std::string_view v) {
  auto d = text::parse_double(v);
  if (!d) throw std::invalid_argument("expected a number");
  return *d;
}
inline std::int64_t to_int(std::string_view v) {
  auto d = text::parse_int(v);
  if (!d) throw std::invalid_argument("expected an integer");
  return *d;
}
inline std::uint64_t to_uint(std::string_view v) {
  auto d = text::parse_uint(v);
  if (!d) throw std::invalid_argument("expected a non-negative integer");
  return *d;
}
inline bool to_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

}  // namespace detail

inline const std::vector<detail::Field<SessionConfig>>& session_fields() {
  using C = SessionConfig;
  using detail::Field;
  static const std::vector<Field<C>> fields = [] {
    std::vector<Field<C>> f;
    auto dbl = [&](const char* sec, const char* key, auto getter) {
      f.push_back({sec, key, [getter](const C& c) { return text::format_double(*getter(c)); },
                   [getter](C& c, std::string_view v) { *getter(c) = detail::to_double(v); }});
    };
    auto integer = [&](const char* sec, const char* key, auto getter) {
      f.push_back({sec, key, [getter](const C& c) { return std::to_string(*getter(c)); },
                   [getter](C& c, std::string_view v) {
                     const auto x = detail::to_int(v);
                     if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
                       throw std::invalid_argument("integer out of range");
                     *getter(c) = static_cast<int>(x);
                   }});
    };
    auto boolean = [&](const char* sec, const char* key, auto getter) {
      f.push_back({sec, key, [getter](const C& c) { return std::string(*getter(c) ? "true" : "false"); },
                   [getter](C& c, std::string_view v) { *getter(c) = detail::to_bool(v); }});
    };

    f.push_back({"session", "condition", [](const C& c) { return std::string(to_string(c.condition)); },
                 [](C& c, std::string_view v) {
                   try {
                     c.condition = condition_from_string(std::string(v));
                   } catch (const ParameterError&) {
                     throw std::invalid_argument("expected INCREASE, DECREASE or RANDOM");
                   }
                 }});
    f.push_back({"session", "seed", [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, std::string_view v) { c.seed = detail::to_uint(v); }});
    integer("session", "n_baseline_pp", [](auto& c) { return &c.n_baseline_pp; });
    integer("session", "n_baseline_sp", [](auto& c) { return &c.n_baseline_sp; });
    integer("session", "epochs", [](auto& c) { return &c.epochs; });
    integer("session", "steps_per_epoch", [](auto& c) { return &c.steps_per_epoch; });
    integer("session", "n_eval_pp", [](auto& c) { return &c.n_eval_pp; });
    integer("session", "n_eval_sp", [](auto& c) { return &c.n_eval_sp; });
    dbl("session", "iti_low_s", [](auto& c) { return &c.iti_low_s; });
    dbl("session", "iti_high_s", [](auto& c) { return &c.iti_high_s; });
    dbl("session", "isi_ms", [](auto& c) { return &c.isi_ms; });
    dbl("session", "rest_eeg_s", [](auto& c) { return &c.rest_eeg_s; });
    dbl("session", "post_gap_min", [](auto& c) { return &c.post_gap_min; });
    dbl("session", "fs", [](auto& c) { return &c.fs; });
    dbl("session", "retry_chunk_ms", [](auto& c) { return &c.retry_chunk_ms; });
    dbl("session", "retry_limit_ms", [](auto& c) { return &c.retry_limit_ms; });
    f.push_back({"session", "roi_layout",
                 [](const C& c) { return std::string(c.roi_layout == RoiLayout::pair ? "pair" : "sensorimotor8"); },
                 [](C& c, std::string_view v) {
                   if (v == "pair") c.roi_layout = RoiLayout::pair;
                   else if (v == "sensorimotor8") c.roi_layout = RoiLayout::sensorimotor8;
                   else throw std::invalid_argument("expected pair or sensorimotor8");
                 }});

    f.push_back({"subject", "subject_id", [](const C& c) { return c.subject.subject_id; },
                 [](C& c, std::string_view v) {
                   if (v.empty() || v.find_first_of(" \t/\\,") != std::string_view::npos)
                     throw std::invalid_argument("subject_id must be non-empty without spaces, commas or slashes");
                   c.subject.subject_id = std::string(v);
                 }});
    dbl("subject", "phi_opt", [](auto& c) { return &c.subject.phi_opt; });
    dbl("subject", "mod_depth", [](auto& c) { return &c.subject.mod_depth; });
    dbl("subject", "base_ppmep_mv", [](auto& c) { return &c.subject.base_ppmep_mv; });
    dbl("subject", "base_spmep_mv", [](auto& c) { return &c.subject.base_spmep_mv; });
    dbl("subject", "lognorm_sigma", [](auto& c) { return &c.subject.lognorm_sigma; });
    dbl("subject", "snr_db", [](auto& c) { return &c.subject.snr_db; });
    dbl("subject", "preinnervation_prob", [](auto& c) { return &c.subject.preinnervation_prob; });
    dbl("subject", "hebb_rate", [](auto& c) { return &c.subject.hebb_rate; });
    dbl("subject", "ltp_rate", [](auto& c) { return &c.subject.ltp_rate; });
    dbl("subject", "coupling0", [](auto& c) { return &c.subject.coupling0; });
    dbl("subject", "fc_lag_rad", [](auto& c) { return &c.subject.fc_lag_rad; });
    dbl("subject", "roi_noise_scale", [](auto& c) { return &c.subject.roi_noise_scale; });
    dbl("subject", "mu_hz", [](auto& c) { return &c.subject.mu_hz; });
    dbl("subject", "pink_noise_uv", [](auto& c) { return &c.subject.pink_noise_uv; });
    dbl("subject", "amp_mod_depth", [](auto& c) { return &c.subject.amp_mod_depth; });
    dbl("subject", "amp_mod_hz", [](auto& c) { return &c.subject.amp_mod_hz; });

    f.push_back({"agent", "mode", [](const C& c) { return std::string(c.agent.mode == AgentMode::tabular ? "tabular" : "mlp"); },
                 [](C& c, std::string_view v) {
                   if (v == "tabular") c.agent.mode = AgentMode::tabular;
                   else if (v == "mlp") c.agent.mode = AgentMode::mlp;
                   else throw std::invalid_argument("expected tabular or mlp");
                 }});
    dbl("agent", "alpha", [](auto& c) { return &c.agent.alpha; });
    dbl("agent", "epsilon0", [](auto& c) { return &c.agent.epsilon0; });
    dbl("agent", "epsilon_min", [](auto& c) { return &c.agent.epsilon_min; });
    dbl("agent", "epsilon_decay", [](auto& c) { return &c.agent.epsilon_decay; });
    integer("agent", "avg_window", [](auto& c) { return &c.agent.avg_window; });
    dbl("agent", "gamma", [](auto& c) { return &c.agent.gamma; });
    boolean("agent", "neutral_init", [](auto& c) { return &c.agent.neutral_init; });
    integer("agent", "hidden_units", [](auto& c) { return &c.agent.hidden_units; });
    integer("agent", "replay_capacity", [](auto& c) { return &c.agent.replay_capacity; });
    integer("agent", "batch_size", [](auto& c) { return &c.agent.batch_size; });
    integer("agent", "target_sync_steps", [](auto& c) { return &c.agent.target_sync_steps; });
    f.push_back({"agent", "init_seed", [](const C& c) { return std::to_string(c.agent.init_seed); },
                 [](C& c, std::string_view v) { c.agent.init_seed = detail::to_uint(v); }});

    dbl("predictor", "window_ms", [](auto& c) { return &c.predictor.window_ms; });
    dbl("predictor", "band_low_hz", [](auto& c) { return &c.predictor.band.low_hz; });
    dbl("predictor", "band_high_hz", [](auto& c) { return &c.predictor.band.high_hz; });
    integer("predictor", "ar_order", [](auto& c) { return &c.predictor.ar_order; });
    dbl("predictor", "horizon_ms", [](auto& c) { return &c.predictor.horizon_ms; });
    dbl("predictor", "edge_trim_ms", [](auto& c) { return &c.predictor.edge_trim_ms; });
    f.push_back({"predictor", "ar_method",
                 [](const C& c) { return std::string(c.predictor.method == ArMethod::levinson ? "levinson" : "forward_backward"); },
                 [](C& c, std::string_view v) {
                   if (v == "levinson") c.predictor.method = ArMethod::levinson;
                   else if (v == "forward_backward") c.predictor.method = ArMethod::forward_backward;
                   else throw std::invalid_argument("expected levinson or forward_backward");
                 }});
    f.push_back({"predictor", "phase_method",
                 [](const C& c) {
                   return std::string(c.predictor.phase_method == PhaseMethod::ar_forecast ? "ar_forecast" : "sinusoid_fit");
                 },
                 [](C& c, std::string_view v) {
                   if (v == "ar_forecast") c.predictor.phase_method = PhaseMethod::ar_forecast;
                   else if (v == "sinusoid_fit") c.predictor.phase_method = PhaseMethod::sinusoid_fit;
                   else throw std::invalid_argument("expected sinusoid_fit or ar_forecast");
                 }});
    dbl("predictor", "reference_hz", [](auto& c) { return &c.predictor.reference_hz; });
    return f;
  }();
  return fields;
}

// Applies every key present in text onto cfg. Unknown sections and keys are
// errors unless listed in `ignore_sections`.
inline void apply_config_text(const ConfigText& text, SessionConfig& cfg, const std::set<std::string>& ignore_sections = {}) {
  const auto& fields = session_fields();
  for (const auto& [section, keys] : text.sections) {
    if (ignore_sections.count(section)) continue;
    for (const auto& [key, entry] : keys) {
      auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section && f.key == key; });
      if (it == fields.end()) throw ParseError("unknown field " + section + "." + key, entry.line, section + "." + key);
      try {
        it->set(cfg, entry.value);
      } catch (const std::invalid_argument& e) {
        throw ParseError("bad value for " + section + "." + key + " ('" + entry.value + "'): " + e.what(), entry.line,
                         section + "." + key);
      }
    }
  }
}

inline SessionConfig parse_session_config(const ConfigText& parsed) {
  for (const char* key : {"condition", "seed"})
    if (!parsed.find("session", key))
      throw ParseError(std::string("missing required field session.") + key, 0, std::string("session.") + key);
  SessionConfig cfg;
  apply_config_text(parsed, cfg);
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ParseError(std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

inline SessionConfig parse_session_config(std::string_view text) { return parse_session_config(parse_config_text(text)); }

inline std::string serialize_session_config(const SessionConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : session_fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace cltms::io
