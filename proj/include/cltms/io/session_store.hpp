#pragma once

// On-disk session layout, one directory per session:
//   session.json       header: config text, planted truth, status, summaries,
//                      checksums of the CSV files, precomputed connectivity
//   trials.csv         one row per trial (columns below)
//   rest_baseline.csv  scalp channel and ROI sources, time-series CSV blocks
//   rest_post30.csv    ROI sources
// Directories are written under a temporary name and renamed into place.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cltms/analysis/cohort.hpp"
#include "cltms/errors.hpp"
#include "cltms/io/config.hpp"
#include "cltms/orchestrator.hpp"
#include "cltms/text.hpp"

namespace cltms::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kSessionFormat = "cltms-session/1";

inline const std::vector<std::string>& trial_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"trial",    "block",         "stim",     "target_bin", "predicted_phase_rad",
                               "oracle_phase_rad", "error_rad", "flagged", "amplitude_mv", "emg_rms_pre_uv",
                               "rejected", "t_s",           "step",     "epoch",      "action_bin",
                               "reward",   "epsilon",       "agent_updated"};
    for (int k = 0; k < PhaseBin::kCount; ++k) c.push_back("q" + std::to_string(k));
    return c;
  }();
  return cols;
}

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

inline std::string trials_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream os;
  const auto& cols = trial_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  auto d = [](double v) { return text::format_double(v); };
  for (const auto& t : trials) {
    os << t.index << ',' << to_string(t.block) << ',' << to_string(t.stim) << ',' << t.target_bin.index << ','
       << d(t.predicted_phase_rad) << ',' << d(t.oracle_phase_rad) << ',' << d(t.error_rad) << ',' << (t.flagged ? 1 : 0)
       << ',' << d(t.amplitude_mv) << ',' << d(t.emg_rms_pre_uv) << ',' << (t.rejected ? 1 : 0) << ',' << d(t.t_s) << ',';
    if (t.block == Block::train) {
      if (t.has_agent) os << t.step;
      os << ',' << t.epoch << ',' << t.target_bin.index << ',';
    } else {
      os << ",,,";
    }
    if (t.has_agent) {
      os << d(t.reward) << ',' << d(t.epsilon) << ',' << (t.agent_updated ? 1 : 0);
      for (double q : t.q) os << ',' << d(q);
    } else {
      os << ",,";
      for (int k = 0; k < PhaseBin::kCount; ++k) os << ',';
    }
    os << '\n';
  }
  return os.str();
}

inline std::vector<TrialRecord> parse_trials_csv(std::string_view body) {
  const auto lines = text::split(body, '\n');
  if (lines.empty()) throw IntegrityError("trials.csv: empty file");
  const auto& cols = trial_columns();
  {
    auto head = text::split(text::trim(lines[0]), ',');
    bool ok = head.size() == cols.size();
    for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = head[i] == cols[i];
    if (!ok) throw IntegrityError("trials.csv: unexpected header");
  }
  std::vector<TrialRecord> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto line = text::trim(lines[ln]);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    const std::string where = "trials.csv line " + std::to_string(ln + 1) + ": ";
    if (f.size() != cols.size()) throw IntegrityError(where + "expected " + std::to_string(cols.size()) + " columns");
    auto num = [&](std::size_t i) {
      auto v = text::parse_double(f[i]);
      if (!v) throw IntegrityError(where + "bad number in column " + cols[i]);
      return *v;
    };
    auto integer = [&](std::size_t i) {
      auto v = text::parse_int(f[i]);
      if (!v) throw IntegrityError(where + "bad integer in column " + cols[i]);
      return *v;
    };
    TrialRecord t;
    try {
      t.index = static_cast<int>(integer(0));
      t.block = block_from_string(std::string(f[1]));
      if (f[2] == "paired") t.stim = StimKind::paired;
      else if (f[2] == "single") t.stim = StimKind::single;
      else throw IntegrityError(where + "bad stim");
      t.target_bin = PhaseBin::checked(static_cast<int>(integer(3)));
    } catch (const ParameterError& e) {
      throw IntegrityError(where + e.what());
    }
    t.predicted_phase_rad = num(4);
    t.oracle_phase_rad = num(5);
    t.error_rad = num(6);
    t.flagged = integer(7) != 0;
    t.amplitude_mv = num(8);
    t.emg_rms_pre_uv = num(9);
    t.rejected = integer(10) != 0;
    t.t_s = num(11);
    t.has_agent = !f[15].empty();
    if (t.has_agent) {
      t.step = integer(12);
      t.reward = num(15);
      t.epsilon = num(16);
      t.agent_updated = integer(17) != 0;
      for (int k = 0; k < PhaseBin::kCount; ++k) t.q[k] = num(18 + static_cast<std::size_t>(k));
    }
    if (!f[13].empty()) t.epoch = static_cast<int>(integer(13));
    if (!(t.amplitude_mv > 0.0)) throw IntegrityError(where + "amplitude_mv must be > 0");
    if (static_cast<std::size_t>(t.index) != out.size()) throw IntegrityError(where + "trial index out of sequence");
    out.push_back(t);
  }
  return out;
}

inline std::string rest_csv(const RestSegment& seg) {
  std::vector<TimeSeries> all;
  if (!seg.scalp.samples.empty()) {
    all.push_back(seg.scalp);
    if (all.back().label.empty()) all.back().label = "C3";
  }
  for (const auto& ts : seg.rois.series) all.push_back(ts);
  std::ostringstream os;
  write_csv(os, all);
  return os.str();
}

inline RestSegment parse_rest_csv(const std::string& body, bool with_scalp) {
  std::istringstream is(body);
  std::vector<TimeSeries> all;
  try {
    all = read_csv(is);
  } catch (const ParseError& e) {
    throw IntegrityError(std::string("rest csv: ") + e.what());
  }
  RestSegment seg;
  std::size_t i = 0;
  if (with_scalp) {
    if (all.empty()) throw IntegrityError("rest csv: missing scalp channel");
    seg.scalp = all[i++];
  }
  for (; i < all.size(); ++i) seg.rois.series.push_back(all[i]);
  return seg;
}

struct WriteOptions {
  bool rest_files = true;
  std::vector<RoiPair> fc_pairs{{"SMA_L", "M1_L"}};
};

inline json session_header(const SessionEntry& e, const WriteOptions& opt) {
  const SessionLog& log = e.log;
  json h;
  h["format"] = kSessionFormat;
  h["session_id"] = e.id;
  h["subject"] = e.subject;
  h["repetition"] = e.repetition;
  h["config"] = serialize_session_config(log.config);
  h["ground_truth"] = {{"phi_opt", log.config.subject.phi_opt},
                       {"planted_bin", log.planted_bin.index},
                       {"mod_depth", log.config.subject.mod_depth},
                       {"snr_db", log.config.subject.snr_db}};
  h["status"] = {{"retained", e.status.retained}, {"reason", e.status.reason}, {"snr_db", e.status.snr_db}};
  h["baseline_avg_mv"] = log.baseline_avg_mv;
  h["baseline_snr"] = {{"peak_hz", log.baseline_snr.peak_hz},
                       {"peak_db", log.baseline_snr.peak_db},
                       {"noise_fit_db", log.baseline_snr.noise_fit_db},
                       {"snr_db", log.baseline_snr.snr_db}};
  h["reference_hz"] = log.reference_hz;
  h["learned_bin"] = log.learned_bin.index;
  h["learning_curve"] = log.curve.fraction;
  h["post_opt_first"] = log.post_opt_first;
  h["final_state"] = {{"coupling", log.final_state.coupling},
                      {"excitability_gain", log.final_state.excitability_gain},
                      {"clock_s", log.final_state.clock_s}};
  h["coupling_at_post30"] = log.coupling_at_post30;
  h["duration_s"] = log.duration_s;
  h["iti_total_s"] = log.iti_total_s;
  h["trial_count"] = log.trials.size();

  json fc = json::array();
  const FcSessionValues v = session_fc(e, opt.fc_pairs);
  for (std::size_t k = 0; k < v.pairs.size(); ++k)
    fc.push_back({{"a", v.pairs[k].a}, {"b", v.pairs[k].b}, {"baseline", v.baseline[k]}, {"post30", v.post30[k]}});
  const Band band = individual_band(log.reference_hz);
  h["fc"] = {{"band_hz", {band.low_hz, band.high_hz}}, {"pairs", fc}};
  return h;
}

// Writes the session directory `root / e.id` and returns its path.
inline fs::path write_session(const fs::path& root, const SessionEntry& e, const WriteOptions& opt = {}) {
  fs::create_directories(root);
  const fs::path final_dir = root / e.id;
  const fs::path tmp = root / (e.id + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  json header = session_header(e, opt);
  json files = json::object();
  auto put = [&](const std::string& name, const std::string& body) {
    write_file(tmp / name, body);
    files[name] = {{"bytes", body.size()}, {"fnv1a64", hex64(fnv1a(body))}};
  };
  put("trials.csv", trials_csv(e.log.trials));
  if (opt.rest_files) {
    put("rest_baseline.csv", rest_csv(e.log.rest_baseline));
    put("rest_post30.csv", rest_csv(e.log.rest_post30));
  }
  header["files"] = files;
  write_file(tmp / "session.json", header.dump(2) + "\n");

  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
  return final_dir;
}

struct LoadOptions {
  bool rest_files = true;  // load the rest CSVs when present
};

inline SessionEntry load_session(const fs::path& dir, const LoadOptions& opt = {}) {
  json h;
  try {
    h = json::parse(read_file(dir / "session.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("session.json in " + dir.string() + ": " + e.what());
  }
  try {
    if (h.at("format").get<std::string>() != kSessionFormat) throw IntegrityError("session.json: unknown format");
    SessionEntry e;
    e.id = h.at("session_id").get<std::string>();
    e.subject = h.at("subject").get<std::string>();
    e.repetition = h.at("repetition").get<int>();
    SessionLog& log = e.log;
    try {
      log.config = parse_session_config(h.at("config").get<std::string>());
    } catch (const ParseError& pe) {
      throw IntegrityError(std::string("session.json config: ") + pe.what());
    }
    log.planted_bin = PhaseBin::checked(h.at("ground_truth").at("planted_bin").get<int>());
    e.status.retained = h.at("status").at("retained").get<bool>();
    e.status.reason = h.at("status").at("reason").get<std::string>();
    e.status.snr_db = h.at("status").at("snr_db").get<double>();
    log.baseline_avg_mv = h.at("baseline_avg_mv").get<double>();
    const auto& snr = h.at("baseline_snr");
    log.baseline_snr = {snr.at("peak_hz").get<double>(), snr.at("peak_db").get<double>(),
                        snr.at("noise_fit_db").get<double>(), snr.at("snr_db").get<double>()};
    log.reference_hz = h.at("reference_hz").get<double>();
    log.learned_bin = PhaseBin::checked(h.at("learned_bin").get<int>());
    log.curve.fraction = h.at("learning_curve").get<std::vector<double>>();
    log.post_opt_first = h.at("post_opt_first").get<bool>();
    log.final_state.coupling = h.at("final_state").at("coupling").get<double>();
    log.final_state.excitability_gain = h.at("final_state").at("excitability_gain").get<double>();
    log.final_state.clock_s = h.at("final_state").at("clock_s").get<double>();
    log.coupling_at_post30 = h.at("coupling_at_post30").get<double>();
    log.duration_s = h.at("duration_s").get<double>();
    log.iti_total_s = h.at("iti_total_s").get<double>();

    const auto& files = h.at("files");
    auto checked = [&](const std::string& name) {
      const std::string body = read_file(dir / name);
      const auto& meta = files.at(name);
      if (body.size() != meta.at("bytes").get<std::size_t>() || hex64(fnv1a(body)) != meta.at("fnv1a64").get<std::string>())
        throw IntegrityError(name + " in " + dir.string() + ": checksum mismatch (file modified or truncated)");
      return body;
    };
    log.trials = parse_trials_csv(checked("trials.csv"));
    if (log.trials.size() != h.at("trial_count").get<std::size_t>())
      throw IntegrityError("trials.csv in " + dir.string() + ": row count does not match session.json");

    if (opt.rest_files && files.contains("rest_baseline.csv")) {
      log.rest_baseline = parse_rest_csv(checked("rest_baseline.csv"), true);
      log.rest_post30 = parse_rest_csv(checked("rest_post30.csv"), false);
    }
    FcSessionValues fc;
    fc.session = e.id;
    fc.condition = log.config.condition;
    for (const auto& p : h.at("fc").at("pairs")) {
      fc.pairs.push_back({p.at("a").get<std::string>(), p.at("b").get<std::string>()});
      fc.baseline.push_back(p.at("baseline").get<double>());
      fc.post30.push_back(p.at("post30").get<double>());
    }
    e.fc = fc;
    return e;
  } catch (const json::exception& ex) {
    throw IntegrityError("session.json in " + dir.string() + ": " + ex.what());
  }
}

}  // namespace cltms::io
