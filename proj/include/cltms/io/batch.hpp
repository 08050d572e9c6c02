#pragma once

// Cohort manifests and the batch runner. A manifest is config text with a
// [cohort] section plus optional [session]/[subject]/[agent]/[predictor]
// overrides applied to every session:
//
//   [cohort]
//   subjects = 25
//   sessions_per_condition = 1
//   conditions = INCREASE,DECREASE,RANDOM
//   master_seed = 2024
//   phi_kappa = 2          # session phi_opt ~ von Mises(subject center, kappa)
//   snr_db_sd = 0          # per-session SNR spread around subject.snr_db
//   rest_files = true
//
// Seeds: session seed = derive_seed(master, {subject, condition, repetition});
// the subject's phase center comes from derive_seed(master, {subject, 0xC0}).

#include <atomic>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cltms/analysis/cohort.hpp"
#include "cltms/io/config.hpp"
#include "cltms/io/session_store.hpp"

namespace cltms::io {

struct RunManifest {
  int subjects = 25;
  int sessions_per_condition = 1;
  std::vector<Condition> conditions{Condition::increase, Condition::decrease, Condition::random};
  std::uint64_t master_seed = 2024;
  double phi_kappa = 2.0;
  double snr_db_sd = 0.0;
  bool rest_files = true;
  std::string subject_prefix = "S";
  ConfigText overrides;  // non-cohort sections, applied to each session
};

inline std::string conditions_text(const std::vector<Condition>& cs) {
  std::string s;
  for (auto c : cs) s += (s.empty() ? "" : ",") + std::string(to_string(c));
  return s;
}

inline RunManifest parse_manifest(std::string_view text) {
  ConfigText parsed = parse_config_text(text);
  RunManifest m;
  auto it = parsed.sections.find("cohort");
  if (it != parsed.sections.end()) {
    for (const auto& [key, entry] : it->second) {
      auto fail = [&](const std::string& why) {
        throw ParseError("bad value for cohort." + key + " ('" + entry.value + "'): " + why, entry.line, "cohort." + key);
      };
      try {
        if (key == "subjects") {
          const auto v = detail::to_int(entry.value);
          if (v < 0 || v > 100000) fail("expected 0..100000");
          m.subjects = static_cast<int>(v);
        } else if (key == "sessions_per_condition") {
          const auto v = detail::to_int(entry.value);
          if (v < 1 || v > 1000) fail("expected 1..1000");
          m.sessions_per_condition = static_cast<int>(v);
        } else if (key == "conditions") {
          m.conditions.clear();
          for (auto part : text::split(entry.value, ',')) {
            try {
              m.conditions.push_back(condition_from_string(std::string(text::trim(part))));
            } catch (const ParameterError&) {
              fail("expected a comma-separated list of INCREASE, DECREASE, RANDOM");
            }
          }
        } else if (key == "master_seed") {
          m.master_seed = detail::to_uint(entry.value);
        } else if (key == "phi_kappa") {
          m.phi_kappa = detail::to_double(entry.value);
          if (!(m.phi_kappa >= 0.0)) fail("expected >= 0");
        } else if (key == "snr_db_sd") {
          m.snr_db_sd = detail::to_double(entry.value);
          if (!(m.snr_db_sd >= 0.0)) fail("expected >= 0");
        } else if (key == "rest_files") {
          m.rest_files = detail::to_bool(entry.value);
        } else if (key == "subject_prefix") {
          if (entry.value.empty() || entry.value.find_first_of(" \t/\\,_") != std::string::npos)
            fail("expected a non-empty name without spaces, commas, slashes or underscores");
          m.subject_prefix = entry.value;
        } else {
          throw ParseError("unknown field cohort." + key, entry.line, "cohort." + key);
        }
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    }
    parsed.sections.erase(it);
  }
  m.overrides = std::move(parsed);
  // Surface override errors now rather than per session.
  SessionConfig probe;
  apply_config_text(m.overrides, probe);
  for (const char* key : {"condition", "seed", "subject_id", "phi_opt"})
    for (const char* sec : {"session", "subject"})
      if (const auto* e = m.overrides.find(sec, key))
        throw ParseError(std::string("cohort manifests set ") + key + " per session; remove " + sec + "." + key, e->line,
                         std::string(sec) + "." + key);
  return m;
}

struct SessionJob {
  int subject = 0;
  Condition condition = Condition::increase;
  int repetition = 0;
  SessionConfig config;
};

inline std::uint64_t session_seed(std::uint64_t master, int subject, Condition c, int repetition) {
  return derive_seed(master, {static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(c),
                              static_cast<std::uint64_t>(repetition)});
}

inline std::string subject_name(const RunManifest& m, int subject) {
  std::ostringstream os;
  os << m.subject_prefix;
  if (subject + 1 < 10) os << '0';
  os << subject + 1;
  return os.str();
}

// Expands the manifest into sessions, in subject, condition, repetition order.
inline std::vector<SessionJob> expand_manifest(const RunManifest& m) {
  std::vector<SessionJob> jobs;
  for (int s = 0; s < m.subjects; ++s) {
    Rng center_rng(derive_seed(m.master_seed, {static_cast<std::uint64_t>(s), 0xC0}));
    const double center = std::uniform_real_distribution<double>(-kPi, kPi)(center_rng);
    for (Condition c : m.conditions)
      for (int r = 0; r < m.sessions_per_condition; ++r) {
        SessionJob job;
        job.subject = s;
        job.condition = c;
        job.repetition = r;
        SessionConfig cfg;
        apply_config_text(m.overrides, cfg);
        cfg.condition = c;
        cfg.seed = session_seed(m.master_seed, s, c, r);
        cfg.subject.subject_id = subject_name(m, s);
        SubjectProfile profile;
        profile.base = cfg.subject;
        profile.phi_center = center;
        profile.phi_kappa = m.phi_kappa;
        profile.snr_db_sd = m.snr_db_sd;
        Rng draw(derive_seed(cfg.seed, {0xF1}));
        cfg.subject = profile.draw_session(draw);
        job.config = cfg;
        jobs.push_back(job);
      }
  }
  return jobs;
}

struct IndexRow {
  std::string session_id;
  std::string subject;
  Condition condition = Condition::increase;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string status;  // retained | excluded | failed
  std::string reason;
  double snr_db = std::nan("");
  int learned_bin = -1;
  int planted_bin = -1;
};

inline constexpr const char* kIndexFile = "cohort_index.csv";

inline std::string index_csv(const std::vector<IndexRow>& rows) {
  std::ostringstream os;
  os << "session_id,subject,condition,repetition,seed,status,reason,snr_db,learned_bin,planted_bin\n";
  for (const auto& r : rows) {
    std::string reason = r.reason;
    for (auto& ch : reason)
      if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    os << r.session_id << ',' << r.subject << ',' << to_string(r.condition) << ',' << r.repetition << ',' << r.seed << ','
       << r.status << ',' << reason << ',' << text::format_double(r.snr_db) << ',' << r.learned_bin << ','
       << r.planted_bin << '\n';
  }
  return os.str();
}

inline std::vector<IndexRow> parse_index_csv(std::string_view body) {
  const auto lines = text::split(body, '\n');
  if (lines.empty() || text::trim(lines[0]) !=
                           "session_id,subject,condition,repetition,seed,status,reason,snr_db,learned_bin,planted_bin")
    throw IntegrityError(std::string(kIndexFile) + ": unexpected header");
  std::vector<IndexRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = text::trim(lines[i]);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 10) throw IntegrityError(std::string(kIndexFile) + ": bad row " + std::to_string(i + 1));
    IndexRow r;
    r.session_id = std::string(f[0]);
    r.subject = std::string(f[1]);
    try {
      r.condition = condition_from_string(std::string(f[2]));
    } catch (const ParameterError& e) {
      throw IntegrityError(std::string(kIndexFile) + ": " + e.what());
    }
    auto rep = text::parse_int(f[3]);
    auto seed = text::parse_uint(f[4]);
    auto snr = text::parse_double(f[7]);
    auto lb = text::parse_int(f[8]);
    auto pb = text::parse_int(f[9]);
    if (!rep || !seed || !snr || !lb || !pb) throw IntegrityError(std::string(kIndexFile) + ": bad row " + std::to_string(i + 1));
    r.repetition = static_cast<int>(*rep);
    r.seed = *seed;
    r.status = std::string(f[5]);
    r.reason = std::string(f[6]);
    r.snr_db = *snr;
    r.learned_bin = static_cast<int>(*lb);
    r.planted_bin = static_cast<int>(*pb);
    rows.push_back(r);
  }
  return rows;
}

struct BatchResult {
  std::vector<IndexRow> index;
  std::size_t failures = 0;
};

// Runs every session of the manifest with `parallel` workers and writes the
// session directories plus cohort_index.csv. Output does not depend on the
// worker count: each session owns its seed and directory, and the index is
// written in manifest order after all workers finish.
inline BatchResult run_batch(const RunManifest& m, const fs::path& out_dir, int parallel = 1) {
  if (parallel < 1) throw ParameterError("run_batch: parallel must be >= 1");
  fs::create_directories(out_dir);
  const auto jobs = expand_manifest(m);
  std::vector<IndexRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  WriteOptions wopt;
  wopt.rest_files = m.rest_files;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      IndexRow& row = rows[i];
      row.session_id = session_id(job.config);
      row.subject = job.config.subject.subject_id;
      row.condition = job.condition;
      row.repetition = job.repetition;
      row.seed = job.config.seed;
      try {
        SessionEntry e = make_entry(run_session(job.config), job.repetition);
        write_session(out_dir, e, wopt);
        row.status = e.status.retained ? "retained" : "excluded";
        row.reason = e.status.reason;
        row.snr_db = e.status.snr_db;
        row.learned_bin = e.log.learned_bin.index;
        row.planted_bin = e.log.planted_bin.index;
      } catch (const std::exception& ex) {
        row.status = "failed";
        row.reason = ex.what();
      }
    }
  };
  const int n = std::min<int>(parallel, static_cast<int>(std::max<std::size_t>(1, jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BatchResult res;
  res.index = rows;
  for (const auto& r : rows) res.failures += r.status == "failed";
  write_file(out_dir / kIndexFile, index_csv(rows));
  return res;
}

// Loads the sessions listed in a cohort index (failed rows are skipped).
inline std::vector<SessionEntry> load_cohort(const fs::path& dir, const LoadOptions& opt = {}) {
  const auto rows = parse_index_csv(read_file(dir / kIndexFile));
  std::vector<SessionEntry> out;
  for (const auto& r : rows) {
    if (r.status == "failed") continue;
    out.push_back(load_session(dir / r.session_id, opt));
  }
  return out;
}

}  // namespace cltms::io
