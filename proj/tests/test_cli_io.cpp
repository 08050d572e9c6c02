#include <catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "cltms/analysis/cohort.hpp"
#include "cltms/io/batch.hpp"
#include "cltms/io/config.hpp"
#include "cltms/io/oracle.hpp"
#include "cltms/io/report.hpp"
#include "cltms/io/session_store.hpp"

using namespace cltms;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cltms_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Short sessions keep the file tests fast.
constexpr const char* kSmallSession =
    "[session]\n"
    "rest_eeg_s = 60\n";

std::string small_manifest(int subjects, const std::string& conditions, bool rest_files = false) {
  return "[cohort]\nsubjects = " + std::to_string(subjects) + "\nconditions = " + conditions +
         "\nmaster_seed = 77\nrest_files = " + (rest_files ? "true" : "false") + "\n" + kSmallSession;
}

SessionConfig small_config(Condition c, std::uint64_t seed) {
  SessionConfig cfg;
  cfg.condition = c;
  cfg.seed = seed;
  cfg.rest_eeg_s = 60.0;
  return cfg;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  return out;
}

void parse_error_at(const std::string& text, int line, const std::string& field) {
  try {
    io::parse_session_config(text);
    FAIL("expected a ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == line);
    CHECK(e.field() == field);
    CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("config round trip", "[cli_io]") {
  SessionConfig cfg;
  cfg.condition = Condition::decrease;
  cfg.seed = 123456789012345ULL;
  cfg.subject.phi_opt = -2.25;
  cfg.subject.snr_db = 6.5;
  cfg.subject.roi_noise_scale = 0.5;
  cfg.agent.alpha = 0.125;
  cfg.predictor.window_ms = 750.0;
  const std::string text = io::serialize_session_config(cfg);
  const SessionConfig back = io::parse_session_config(text);
  CHECK(back.condition == Condition::decrease);
  CHECK(back.seed == cfg.seed);
  CHECK(back.subject.phi_opt == cfg.subject.phi_opt);
  CHECK(back.subject.snr_db == cfg.subject.snr_db);
  CHECK(back.subject.roi_noise_scale == 0.5);
  CHECK(back.agent.alpha == 0.125);
  CHECK(back.predictor.window_ms == 750.0);
  CHECK(io::serialize_session_config(back) == text);
}

TEST_CASE("config parse errors carry line and field", "[cli_io]") {
  parse_error_at("[session]\ncondition = INCREASE\nseed = 1\nfoo = 2\n", 4, "session.foo");
  parse_error_at("[session]\ncondition = INCREASE\nseed = banana\n", 3, "session.seed");
  parse_error_at("[session]\ncondition = SIDEWAYS\nseed = 1\n", 2, "session.condition");
  CHECK_THROWS_AS(io::parse_session_config("[session]\ncondition = INCREASE\n"), ParseError);
  CHECK_THROWS_WITH(io::parse_session_config("[session]\ncondition = INCREASE\n"),
                    Catch::Matchers::ContainsSubstring("session.seed"));
  CHECK_THROWS_AS(io::parse_config_text("[session\nseed = 1\n"), ParseError);
  CHECK_THROWS_AS(io::parse_config_text("seed = 1\n"), ParseError);
  CHECK_THROWS_AS(io::parse_config_text("[session]\nseed 1\n"), ParseError);
  CHECK_THROWS_AS(io::parse_config_text("[session]\nseed = 1\nseed = 2\n"), ParseError);
  // Out-of-range values are reported as configuration errors.
  CHECK_THROWS_AS(io::parse_session_config("[session]\ncondition = INCREASE\nseed = 1\n[subject]\nmod_depth = 2\n"),
                  ParseError);
  // Comments and blank lines are ignored.
  const auto cfg = io::parse_session_config("# header\n\n[session]\ncondition = RANDOM  # trailing\nseed = 5\n");
  CHECK(cfg.condition == Condition::random);
  CHECK(cfg.seed == 5);
}

TEST_CASE("manifest parsing", "[cli_io]") {
  SECTION("defaults") {
    const auto m = io::parse_manifest("");
    CHECK(m.subjects == 25);
    CHECK(m.sessions_per_condition == 1);
    CHECK(m.conditions.size() == 3);
    CHECK(m.master_seed == 2024);
  }
  SECTION("cohort keys and overrides") {
    const auto m = io::parse_manifest(
        "[cohort]\nsubjects = 3\nsessions_per_condition = 2\nconditions = INCREASE, RANDOM\nmaster_seed = 9\n"
        "[subject]\nsnr_db = 8\n");
    const auto jobs = io::expand_manifest(m);
    REQUIRE(jobs.size() == 12);
    CHECK(jobs[0].config.subject.subject_id == "S01");
    CHECK(jobs[11].config.subject.subject_id == "S03");
    CHECK(jobs[0].condition == Condition::increase);
    CHECK(jobs[2].condition == Condition::random);
    CHECK(jobs[1].repetition == 1);
    for (const auto& j : jobs) {
      CHECK(j.config.subject.snr_db == 8.0);
      CHECK(j.config.seed == io::session_seed(9, j.subject, j.condition, j.repetition));
    }
  }
  SECTION("errors") {
    CHECK_THROWS_WITH(io::parse_manifest("[cohort]\nx = 1\n"), Catch::Matchers::ContainsSubstring("unknown field cohort.x"));
    CHECK_THROWS_AS(io::parse_manifest("[cohort]\nsubjects = -1\n"), ParseError);
    CHECK_THROWS_AS(io::parse_manifest("[cohort]\nconditions = INCREASE,UP\n"), ParseError);
    CHECK_THROWS_AS(io::parse_manifest("[cohort]\nsubject_prefix = a_b\n"), ParseError);
    CHECK_THROWS_WITH(io::parse_manifest("[session]\nseed = 4\n"),
                      Catch::Matchers::ContainsSubstring("cohort manifests set seed"));
    CHECK_THROWS_AS(io::parse_manifest("[subject]\nphi_opt = 1\n"), ParseError);
    CHECK_THROWS_AS(io::parse_manifest("[agent]\nbogus = 1\n"), ParseError);
  }
}

TEST_CASE("seed derivation is stable", "[cli_io]") {
  // Frozen values: manifests must keep producing the same sessions.
  CHECK(io::session_seed(2024, 0, Condition::increase, 0) == 16853377474185261019ULL);
  CHECK(io::session_seed(2024, 3, Condition::decrease, 1) == 8284550539525558231ULL);
  CHECK(io::session_seed(7, 24, Condition::random, 0) == 10567034877829882323ULL);
  CHECK(io::session_seed(2024, 0, Condition::increase, 0) != io::session_seed(2024, 0, Condition::decrease, 0));
  CHECK(io::session_seed(2024, 0, Condition::increase, 0) != io::session_seed(2025, 0, Condition::increase, 0));
  io::RunManifest m;
  CHECK(io::subject_name(m, 0) == "S01");
  CHECK(io::subject_name(m, 9) == "S10");
  CHECK(io::subject_name(m, 123) == "S124");
}

TEST_CASE("session store round trip", "[cli_io]") {
  TempDir tmp("store");
  const SessionEntry e = make_entry(run_session(small_config(Condition::increase, 31)), 2);
  const fs::path dir = io::write_session(tmp.path, e);
  CHECK(dir == tmp.path / e.id);
  CHECK_FALSE(fs::exists(tmp.path / (e.id + ".tmp")));
  for (const char* f : {"session.json", "trials.csv", "rest_baseline.csv", "rest_post30.csv"}) CHECK(fs::exists(dir / f));

  const SessionEntry back = io::load_session(dir);
  CHECK(back.id == e.id);
  CHECK(back.subject == e.subject);
  CHECK(back.repetition == 2);
  CHECK(back.status.retained == e.status.retained);
  CHECK(back.log.learned_bin.index == e.log.learned_bin.index);
  CHECK(back.log.planted_bin.index == e.log.planted_bin.index);
  CHECK(back.log.curve.fraction == e.log.curve.fraction);
  CHECK(back.log.baseline_avg_mv == e.log.baseline_avg_mv);
  CHECK(io::trials_csv(back.log.trials) == io::trials_csv(e.log.trials));
  CHECK(io::serialize_session_config(back.log.config) == io::serialize_session_config(e.log.config));
  REQUIRE(back.log.rest_baseline.rois.series.size() == e.log.rest_baseline.rois.series.size());
  CHECK(back.log.rest_baseline.scalp.size() == e.log.rest_baseline.scalp.size());
  REQUIRE(back.fc.has_value());
  REQUIRE(back.fc->pairs.size() == 1);
  CHECK(std::isfinite(back.fc->baseline[0]));

  SECTION("rewriting replaces the directory") {
    io::write_session(tmp.path, e);
    CHECK(io::load_session(dir).id == e.id);
  }
  SECTION("a modified trials file is detected") {
    std::string body = io::read_file(dir / "trials.csv");
    const auto pos = body.find_last_of("0123456789");
    body[pos] = body[pos] == '1' ? '2' : '1';
    io::write_file(dir / "trials.csv", body);
    CHECK_THROWS_WITH(io::load_session(dir), Catch::Matchers::ContainsSubstring("checksum mismatch"));
  }
  SECTION("a truncated rest file is detected") {
    std::string body = io::read_file(dir / "rest_post30.csv");
    io::write_file(dir / "rest_post30.csv", body.substr(0, body.size() / 2));
    CHECK_THROWS_AS(io::load_session(dir), IntegrityError);
    io::LoadOptions lopt;
    lopt.rest_files = false;
    CHECK_NOTHROW(io::load_session(dir, lopt));
  }
  SECTION("a broken header is detected") {
    io::write_file(dir / "session.json", "{ not json");
    CHECK_THROWS_AS(io::load_session(dir), IntegrityError);
  }
  SECTION("trials csv parses its own output") {
    CHECK(io::trials_csv(io::parse_trials_csv(io::trials_csv(e.log.trials))) == io::trials_csv(e.log.trials));
    CHECK_THROWS_AS(io::parse_trials_csv("not,a,header\n"), IntegrityError);
  }
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("batch output does not depend on the worker count", "[cli_io]") {
  TempDir tmp("batch");
  const auto m = io::parse_manifest(small_manifest(2, "INCREASE,RANDOM"));
  const auto a = io::run_batch(m, tmp.path / "p1", 1);
  const auto b = io::run_batch(m, tmp.path / "p8", 8);
  CHECK(a.failures == 0);
  REQUIRE(a.index.size() == 4);
  CHECK(io::index_csv(a.index) == io::index_csv(b.index));
  const auto ta = tree_contents(tmp.path / "p1"), tb = tree_contents(tmp.path / "p8");
  CHECK(ta.size() == 4 * 2 + 1);  // session.json + trials.csv per session, plus the index
  CHECK(ta == tb);

  const auto rows = io::parse_index_csv(io::read_file(tmp.path / "p1" / io::kIndexFile));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].session_id == a.index[0].session_id);
  CHECK(rows[0].seed == io::session_seed(77, 0, Condition::increase, 0));
  const auto loaded = io::load_cohort(tmp.path / "p1");
  CHECK(loaded.size() == 4);
  CHECK_THROWS_AS(io::run_batch(m, tmp.path / "bad", 0), ParameterError);
}

TEST_CASE("zero-subject manifest", "[cli_io]") {
  TempDir tmp("empty");
  const auto res = io::run_batch(io::parse_manifest("[cohort]\nsubjects = 0\n"), tmp.path, 4);
  CHECK(res.index.empty());
  CHECK(res.failures == 0);
  CHECK(io::load_cohort(tmp.path).empty());
  CHECK_THROWS_AS(io::parse_index_csv("wrong header\n"), IntegrityError);
}

TEST_CASE("single-condition cohort still reports circular and connectivity results", "[cli_io]") {
  TempDir tmp("single");
  io::run_batch(io::parse_manifest(small_manifest(1, "INCREASE")), tmp.path / "cohort", 1);
  io::LoadOptions lopt;
  lopt.rest_files = false;
  const auto entries = io::load_cohort(tmp.path / "cohort", lopt);
  REQUIRE(entries.size() == 1);
  AnalysisOptions opt;
  opt.bootstrap_resamples = 200;
  const auto a = analyze_cohort(entries, opt);
  REQUIRE_FALSE(a.models.empty());
  for (const auto& m : a.models) {
    if (m.contrast == "Post30_random_pooled") {
      // The drift model needs no second condition.
      CHECK_FALSE(m.skipped);
    } else {
      CHECK(m.skipped);
      CHECK_FALSE(m.reason.empty());
    }
  }
  CHECK_FALSE(a.circular.empty());
  const auto bundle = io::write_report(tmp.path / "report", a, entries.size());
  for (const auto& f : bundle.files) CHECK(fs::exists(f));
  CHECK(fs::exists(tmp.path / "report" / "summary.json"));
  CHECK(fs::exists(tmp.path / "report" / "fc_results.csv"));
  CHECK(fs::exists(tmp.path / "report" / "circular_stats.csv"));
  const auto j = nlohmann::json::parse(io::read_file(tmp.path / "report" / "summary.json"));
  CHECK(j.at("all_passed").get<bool>() == bundle.all_passed());
  CHECK_FALSE(io::format_summary(j).empty());
}

TEST_CASE("oracle suites", "[cli_io]") {
  std::ostringstream os;
  CHECK(io::run_oracle("all", os) == 0);
  CHECK(os.str().find("FAIL") == std::string::npos);
  std::ostringstream one;
  CHECK(io::run_oracle("rayleigh", one) == 0);
  CHECK_FALSE(one.str().empty());
  CHECK_THROWS_AS(io::run_oracle("nosuch", one), ParameterError);
}

TEST_CASE("command-line exit codes", "[cli_io]") {
  const char* cli_env = std::getenv("CLTMS_CLI_PATH");
  if (!cli_env) SKIP("CLTMS_CLI_PATH is not set");
  const std::string cli = cli_env;
  TempDir tmp("cli");
  const fs::path log = tmp.path / "log.txt";
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int st = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(st));
    return WEXITSTATUS(st);
  };
  auto path = [&](const std::string& name) { return (tmp.path / name).string(); };

  io::write_file(tmp.path / "good.cfg", std::string("[session]\ncondition = INCREASE\nseed = 3\nrest_eeg_s = 60\n"));
  io::write_file(tmp.path / "noseed.cfg", std::string("[session]\ncondition = INCREASE\n"));
  io::write_file(tmp.path / "unknown.cfg", std::string("[session]\ncondition = INCREASE\nseed = 3\nfoo = 1\n"));
  io::write_file(tmp.path / "cohort.cfg", small_manifest(1, "INCREASE,DECREASE"));
  io::write_file(tmp.path / "empty.cfg", std::string("[cohort]\nsubjects = 0\n"));

  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("run") == 1);
  CHECK(run("oracle nosuch") == 1);
  CHECK(run("--parallel 0 batch --config " + path("cohort.cfg")) == 1);
  CHECK(run("run --config " + path("missing.cfg")) == 2);
  CHECK(run("run --config " + path("noseed.cfg")) == 2);
  CHECK(run("run --config " + path("unknown.cfg")) == 2);
  CHECK(io::read_file(log).find("line 4") != std::string::npos);

  CHECK(run("run --config " + path("good.cfg") + " --out " + path("runs")) == 0);
  CHECK(fs::exists(tmp.path / "runs"));
  CHECK(run("run --config " + path("good.cfg") + " --seed 99 --out " + path("runs")) == 0);
  std::size_t n_runs = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "runs")) n_runs += e.is_directory();
  CHECK(n_runs == 2);

  CHECK(run("batch --config " + path("cohort.cfg") + " --out " + path("c1") + " --parallel 1") == 0);
  CHECK(run("batch --config " + path("cohort.cfg") + " --out " + path("c2") + " --parallel 8") == 0);
  CHECK(tree_contents(tmp.path / "c1") == tree_contents(tmp.path / "c2"));

  CHECK(run("analyze " + path("c1")) == 0);
  const auto summary = nlohmann::json::parse(io::read_file(tmp.path / "c1" / "report" / "summary.json"));
  CHECK(run("report " + path("c1")) == (summary.at("all_passed").get<bool>() ? 0 : 4));
  CHECK(run("analyze " + path("c1") + " --permutations 5") == 1);

  CHECK(run("batch --config " + path("empty.cfg") + " --out " + path("e")) == 0);
  CHECK(run("analyze " + path("e")) == 3);
  CHECK(run("analyze " + path("nowhere")) == 3);

  // Corrupt one stored session.
  for (const auto& e : fs::directory_iterator(tmp.path / "c2"))
    if (e.is_directory()) {
      io::write_file(e.path() / "trials.csv", std::string("tampered\n"));
      break;
    }
  CHECK(run("analyze " + path("c2")) == 3);
  CHECK(io::read_file(log).find("checksum mismatch") != std::string::npos);

  CHECK(run("oracle all") == 0);
}
