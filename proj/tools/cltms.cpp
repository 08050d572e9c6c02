// cltms: command-line front end for the closed-loop phase-targeting simulator.
//
//   cltms run     --config session.cfg --out runs/
//   cltms batch   --config cohort.cfg --out cohort/ --parallel 4
//   cltms analyze cohort/ [--out cohort/report]
//   cltms report  cohort/report
//   cltms oracle  all
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 runtime, 4 failed checks.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "cltms/analysis/cohort.hpp"
#include "cltms/errors.hpp"
#include "cltms/io/batch.hpp"
#include "cltms/io/config.hpp"
#include "cltms/io/oracle.hpp"
#include "cltms/io/report.hpp"
#include "cltms/io/session_store.hpp"

namespace fs = std::filesystem;
using namespace cltms;

namespace {

enum Exit : int { ok = 0, usage = 1, config = 2, runtime = 3, checks_failed = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  int parallel = 1;
  std::string config;
};

std::string require_config(const Globals& g, const char* verb) {
  if (g.config.empty()) throw UsageError(std::string(verb) + ": --config is required");
  if (!fs::is_regular_file(g.config)) throw ParseError("cannot read config file " + g.config);
  return io::read_file(g.config);
}

int cmd_run(const Globals& g) {
  io::ConfigText text = io::parse_config_text(require_config(g, "run"));
  if (g.seed) text.sections["session"]["seed"] = {std::to_string(*g.seed), 0};
  const SessionConfig cfg = io::parse_session_config(text);
  const fs::path out = g.out.empty() ? fs::path("runs") : fs::path(g.out);
  SessionEntry e = make_entry(run_session(cfg));
  const auto dir = io::write_session(out, e);
  std::cout << dir.string() << '\n'
            << "trials: " << e.log.trials.size() << "  planted bin: " << e.log.planted_bin.index
            << "  learned bin: " << e.log.learned_bin.index << "  status: " << (e.status.retained ? "retained" : "excluded");
  if (!e.status.retained) std::cout << " (" << e.status.reason << ")";
  std::cout << '\n';
  return ok;
}

int cmd_batch(const Globals& g) {
  const std::string text = require_config(g, "batch");
  io::RunManifest m = io::parse_manifest(text);
  if (g.seed) m.master_seed = *g.seed;
  if (g.out.empty()) throw UsageError("batch: --out is required");
  const fs::path out(g.out);
  const auto res = io::run_batch(m, out, g.parallel);
  std::string copy = text;
  if (g.seed) copy += "\n# --seed override\n# master_seed = " + std::to_string(*g.seed) + "\n";
  io::write_file(out / "manifest.cfg", copy);
  std::size_t retained = 0;
  for (const auto& r : res.index) retained += r.status == "retained";
  std::cout << out.string() << ": " << res.index.size() << " sessions, " << retained << " retained, " << res.failures
            << " failed\n";
  for (const auto& r : res.index)
    if (r.status == "failed") std::cerr << "failed: " << r.session_id << ": " << r.reason << '\n';
  return ok;
}

int cmd_analyze(const Globals& g, const std::string& cohort_dir, int n_perm) {
  const fs::path dir(cohort_dir);
  io::LoadOptions lopt;
  lopt.rest_files = false;  // connectivity values are stored in each session header
  const auto entries = io::load_cohort(dir, lopt);
  AnalysisOptions opt;
  opt.n_perm = n_perm;
  if (g.seed) opt.seed = *g.seed;
  const auto analysis = analyze_cohort(entries, opt);
  const fs::path out = g.out.empty() ? dir / "report" : fs::path(g.out);
  const auto bundle = io::write_report(out, analysis, entries.size());
  for (const auto& m : analysis.models)
    if (m.skipped) std::cout << "model " << m.contrast << " skipped: " << m.reason << '\n';
  std::cout << io::format_summary(nlohmann::json::parse(io::read_file(out / "summary.json")));
  std::cout << "report: " << out.string() << '\n';
  return ok;
}

int cmd_report(const std::string& dir) {
  fs::path path(dir);
  if (fs::is_directory(path / "report") && !fs::exists(path / "summary.json")) path /= "report";
  const auto j = nlohmann::json::parse(io::read_file(path / "summary.json"));
  for (const auto& f : j.at("files"))
    if (!fs::exists(path / f.get<std::string>()))
      throw IntegrityError("report: missing " + (path / f.get<std::string>()).string());
  std::cout << io::format_summary(j);
  return j.value("all_passed", false) ? ok : checks_failed;
}

int cmd_oracle(const std::string& suite) {
  try {
    return io::run_oracle(suite, std::cout) == 0 ? ok : checks_failed;
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop phase-targeting TMS simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed override (session, master or analysis seed)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--parallel", g.parallel, "Worker threads for batch")->check(CLI::Range(1, 256));
  app.add_option("--config", g.config, "Session config or cohort manifest");

  auto* run = app.add_subcommand("run", "Run one session from a config file");
  auto* batch = app.add_subcommand("batch", "Run every session of a cohort manifest");
  auto* analyze = app.add_subcommand("analyze", "Analyze a cohort directory and write a report bundle");
  std::string cohort_dir;
  int n_perm = 1000;
  analyze->add_option("cohort", cohort_dir, "Cohort directory")->required();
  analyze->add_option("--permutations", n_perm, "Permutations per model")->check(CLI::Range(1000, 10000000));
  auto* report = app.add_subcommand("report", "Print the scorecard of a report bundle");
  std::string report_dir;
  report->add_option("dir", report_dir, "Report or cohort directory")->required();
  auto* oracle = app.add_subcommand("oracle", "Print oracle reference values");
  std::string suite = "all";
  oracle->add_option("suite", suite, "ar, permutation, bandit, imcoh, rayleigh, wilcoxon, chi2, holm, ols or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*run) return cmd_run(g);
    if (*batch) return cmd_batch(g);
    if (*analyze) return cmd_analyze(g, cohort_dir, n_perm);
    if (*report) return cmd_report(report_dir);
    if (*oracle) return cmd_oracle(suite);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return usage;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime;
  }
  return usage;
}
