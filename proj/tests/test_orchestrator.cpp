#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <vector>

#include "cltms/io/session_store.hpp"
#include "cltms/orchestrator.hpp"

using namespace cltms;
using Catch::Approx;

namespace {

SessionConfig config(Condition c, std::uint64_t seed, double snr_db = 10.0) {
  SessionConfig cfg;
  cfg.condition = c;
  cfg.seed = seed;
  cfg.subject.snr_db = snr_db;
  cfg.subject.phi_opt = 0.9;
  return cfg;
}

// One increase session shared by several tests.
const SessionLog& increase_log() {
  static const SessionLog log = run_session(config(Condition::increase, 404));
  return log;
}

std::array<int, 8> histogram(const std::vector<PhaseBin>& bins) {
  std::array<int, 8> h{};
  for (auto b : bins) ++h[b.index];
  return h;
}

}  // namespace

TEST_CASE("make_bin_schedule balance", "[orchestrator]") {
  Rng rng(1);
  SECTION("n = 100") {
    auto h = histogram(make_bin_schedule(100, rng).bins);
    std::sort(h.begin(), h.end());
    CHECK(h == std::array<int, 8>{12, 12, 12, 12, 13, 13, 13, 13});
  }
  SECTION("n = 8") {
    const auto s = make_bin_schedule(8, rng);
    REQUIRE(s.bins.size() == 8);
    for (int c : histogram(s.bins)) CHECK(c == 1);
  }
  SECTION("n = 50") {
    auto h = histogram(make_bin_schedule(50, rng).bins);
    std::sort(h.begin(), h.end());
    CHECK(h == std::array<int, 8>{6, 6, 6, 6, 6, 6, 7, 7});
  }
  SECTION("n < 8 is rejected") { CHECK_THROWS_AS(make_bin_schedule(7, rng), ParameterError); }
  SECTION("order is shuffled") {
    const auto a = make_bin_schedule(100, rng), b = make_bin_schedule(100, rng);
    int same = 0;
    for (std::size_t i = 0; i < a.bins.size(); ++i) same += a.bins[i] == b.bins[i];
    CHECK(same < 40);
  }
}

TEST_CASE("block names round trip", "[orchestrator]") {
  for (Block b : {Block::baseline, Block::train, Block::post_opt, Block::post_rand, Block::post30_opt, Block::post30_rand})
    CHECK(block_from_string(to_string(b)) == b);
  CHECK_THROWS_AS(block_from_string("POST45"), ParameterError);
}

TEST_CASE("planted target follows the condition", "[orchestrator]") {
  SubjectParams p;
  p.phi_opt = 0.9;
  CHECK(planted_target(p, Condition::increase).index == bin_of(0.9).index);
  CHECK(planted_target(p, Condition::random).index == bin_of(0.9).index);
  CHECK(planted_target(p, Condition::decrease).index == bin_of(0.9 + kPi).index);
}

TEST_CASE("session protocol counts", "[orchestrator]") {
  const auto& log = increase_log();
  REQUIRE(static_cast<int>(log.trials.size()) == log.config.expected_trials());
  std::map<Block, std::array<int, 2>> counts;  // paired, single
  for (const auto& t : log.trials) ++counts[t.block][t.stim == StimKind::paired ? 0 : 1];
  CHECK(counts[Block::baseline] == std::array<int, 2>{100, 100});
  CHECK(counts[Block::train] == std::array<int, 2>{400, 0});
  for (Block b : {Block::post_opt, Block::post_rand, Block::post30_opt, Block::post30_rand})
    CHECK(counts[b] == std::array<int, 2>{50, 50});
  CHECK(counts[Block::baseline][0] + counts[Block::baseline][1] == 200);
  CHECK(counts[Block::post_opt][0] + counts[Block::post_opt][1] + counts[Block::post_rand][0] +
            counts[Block::post_rand][1] ==
        200);

  SECTION("trial indices are consecutive") {
    for (std::size_t i = 0; i < log.trials.size(); ++i) CHECK(log.trials[i].index == static_cast<int>(i));
  }
  SECTION("block order") {
    std::vector<Block> order;
    for (const auto& t : log.trials)
      if (order.empty() || order.back() != t.block) order.push_back(t.block);
    REQUIRE(order.size() == 6);
    CHECK(order[0] == Block::baseline);
    CHECK(order[1] == Block::train);
    if (log.post_opt_first) {
      CHECK(order[2] == Block::post_opt);
      CHECK(order[4] == Block::post30_opt);
    } else {
      CHECK(order[2] == Block::post_rand);
      CHECK(order[4] == Block::post30_rand);
    }
  }
  SECTION("random evaluation blocks are balanced per stimulus kind") {
    std::array<int, 8> pp{}, sp{};
    for (const auto& t : log.trials)
      if (t.block == Block::post_rand) ++(t.stim == StimKind::paired ? pp : sp)[t.target_bin.index];
    for (int k = 0; k < 8; ++k) {
      CHECK((pp[k] == 6 || pp[k] == 7));
      CHECK((sp[k] == 6 || sp[k] == 7));
    }
  }
}

TEST_CASE("POST_OPT trials target the learned bin", "[orchestrator]") {
  const auto& log = increase_log();
  for (const auto& t : log.trials)
    if (t.block == Block::post_opt || t.block == Block::post30_opt) CHECK(t.target_bin == log.learned_bin);
}

TEST_CASE("TRAIN epochs and agent trace", "[orchestrator]") {
  const auto& log = increase_log();
  int i = 0;
  for (const auto& t : log.trials) {
    if (t.block != Block::train) continue;
    CHECK(t.epoch == i / 40);
    CHECK(t.has_agent);
    CHECK(t.epsilon >= 0.05);
    CHECK(t.epsilon <= 1.0);
    ++i;
  }
  CHECK(i == 400);
  CHECK(log.curve.fraction.size() == 10);
}

TEST_CASE("ITIs and session duration", "[orchestrator]") {
  const auto& log = increase_log();
  const auto& cfg = log.config;
  CHECK(log.duration_s == Approx(log.iti_total_s + 2.0 * cfg.rest_eeg_s + cfg.post_gap_min * 60.0).epsilon(1e-12));
  const double n = static_cast<double>(log.trials.size());
  CHECK(log.iti_total_s >= 2.0 * n);
  CHECK(log.iti_total_s <= 3.0 * n);
  CHECK(log.trials.front().t_s >= cfg.rest_eeg_s + 2.0);
  CHECK(log.trials.front().t_s <= cfg.rest_eeg_s + 3.0);
  const double gap = cfg.post_gap_min * 60.0 + cfg.rest_eeg_s;
  for (std::size_t k = 1; k < log.trials.size(); ++k) {
    double d = log.trials[k].t_s - log.trials[k - 1].t_s;
    const bool crosses_gap = (log.trials[k].block == Block::post30_opt || log.trials[k].block == Block::post30_rand) &&
                             (log.trials[k - 1].block == Block::post_opt || log.trials[k - 1].block == Block::post_rand);
    if (crosses_gap) d -= gap;
    CHECK(d >= 2.0 - 1e-9);
    CHECK(d <= 3.0 + 1e-9);
  }
}

TEST_CASE("offline replay reproduces the logged q-trace", "[orchestrator][property]") {
  for (Condition c : {Condition::increase, Condition::decrease}) {
    SessionConfig cfg = config(c, 77);
    cfg.subject.preinnervation_prob = 0.05;  // exercise rejected trials too
    const SessionLog log = run_session(cfg);
    AgentState s = AgentState::initial(cfg.agent);
    const RewardSpec spec{c, log.baseline_avg_mv};
    seed_values(s, cfg.agent, compute_reward(spec, log.baseline_avg_mv));
    std::deque<double> recent;
    int checked = 0, skipped = 0;
    for (const auto& t : log.trials) {
      if (t.stim == StimKind::paired && !t.rejected) {
        recent.push_back(t.amplitude_mv);
        if (recent.size() > 5) recent.pop_front();
      }
      if (t.block != Block::train) continue;
      CHECK(t.step == s.step);
      if (t.rejected) {
        CHECK_FALSE(t.agent_updated);
        CHECK(std::isnan(t.reward));
        ++skipped;
      } else {
        const double avg = std::accumulate(recent.begin(), recent.end(), 0.0) / static_cast<double>(recent.size());
        const double r = compute_reward(spec, avg);
        CHECK(t.reward == r);
        update(s, cfg.agent, t.target_bin, r);
      }
      CHECK(t.q == s.q);
      ++checked;
    }
    CHECK(checked == 400);
    CHECK(skipped > 0);
  }
}

TEST_CASE("RANDOM condition has no agent", "[orchestrator]") {
  std::vector<double> learned_curve, planted_curve;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SessionConfig cfg = config(Condition::random, 900 + seed);
    cfg.rest_eeg_s = 60.0;
    const SessionLog log = run_session(cfg);
    std::vector<PhaseBin> actions;
    for (const auto& t : log.trials)
      if (t.block == Block::train) {
        CHECK_FALSE(t.has_agent);
        CHECK_FALSE(t.agent_updated);
        CHECK(std::isnan(t.reward));
        CHECK(t.q == std::array<double, 8>{});
        actions.push_back(t.target_bin);
      }
    CHECK(log.learned_bin == extract_optimal_phase(actions));
    for (double f : log.curve.fraction) learned_curve.push_back(f);
    for (double f : learning_curve(actions, log.planted_bin).fraction) planted_curve.push_back(f);
  }
  const double n = static_cast<double>(planted_curve.size());
  const double mp = std::accumulate(planted_curve.begin(), planted_curve.end(), 0.0) / n;
  const double ml = std::accumulate(learned_curve.begin(), learned_curve.end(), 0.0) / n;
  // Chance level against any fixed bin.
  CHECK(mp == Approx(0.125).margin(4.0 * std::sqrt(0.125 * 0.875 / 40.0 / n)));
  // Against the modal bin the expected fraction is E[max count] / 400 = 0.1507 for a
  // uniform multinomial (Monte Carlo, SD 0.0093 per session).
  CHECK(ml == Approx(0.1507).margin(4.0 * 0.0093 / std::sqrt(6.0)));
}

TEST_CASE("preinnervation on every trial invalidates the session", "[orchestrator]") {
  SessionConfig cfg = config(Condition::increase, 5);
  cfg.subject.preinnervation_prob = 1.0;
  cfg.rest_eeg_s = 60.0;
  CHECK_THROWS_AS(run_session(cfg), SessionInvalidError);
}

TEST_CASE("retention gate", "[orchestrator]") {
  SessionConfig hi = config(Condition::increase, 21, 10.0);
  hi.rest_eeg_s = 300.0;
  const auto a = retention_gate(run_session(hi));
  CHECK(a.retained);
  CHECK(a.snr_db == Approx(10.0).margin(1.5));
  SessionConfig lo = config(Condition::increase, 22, 2.0);
  const auto b = retention_gate(run_session(lo));
  CHECK_FALSE(b.retained);
  CHECK(b.reason == "low_snr");
  SessionLog empty;
  CHECK_THROWS_AS(retention_gate(empty), ParameterError);
}

TEST_CASE("sessions are deterministic in their config", "[orchestrator][property]") {
  SessionConfig cfg = config(Condition::decrease, 31);
  cfg.rest_eeg_s = 60.0;
  const auto a = run_session(cfg), b = run_session(cfg);
  CHECK(io::trials_csv(a.trials) == io::trials_csv(b.trials));
  CHECK(a.rest_baseline.scalp.samples == b.rest_baseline.scalp.samples);
  CHECK(a.learned_bin == b.learned_bin);
  cfg.seed = 32;
  CHECK(io::trials_csv(run_session(cfg).trials) != io::trials_csv(a.trials));
}

TEST_CASE("SessionConfig validation", "[orchestrator]") {
  SessionConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_eval_pp = 4;
  CHECK_THROWS_AS(run_session(cfg), ParameterError);
  cfg = {};
  cfg.iti_low_s = 3.5;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.rest_eeg_s = 10.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
