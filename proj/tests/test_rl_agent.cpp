#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "cltms/analysis/stats.hpp"
#include "cltms/rl_agent.hpp"
#include "cltms/virtual_subject.hpp"

using namespace cltms;
using Catch::Approx;

namespace {

// Agent against the subject's tuning curve with a moving-average reward.
std::vector<PhaseBin> run_bandit(Condition c, const SubjectParams& p, std::uint64_t seed, int steps = 400,
                                 int* visited = nullptr) {
  Rng rng(seed);
  AgentConfig cfg;
  AgentState s = AgentState::initial(cfg);
  const SubjectState st = SubjectState::initial(p);
  RewardSpec spec{c, p.base_ppmep_mv};
  seed_values(s, cfg, compute_reward(spec, p.base_ppmep_mv));
  std::vector<double> recent(static_cast<std::size_t>(cfg.avg_window), p.base_ppmep_mv);
  std::vector<PhaseBin> actions;
  for (int k = 0; k < steps; ++k) {
    const PhaseBin a = select_action(s, cfg, rng);
    recent[static_cast<std::size_t>(k % cfg.avg_window)] = respond(st, p, StimKind::paired, a.center(), rng).amplitude_mv;
    update(s, cfg, a, compute_reward(spec, stats::mean(recent)));
    actions.push_back(a);
  }
  if (visited) {
    *visited = 0;
    for (int v : s.visit_counts) *visited += v > 0;
  }
  return actions;
}

}  // namespace

TEST_CASE("condition names round trip", "[rl_agent]") {
  for (Condition c : {Condition::increase, Condition::decrease, Condition::random})
    CHECK(condition_from_string(to_string(c)) == c);
  CHECK_THROWS_AS(condition_from_string("UP"), ParameterError);
}

TEST_CASE("compute_reward examples", "[rl_agent]") {
  CHECK(compute_reward({Condition::increase, 1.0}, 2.0) == Approx(0.5));
  CHECK(compute_reward({Condition::increase, 1.0}, 1.5) == Approx(0.0));
  CHECK(compute_reward({Condition::increase, 2.0}, 2.0) == Approx(-1.0));
  CHECK(compute_reward({Condition::decrease, 1.0}, 0.5) == Approx(0.2));
  CHECK(compute_reward({Condition::decrease, 1.0}, 0.7) == Approx(0.0));
  CHECK(compute_reward({Condition::decrease, 2.0}, 2.0) == Approx(-0.6));
  CHECK_THROWS_AS(compute_reward({Condition::random, 1.0}, 1.0), ParameterError);
  CHECK_THROWS_AS(compute_reward({Condition::increase, 0.0}, 1.0), ParameterError);
  CHECK_THROWS_AS(compute_reward({Condition::increase, 1.0}, -1.0), ParameterError);
}

TEST_CASE("reward is monotone in the current average", "[rl_agent][property]") {
  for (double a = 0.1; a < 3.0; a += 0.1) {
    CHECK(compute_reward({Condition::increase, 1.0}, a + 0.05) > compute_reward({Condition::increase, 1.0}, a));
    CHECK(compute_reward({Condition::decrease, 1.0}, a + 0.05) < compute_reward({Condition::decrease, 1.0}, a));
  }
}

TEST_CASE("epsilon schedule", "[rl_agent]") {
  AgentConfig cfg;
  CHECK(cfg.epsilon_at(0) == 1.0);
  CHECK(cfg.epsilon_at(200) == Approx(0.05).epsilon(1e-3));
  CHECK(cfg.epsilon_at(399) == 0.05);
  for (int k = 1; k < 400; ++k) CHECK(cfg.epsilon_at(k) <= cfg.epsilon_at(k - 1));
  AgentConfig bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(AgentState::initial(bad), ParameterError);
  bad = {};
  bad.epsilon_min = 0.5;
  bad.epsilon0 = 0.2;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("select_action at step 0 is uniform", "[rl_agent]") {
  AgentConfig cfg;
  AgentState s = AgentState::initial(cfg);
  s.q[5] = 10.0;  // ignored at step 0
  Rng rng(17);
  std::array<int, 8> counts{};
  const int n = 8000;
  for (int i = 0; i < n; ++i) ++counts[select_action(s, cfg, rng).index];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 8.0) * (c - n / 8.0) / (n / 8.0);
  CHECK(chi2 < 24.32);  // chi-square(7) upper 0.001 point
}

TEST_CASE("select_action greedy and random extremes", "[rl_agent]") {
  Rng rng(2);
  AgentConfig greedy;
  greedy.epsilon0 = 0.0;
  greedy.epsilon_min = 0.0;
  AgentState s = AgentState::initial(greedy);
  s.step = 1;
  s.q = {0, 0, 0, 0.3, 0, 0, 0, 0};
  for (int i = 0; i < 200; ++i) CHECK(select_action(s, greedy, rng).index == 3);

  SECTION("ties break uniformly") {
    s.q = {1, 0, 0, 1, 0, 0, 0, 0};
    int zero = 0;
    for (int i = 0; i < 2000; ++i) {
      const int a = select_action(s, greedy, rng).index;
      REQUIRE((a == 0 || a == 3));
      zero += a == 0;
    }
    CHECK(zero == Catch::Approx(1000).margin(100));
  }
  SECTION("epsilon 1 ignores values") {
    AgentConfig explore;
    explore.epsilon_decay = 1.0;
    std::array<int, 8> counts{};
    for (int i = 0; i < 8000; ++i) ++counts[select_action(s, explore, rng).index];
    for (int c : counts) CHECK(c == Catch::Approx(1000).margin(150));
  }
}

TEST_CASE("tabular update examples", "[rl_agent]") {
  AgentConfig cfg;
  AgentState s = AgentState::initial(cfg);
  update(s, cfg, PhaseBin(2), 1.0);
  CHECK(s.q[2] == Approx(0.05));
  update(s, cfg, PhaseBin(2), 1.0);
  CHECK(s.q[2] == Approx(0.05 + 0.05 * 0.95));
  CHECK(s.step == 2);
  CHECK(s.visit_counts[2] == 2);
  for (int a : {0, 1, 3, 4, 5, 6, 7}) CHECK(s.q[a] == 0.0);
  CHECK_THROWS_AS(update(s, cfg, PhaseBin(9), 1.0), ParameterError);
  CHECK_THROWS_AS(update(s, cfg, PhaseBin(1), std::nan("")), ParameterError);

  SECTION("seed_values shifts every entry") {
    AgentState t = AgentState::initial(cfg);
    seed_values(t, cfg, -0.5);
    for (double q : t.q) CHECK(q == -0.5);
  }
}

TEST_CASE("tabular update contracts toward the reward", "[rl_agent][property]") {
  AgentConfig cfg;
  Rng rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    AgentState s = AgentState::initial(cfg);
    s.q[1] = u(rng);
    const double r = u(rng);
    const double before = std::abs(s.q[1] - r);
    update(s, cfg, PhaseBin(1), r);
    CHECK(std::abs(s.q[1] - r) == Approx((1.0 - cfg.alpha) * before).margin(1e-12));
  }
}

TEST_CASE("values scale with rewards", "[rl_agent][property]") {
  AgentConfig cfg;
  AgentState a = AgentState::initial(cfg), b = AgentState::initial(cfg);
  Rng ra(10), rb(10), rr(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 300; ++k) {
    const PhaseBin xa = select_action(a, cfg, ra), xb = select_action(b, cfg, rb);
    REQUIRE(xa == xb);  // positive scaling cannot change any argmax
    const double r = g(rr) + 0.1 * xa.index;
    update(a, cfg, xa, r);
    update(b, cfg, xb, 4.0 * r);
  }
  for (int i = 0; i < 8; ++i) CHECK(b.q[i] == Approx(4.0 * a.q[i]).margin(1e-12));
}

TEST_CASE("bandit on the tuning curve finds the best bin", "[rl_agent]") {
  SubjectParams p;
  int within_inc = 0, within_dec = 0, all_visited = 0;
  const int runs = 100;
  for (int run = 0; run < runs; ++run) {
    p.phi_opt = -kPi + kTwoPi * (run + 0.5) / runs;
    const auto inc = run_bandit(Condition::increase, p, derive_seed(1, {static_cast<std::uint64_t>(run), 0}));
    int visited = 0;
    const auto dec = run_bandit(Condition::decrease, p, derive_seed(1, {static_cast<std::uint64_t>(run), 1}), 400, &visited);
    within_inc += bin_distance(extract_optimal_phase(inc), bin_of(p.phi_opt)) <= 1;
    within_dec += bin_distance(extract_optimal_phase(dec), bin_of(p.phi_opt + kPi)) <= 1;
    all_visited += visited == 8;
  }
  CHECK(within_inc >= 95);
  CHECK(within_dec >= 95);
  CHECK(all_visited >= 99);
}

TEST_CASE("extract_optimal_phase", "[rl_agent]") {
  const std::vector<PhaseBin> a{PhaseBin(1), PhaseBin(2), PhaseBin(2), PhaseBin(5)};
  CHECK(extract_optimal_phase(a).index == 2);
  SECTION("count ties go to the higher mean reward") {
    const std::vector<PhaseBin> t{PhaseBin(6), PhaseBin(1), PhaseBin(6), PhaseBin(1)};
    const std::vector<double> r{0.1, 0.5, 0.2, 0.4};
    CHECK(extract_optimal_phase(t, r).index == 1);
    CHECK(extract_optimal_phase(t).index == 1);  // then the lower index
  }
  CHECK_THROWS_AS(extract_optimal_phase(std::vector<PhaseBin>{}), ParameterError);
  const std::vector<double> short_r{1.0};
  CHECK_THROWS_AS(extract_optimal_phase(a, short_r), ParameterError);
}

TEST_CASE("learning_curve examples", "[rl_agent]") {
  std::vector<PhaseBin> all(400, PhaseBin(3));
  auto lc = learning_curve(all, PhaseBin(3));
  REQUIRE(lc.fraction.size() == 10);
  for (double f : lc.fraction) CHECK(f == 1.0);
  lc = learning_curve(all, PhaseBin(4));
  for (double f : lc.fraction) CHECK(f == 0.0);

  std::vector<PhaseBin> alt;
  for (int i = 0; i < 400; ++i) alt.push_back(PhaseBin(i % 2 ? 3 : 0));
  for (double f : learning_curve(alt, PhaseBin(3)).fraction) CHECK(f == 0.5);

  std::vector<PhaseBin> ramp;
  for (int e = 0; e < 10; ++e)
    for (int i = 0; i < 40; ++i) ramp.push_back(PhaseBin(i < 4 * e ? 7 : 0));
  const auto r = learning_curve(ramp, PhaseBin(7));
  for (int e = 0; e < 10; ++e) CHECK(r.fraction[e] == Approx(0.1 * e));

  CHECK_THROWS_AS(learning_curve(std::vector<PhaseBin>(399), PhaseBin(0)), ParameterError);
  CHECK_THROWS_AS(learning_curve(all, PhaseBin(0), 0, 40), ParameterError);
}

TEST_CASE("mlp agent runs and stays finite", "[rl_agent]") {
  AgentConfig cfg;
  cfg.mode = AgentMode::mlp;
  AgentState a = AgentState::initial(cfg), b = AgentState::initial(cfg);
  seed_values(a, cfg, -0.5);
  seed_values(b, cfg, -0.5);
  Rng ra(1), rb(1);
  for (int k = 0; k < 100; ++k) {
    const PhaseBin x = select_action(a, cfg, ra);
    REQUIRE(select_action(b, cfg, rb) == x);
    update(a, cfg, x, x.index == 4 ? 0.5 : -0.5);
    update(b, cfg, x, x.index == 4 ? 0.5 : -0.5);
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(std::isfinite(a.q[i]));
    CHECK(a.q[i] == b.q[i]);
  }
}
