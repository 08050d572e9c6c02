#pragma once

// Action selection over the eight phase bins. There is no observable state
// transition between trials, so the value target is the immediate reward
// (gamma = 0 by default): the tabular mode is single-state Q-learning, the mlp
// mode is the same bandit with a small network, experience replay and a
// target network.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cltms/errors.hpp"
#include "cltms/phase_engine.hpp"
#include "cltms/random.hpp"

namespace cltms {

enum class Condition { increase, decrease, random };

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::increase: return "INCREASE";
    case Condition::decrease: return "DECREASE";
    case Condition::random: return "RANDOM";
  }
  return "?";
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "INCREASE") return Condition::increase;
  if (s == "DECREASE") return Condition::decrease;
  if (s == "RANDOM") return Condition::random;
  throw ParameterError("unknown condition: " + s);
}

struct RewardSpec {
  Condition condition = Condition::increase;
  double baseline_avg_mv = 1.0;

  double multiplier() const {
    switch (condition) {
      case Condition::increase: return 1.5;
      case Condition::decrease: return 0.7;
      case Condition::random: break;
    }
    throw ParameterError("RewardSpec: RANDOM condition has no reward");
  }
};

// INCREASE: current - 1.5 * baseline.  DECREASE: 0.7 * baseline - current.
inline double compute_reward(const RewardSpec& spec, double current_avg_mv) {
  if (!(spec.baseline_avg_mv > 0.0)) throw ParameterError("compute_reward: baseline average must be > 0");
  if (!(current_avg_mv > 0.0)) throw ParameterError("compute_reward: current average must be > 0");
  const double target = spec.multiplier() * spec.baseline_avg_mv;
  return spec.condition == Condition::increase ? current_avg_mv - target : target - current_avg_mv;
}

enum class AgentMode { tabular, mlp };

struct AgentConfig {
  AgentMode mode = AgentMode::tabular;
  double alpha = 0.05;
  double epsilon0 = 1.0;
  double epsilon_min = 0.05;
  double epsilon_decay = 0.985131;  // epsilon0 * decay^200 = 0.05
  int avg_window = 5;
  double gamma = 0.0;
  // Start every action value at the reward of "no change from Baseline"
  // instead of 0, so early draws neither lock in nor get abandoned.
  bool neutral_init = true;

  // mlp mode
  int hidden_units = 16;
  int replay_capacity = 400;
  int batch_size = 16;
  int target_sync_steps = 20;
  std::uint64_t init_seed = 7;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("AgentConfig: alpha must be in (0, 1]");
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0) || !(epsilon_min >= 0.0 && epsilon_min <= epsilon0))
      throw ParameterError("AgentConfig: need 0 <= epsilon_min <= epsilon0 <= 1");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw ParameterError("AgentConfig: epsilon_decay must be in (0, 1]");
    if (avg_window < 1) throw ParameterError("AgentConfig: avg_window must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("AgentConfig: gamma must be in [0, 1)");
    if (hidden_units < 1 || replay_capacity < 1 || batch_size < 1 || target_sync_steps < 1)
      throw ParameterError("AgentConfig: network and replay sizes must be >= 1");
  }

  double epsilon_at(std::int64_t step) const {
    return std::max(epsilon_min, epsilon0 * std::pow(epsilon_decay, static_cast<double>(step)));
  }
};

// One-hidden-layer network from a constant input to eight action values.
struct QNetwork {
  std::vector<double> w1, b1;  // hidden
  std::vector<double> w2;      // kCount x hidden, row-major
  std::array<double, PhaseBin::kCount> b2{};

  static QNetwork init(int hidden, Rng& rng) {
    QNetwork net;
    std::normal_distribution<double> g(0.0, 1.0);
    net.w1.resize(hidden);
    net.b1.resize(hidden);
    net.w2.resize(static_cast<std::size_t>(hidden) * PhaseBin::kCount);
    for (auto& v : net.w1) v = 0.5 * g(rng);
    for (auto& v : net.b1) v = 0.5 * g(rng);
    const double s = 0.1 / std::sqrt(static_cast<double>(hidden));
    for (auto& v : net.w2) v = s * g(rng);
    return net;
  }

  std::vector<double> hidden() const {
    std::vector<double> h(w1.size());
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::tanh(w1[j] + b1[j]);
    return h;
  }

  std::array<double, PhaseBin::kCount> forward() const {
    const auto h = hidden();
    std::array<double, PhaseBin::kCount> q = b2;
    for (int a = 0; a < PhaseBin::kCount; ++a)
      for (std::size_t j = 0; j < h.size(); ++j) q[a] += w2[a * h.size() + j] * h[j];
    return q;
  }
};

struct Experience {
  int action = 0;
  double reward = 0.0;
};

struct AgentState {
  std::array<double, PhaseBin::kCount> q{};  // tabular values, or a copy of the network outputs
  std::array<int, PhaseBin::kCount> visit_counts{};
  std::int64_t step = 0;

  // mlp mode
  QNetwork net, target_net;
  std::vector<Experience> replay;
  std::size_t replay_head = 0;
  Rng replay_rng{0};

  static AgentState initial(const AgentConfig& cfg) {
    cfg.validate();
    AgentState s;
    if (cfg.mode == AgentMode::mlp) {
      Rng rng(cfg.init_seed);
      s.net = QNetwork::init(cfg.hidden_units, rng);
      s.target_net = s.net;
      s.q = s.net.forward();
      s.replay_rng.seed(derive_seed(cfg.init_seed, {1}));
    }
    return s;
  }
};

// Shifts the initial action values to v (network output bias in mlp mode).
inline void seed_values(AgentState& s, const AgentConfig& cfg, double v) {
  if (!std::isfinite(v)) throw ParameterError("seed_values: non-finite value");
  if (cfg.mode == AgentMode::tabular) {
    s.q.fill(v);
    return;
  }
  for (auto& b : s.net.b2) b += v;
  s.target_net = s.net;
  s.q = s.net.forward();
}

// Step 0: uniform bin. Otherwise epsilon-greedy with uniform tie-breaking.
inline PhaseBin select_action(const AgentState& s, const AgentConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<int> any(0, PhaseBin::kCount - 1);
  if (s.step == 0) return PhaseBin(any(rng));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg.epsilon_at(s.step)) return PhaseBin(any(rng));
  const double best = *std::max_element(s.q.begin(), s.q.end());
  std::array<int, PhaseBin::kCount> ties{};
  int nties = 0;
  for (int a = 0; a < PhaseBin::kCount; ++a)
    if (s.q[a] == best) ties[nties++] = a;
  if (nties == 1) return PhaseBin(ties[0]);
  return PhaseBin(ties[std::uniform_int_distribution<int>(0, nties - 1)(rng)]);
}

namespace detail {

inline void mlp_train(AgentState& s, const AgentConfig& cfg) {
  const std::size_t n = s.replay.size();
  const int hidden = cfg.hidden_units;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const auto target_q = s.target_net.forward();
  const double bootstrap = cfg.gamma * *std::max_element(target_q.begin(), target_q.end());

  QNetwork& net = s.net;
  const auto h = net.hidden();
  const auto q = net.forward();
  std::vector<double> gw1(hidden, 0.0), gb1(hidden, 0.0), gw2(net.w2.size(), 0.0);
  std::array<double, PhaseBin::kCount> gb2{};
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Experience& e = s.replay[pick(s.replay_rng)];
    const double err = q[e.action] - (e.reward + bootstrap);  // d/dq of 0.5*err^2
    gb2[e.action] += err;
    for (int j = 0; j < hidden; ++j) {
      gw2[e.action * hidden + j] += err * h[j];
      const double back = err * net.w2[e.action * hidden + j] * (1.0 - h[j] * h[j]);
      gw1[j] += back;
      gb1[j] += back;
    }
  }
  const double lr = cfg.alpha / cfg.batch_size;
  for (int j = 0; j < hidden; ++j) {
    net.w1[j] -= lr * gw1[j];
    net.b1[j] -= lr * gb1[j];
  }
  for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] -= lr * gw2[i];
  for (int a = 0; a < PhaseBin::kCount; ++a) net.b2[a] -= lr * gb2[a];
}

}  // namespace detail

// Tabular: Q[a] += alpha * (reward - Q[a]). mlp: store in replay, one
// minibatch gradient step on the squared TD error, periodic target sync.
inline void update(AgentState& s, const AgentConfig& cfg, PhaseBin action, double reward) {
  if (action.index < 0 || action.index >= PhaseBin::kCount) throw ParameterError("update: invalid action");
  if (!std::isfinite(reward)) throw ParameterError("update: non-finite reward");
  if (cfg.mode == AgentMode::tabular) {
    const double target = reward + cfg.gamma * *std::max_element(s.q.begin(), s.q.end());
    s.q[action.index] += cfg.alpha * (target - s.q[action.index]);
  } else {
    const Experience e{action.index, reward};
    if (s.replay.size() < static_cast<std::size_t>(cfg.replay_capacity)) s.replay.push_back(e);
    else s.replay[s.replay_head] = e;
    s.replay_head = (s.replay_head + 1) % static_cast<std::size_t>(cfg.replay_capacity);
    detail::mlp_train(s, cfg);
    if ((s.step + 1) % cfg.target_sync_steps == 0) s.target_net = s.net;
    s.q = s.net.forward();
  }
  ++s.visit_counts[action.index];
  ++s.step;
}

// Modal bin; ties go to the higher mean reward (NaN rewards ignored), then
// the lower index.
inline PhaseBin extract_optimal_phase(std::span<const PhaseBin> actions, std::span<const double> rewards = {}) {
  if (actions.empty()) throw ParameterError("extract_optimal_phase: empty history");
  if (!rewards.empty() && rewards.size() != actions.size())
    throw ParameterError("extract_optimal_phase: rewards must match actions");
  std::array<int, PhaseBin::kCount> counts{};
  std::array<double, PhaseBin::kCount> sum{};
  std::array<int, PhaseBin::kCount> nsum{};
  for (std::size_t i = 0; i < actions.size(); ++i) {
    ++counts[actions[i].index];
    if (!rewards.empty() && std::isfinite(rewards[i])) {
      sum[actions[i].index] += rewards[i];
      ++nsum[actions[i].index];
    }
  }
  auto mean = [&](int a) {
    return nsum[a] ? sum[a] / nsum[a] : -std::numeric_limits<double>::infinity();
  };
  int best = 0;
  for (int a = 1; a < PhaseBin::kCount; ++a) {
    if (counts[a] > counts[best] || (counts[a] == counts[best] && mean(a) > mean(best))) best = a;
  }
  return PhaseBin(best);
}

struct LearningCurve {
  std::vector<double> fraction;  // per epoch, in [0, 1]
};

inline LearningCurve learning_curve(std::span<const PhaseBin> actions, PhaseBin optimal, int epochs = 10,
                                    int steps_per_epoch = 40) {
  if (epochs < 1 || steps_per_epoch < 1) throw ParameterError("learning_curve: epochs and steps must be >= 1");
  if (actions.size() != static_cast<std::size_t>(epochs) * static_cast<std::size_t>(steps_per_epoch))
    throw ParameterError("learning_curve: history length must equal epochs * steps_per_epoch");
  LearningCurve lc;
  for (int e = 0; e < epochs; ++e) {
    int hits = 0;
    for (int i = 0; i < steps_per_epoch; ++i) hits += actions[e * steps_per_epoch + i] == optimal;
    lc.fraction.push_back(static_cast<double>(hits) / steps_per_epoch);
  }
  return lc;
}

}  // namespace cltms
