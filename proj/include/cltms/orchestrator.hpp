#pragma once

// Session state machine: resting-state EEG, Baseline block, closed-loop
// training, the two evaluation blocks around a 30 min gap, and a second
// resting-state recording. Produces a SessionLog that is deterministic in
// the SessionConfig (including its seed).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cltms/errors.hpp"
#include "cltms/phase_engine.hpp"
#include "cltms/random.hpp"
#include "cltms/rl_agent.hpp"
#include "cltms/signal_core.hpp"
#include "cltms/virtual_subject.hpp"

namespace cltms {

enum class Block { baseline, train, post_opt, post_rand, post30_opt, post30_rand };

inline const char* to_string(Block b) {
  switch (b) {
    case Block::baseline: return "BASELINE";
    case Block::train: return "TRAIN";
    case Block::post_opt: return "POST_OPT";
    case Block::post_rand: return "POST_RAND";
    case Block::post30_opt: return "POST30_OPT";
    case Block::post30_rand: return "POST30_RAND";
  }
  return "?";
}

inline Block block_from_string(const std::string& s) {
  for (Block b : {Block::baseline, Block::train, Block::post_opt, Block::post_rand, Block::post30_opt, Block::post30_rand})
    if (s == to_string(b)) return b;
  throw ParameterError("unknown block: " + s);
}

struct SessionConfig {
  Condition condition = Condition::increase;
  int n_baseline_pp = 100;
  int n_baseline_sp = 100;
  int epochs = 10;
  int steps_per_epoch = 40;
  int n_eval_pp = 50;
  int n_eval_sp = 50;
  double iti_low_s = 2.0;
  double iti_high_s = 3.0;
  double isi_ms = 6.0;  // carried for the log; no mechanistic effect
  double rest_eeg_s = 300.0;
  double post_gap_min = 30.0;
  double fs = 1000.0;
  double retry_chunk_ms = 50.0;
  double retry_limit_ms = 1000.0;
  RoiLayout roi_layout = RoiLayout::pair;
  std::uint64_t seed = 1;
  SubjectParams subject;
  AgentConfig agent;
  PredictorConfig predictor;

  int n_train() const { return epochs * steps_per_epoch; }
  int expected_trials() const { return n_baseline_pp + n_baseline_sp + n_train() + 4 * (n_eval_pp + n_eval_sp); }

  void validate() const {
    if (n_baseline_pp < 8 || n_baseline_sp < 8 || n_eval_pp < 8 || n_eval_sp < 8)
      throw ParameterError("SessionConfig: block sizes must be >= 8 for pseudo-randomized schedules");
    if (epochs < 1 || steps_per_epoch < 1) throw ParameterError("SessionConfig: epochs and steps_per_epoch must be >= 1");
    if (!(iti_low_s > 0.0 && iti_low_s <= iti_high_s)) throw ParameterError("SessionConfig: need 0 < iti_low <= iti_high");
    if (!(rest_eeg_s >= 60.0)) throw ParameterError("SessionConfig: rest_eeg_s must be >= 60");
    if (!(post_gap_min >= 0.0)) throw ParameterError("SessionConfig: post_gap_min must be >= 0");
    if (!(retry_chunk_ms > 0.0) || !(retry_limit_ms >= 0.0)) throw ParameterError("SessionConfig: bad retry policy");
    subject.validate();
    agent.validate();
    predictor.validate(fs);
  }
};

struct TrialRecord {
  int index = 0;
  Block block = Block::baseline;
  StimKind stim = StimKind::paired;
  PhaseBin target_bin;
  double predicted_phase_rad = std::nan("");
  double oracle_phase_rad = 0.0;
  double error_rad = 0.0;  // wrapped oracle - target center
  bool flagged = false;    // fired unconditionally after the retry budget
  double amplitude_mv = 0.0;
  double emg_rms_pre_uv = 0.0;
  bool rejected = false;
  double t_s = 0.0;

  // Agent trace (TRAIN with an agent only).
  bool has_agent = false;
  bool agent_updated = false;
  std::int64_t step = -1;
  int epoch = -1;
  double reward = std::nan("");
  double epsilon = std::nan("");
  std::array<double, PhaseBin::kCount> q{};
};

struct RestSegment {
  TimeSeries scalp;  // empty for Post30
  RoiSignalSet rois;
};

struct SessionLog {
  SessionConfig config;
  PhaseBin planted_bin;  // bin_of(phi_opt) for INCREASE/RANDOM, bin_of(phi_opt + pi) for DECREASE
  double baseline_avg_mv = 0.0;
  SnrEstimate baseline_snr;
  double reference_hz = 0.0;  // predictor frequency used for every trigger
  std::vector<TrialRecord> trials;
  RestSegment rest_baseline, rest_post30;
  PhaseBin learned_bin;
  LearningCurve curve;
  bool post_opt_first = true;
  SubjectState final_state;
  double coupling_at_post30 = 0.0;
  double duration_s = 0.0;
  double iti_total_s = 0.0;
};

struct BinSchedule {
  std::vector<PhaseBin> bins;
};

// Balanced pseudo-random order: each bin floor(n/8) or ceil(n/8) times.
inline BinSchedule make_bin_schedule(int n, Rng& rng) {
  if (n < PhaseBin::kCount) throw ParameterError("make_bin_schedule: need n >= 8");
  std::array<int, PhaseBin::kCount> order{};
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int base = n / PhaseBin::kCount;
  const int extra = n % PhaseBin::kCount;
  BinSchedule s;
  for (int i = 0; i < PhaseBin::kCount; ++i) {
    const int count = base + (i < extra ? 1 : 0);
    for (int c = 0; c < count; ++c) s.bins.emplace_back(order[i]);
  }
  std::shuffle(s.bins.begin(), s.bins.end(), rng);
  return s;
}

inline PhaseBin planted_target(const SubjectParams& p, Condition c) {
  return c == Condition::decrease ? bin_of(p.phi_opt + kPi) : bin_of(p.phi_opt);
}

namespace detail {

constexpr std::uint64_t kTagRestBaseline = 0xB0;
constexpr std::uint64_t kTagRestPost30 = 0xB1;
constexpr std::uint64_t kTagTrial = 0x7A;

struct Fired {
  TriggerPlan plan;
  bool flagged = false;
  double oracle = 0.0;
};

class SessionRunner {
 public:
  explicit SessionRunner(const SessionConfig& cfg)
      : cfg_(cfg), rng_(derive_seed(cfg.seed, {0x5E55})), state_(SubjectState::initial(cfg.subject)),
        agent_(AgentState::initial(cfg.agent)) {
    const double fs = cfg.fs;
    window_ = cfg.predictor.window_samples(fs);
    chunk_ = static_cast<std::size_t>(std::llround(cfg.retry_chunk_ms * fs / 1000.0));
    retries_ = static_cast<int>(std::floor(cfg.retry_limit_ms / cfg.retry_chunk_ms + 1e-9));
    short_segment_ = window_ + cfg.predictor.max_delay_samples(fs) + 64;
    long_segment_ = short_segment_ + static_cast<std::size_t>(retries_) * chunk_;
  }

  SessionLog run() {
    SessionLog log;
    log.config = cfg_;
    log.planted_bin = planted_target(cfg_.subject, cfg_.condition);

    log.rest_baseline = record_rest(kTagRestBaseline, true);
    const auto spectrum = welch_psd(log.rest_baseline.scalp, 2.0, 0.5);
    log.baseline_snr = estimate_snr(spectrum, cfg_.predictor.band);
    // The predictor follows the individual peak unless a frequency is configured.
    PredictorConfig pc = cfg_.predictor;
    if (pc.reference_hz == 0.0) pc.reference_hz = interpolate_peak_hz(spectrum, pc.band);
    log.reference_hz = pc.reference_hz;
    engine_.emplace(pc, cfg_.fs);

    run_mixed_block(log, Block::baseline, cfg_.n_baseline_pp, cfg_.n_baseline_sp, std::nullopt);
    double sum = 0.0;
    int n = 0;
    for (const auto& t : log.trials)
      if (t.block == Block::baseline && t.stim == StimKind::paired && !t.rejected) {
        sum += t.amplitude_mv;
        ++n;
      }
    if (n == 0)
      throw SessionInvalidError("session invalid: every Baseline paired-pulse trial was rejected "
                                "(preinnervation); baseline average undefined");
    log.baseline_avg_mv = sum / n;

    std::vector<PhaseBin> actions;
    std::vector<double> rewards;
    run_training(log, actions, rewards);
    log.learned_bin = extract_optimal_phase(actions, rewards);
    log.curve = learning_curve(actions, log.learned_bin, cfg_.epochs, cfg_.steps_per_epoch);

    log.post_opt_first = std::bernoulli_distribution(0.5)(rng_);
    run_evaluation(log, Block::post_opt, Block::post_rand);

    clock_ += cfg_.post_gap_min * 60.0;
    log.coupling_at_post30 = state_.coupling;
    log.rest_post30 = record_rest(kTagRestPost30, false);
    run_evaluation(log, Block::post30_opt, Block::post30_rand);

    state_.clock_s = clock_;
    log.final_state = state_;
    log.duration_s = clock_;
    log.iti_total_s = iti_total_;
    return log;
  }

 private:
  // Scalp EEG is only needed where the SNR gate reads it.
  RestSegment record_rest(std::uint64_t tag, bool with_scalp) {
    RestSegment seg;
    const std::uint64_t seed = derive_seed(cfg_.seed, {tag});
    if (with_scalp) {
      seg.scalp = emit_scalp_eeg(state_, cfg_.subject, cfg_.rest_eeg_s, derive_seed(seed, {0}), cfg_.fs);
      seg.scalp.t0 = clock_;
    }
    seg.rois = emit_roi_signals(state_, cfg_.subject, cfg_.rest_eeg_s, cfg_.fs, derive_seed(seed, {1}), cfg_.roi_layout);
    for (auto& ts : seg.rois.series) ts.t0 = clock_;
    clock_ += cfg_.rest_eeg_s;
    return seg;
  }

  // One EEG segment per trial. A short segment covers the first attempt; when
  // that attempt yields no trigger the trial is replayed on a segment long
  // enough for the whole retry budget (same seed, so still deterministic).
  Fired fire(PhaseBin target, int trial_index, MuEegComponents& comps) {
    const std::uint64_t seed = derive_seed(cfg_.seed, {kTagTrial, static_cast<std::uint64_t>(trial_index)});
    Fired out;
    comps = emit_scalp_components(state_, cfg_.subject, static_cast<double>(short_segment_) / cfg_.fs, seed, cfg_.fs);
    std::vector<double> x = comps.total().samples;
    engine_->reset();
    engine_->push(std::span<const double>(x).first(window_));
    try {
      out.plan = engine_->schedule(target);
      out.oracle = comps.analytic_phase(static_cast<std::size_t>(out.plan.fire_sample));
      return out;
    } catch (const NoTriggerError&) {
    }

    comps = emit_scalp_components(state_, cfg_.subject, static_cast<double>(long_segment_) / cfg_.fs,
                                  derive_seed(seed, {1}), cfg_.fs);
    x = comps.total().samples;
    engine_->reset();
    engine_->push(std::span<const double>(x).first(window_));
    std::size_t pos = window_;
    for (int attempt = 0;; ++attempt) {
      try {
        out.plan = engine_->schedule(target);
        break;
      } catch (const NoTriggerError&) {
        if (attempt >= retries_) {
          out.flagged = true;
          out.plan.target = target;
          out.plan.decision_sample = static_cast<std::int64_t>(pos) - 1;
          out.plan.fire_sample = static_cast<std::int64_t>(pos);
          out.plan.predicted_phase = std::nan("");
          break;
        }
        engine_->push(std::span<const double>(x).subspan(pos, chunk_));
        pos += chunk_;
      }
    }
    out.oracle = comps.analytic_phase(static_cast<std::size_t>(out.plan.fire_sample));
    return out;
  }

  TrialRecord trial(Block block, StimKind stim, PhaseBin target) {
    const double iti = std::uniform_real_distribution<double>(cfg_.iti_low_s, cfg_.iti_high_s)(rng_);
    clock_ += iti;
    iti_total_ += iti;
    TrialRecord t;
    t.index = next_index_++;
    t.block = block;
    t.stim = stim;
    t.target_bin = target;
    t.t_s = clock_;
    MuEegComponents comps;
    const Fired f = fire(target, t.index, comps);
    t.flagged = f.flagged;
    t.predicted_phase_rad = f.plan.predicted_phase;
    t.oracle_phase_rad = f.oracle;
    t.error_rad = circular_error(f.oracle, target.center());
    state_.clock_s = clock_;
    const MepResponse r = respond(state_, cfg_.subject, stim, f.oracle, rng_);
    apply_plasticity(state_, cfg_.subject, stim, f.oracle);
    t.amplitude_mv = r.amplitude_mv;
    t.emg_rms_pre_uv = r.emg_rms_pre_uv;
    t.rejected = r.emg_rms_pre_uv > kPreinnervationThresholdUv;
    if (stim == StimKind::paired && !t.rejected) {
      recent_pp_.push_back(t.amplitude_mv);
      while (recent_pp_.size() > static_cast<std::size_t>(cfg_.agent.avg_window)) recent_pp_.pop_front();
    }
    return t;
  }

  void run_mixed_block(SessionLog& log, Block block, int n_pp, int n_sp, std::optional<PhaseBin> fixed) {
    std::vector<PhaseBin> pp, sp;
    if (fixed) {
      pp.assign(n_pp, *fixed);
      sp.assign(n_sp, *fixed);
    } else {
      pp = make_bin_schedule(n_pp, rng_).bins;
      sp = make_bin_schedule(n_sp, rng_).bins;
    }
    std::vector<StimKind> kinds(n_pp, StimKind::paired);
    kinds.insert(kinds.end(), n_sp, StimKind::single);
    std::shuffle(kinds.begin(), kinds.end(), rng_);
    std::size_t ip = 0, is = 0;
    for (StimKind k : kinds) {
      const PhaseBin target = k == StimKind::paired ? pp[ip++] : sp[is++];
      log.trials.push_back(trial(block, k, target));
    }
  }

  void run_training(SessionLog& log, std::vector<PhaseBin>& actions, std::vector<double>& rewards) {
    const bool learning = cfg_.condition != Condition::random;
    const RewardSpec spec{cfg_.condition, log.baseline_avg_mv};
    if (learning && cfg_.agent.neutral_init) seed_values(agent_, cfg_.agent, compute_reward(spec, log.baseline_avg_mv));
    std::uniform_int_distribution<int> any(0, PhaseBin::kCount - 1);
    for (int i = 0; i < cfg_.n_train(); ++i) {
      PhaseBin action;
      double eps = std::nan("");
      std::int64_t step = agent_.step;
      if (learning) {
        eps = agent_.step == 0 ? 1.0 : cfg_.agent.epsilon_at(agent_.step);
        action = select_action(agent_, cfg_.agent, rng_);
      } else {
        action = PhaseBin(any(rng_));
      }
      TrialRecord t = trial(Block::train, StimKind::paired, action);
      t.epoch = i / cfg_.steps_per_epoch;
      if (learning) {
        t.has_agent = true;
        t.step = step;
        t.epsilon = eps;
        if (!t.rejected) {
          const double avg = std::accumulate(recent_pp_.begin(), recent_pp_.end(), 0.0) /
                             static_cast<double>(recent_pp_.size());
          t.reward = compute_reward(spec, avg);
          update(agent_, cfg_.agent, action, t.reward);
          t.agent_updated = true;
        }
        t.q = agent_.q;
      }
      actions.push_back(action);
      rewards.push_back(t.reward);
      log.trials.push_back(t);
    }
  }

  void run_evaluation(SessionLog& log, Block opt, Block rand) {
    auto run_opt = [&] { run_mixed_block(log, opt, cfg_.n_eval_pp, cfg_.n_eval_sp, log.learned_bin); };
    auto run_rand = [&] { run_mixed_block(log, rand, cfg_.n_eval_pp, cfg_.n_eval_sp, std::nullopt); };
    if (log.post_opt_first) {
      run_opt();
      run_rand();
    } else {
      run_rand();
      run_opt();
    }
  }

  SessionConfig cfg_;
  Rng rng_;
  SubjectState state_;
  AgentState agent_;
  std::optional<PhaseEngine> engine_;
  std::deque<double> recent_pp_;
  std::size_t window_ = 0, chunk_ = 0, short_segment_ = 0, long_segment_ = 0;
  int retries_ = 0;
  int next_index_ = 0;
  double clock_ = 0.0;
  double iti_total_ = 0.0;
};

}  // namespace detail

inline SessionLog run_session(const SessionConfig& cfg) {
  cfg.validate();
  return detail::SessionRunner(cfg).run();
}

struct RetentionStatus {
  bool retained = true;
  std::string reason;  // "low_snr" when excluded
  double snr_db = 0.0;
};

// Excludes the session when the Baseline resting-state SNR is below threshold.
inline RetentionStatus retention_gate(const SessionLog& log, double snr_threshold_db = 4.0) {
  if (log.rest_baseline.scalp.samples.empty()) throw ParameterError("retention_gate: Baseline rsEEG missing");
  const auto snr = estimate_snr(welch_psd(log.rest_baseline.scalp, 2.0, 0.5), log.config.predictor.band);
  RetentionStatus st;
  st.snr_db = snr.snr_db;
  if (snr.snr_db < snr_threshold_db) {
    st.retained = false;
    st.reason = "low_snr";
  }
  return st;
}

}  // namespace cltms
