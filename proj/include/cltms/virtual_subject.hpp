#pragma once

// Generative stand-in for the participant: phase-tuned MEP responses with
// multiplicative lognormal noise, Hebbian SMA->M1 coupling and uniform
// LTP-like gain drift driven by paired pulses, preinnervation, and the
// resting-state scalp and source signals the rest of the system observes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cltms/errors.hpp"
#include "cltms/random.hpp"
#include "cltms/signal_core.hpp"
#include "cltms/snr_calibration.hpp"

namespace cltms {

enum class StimKind { paired, single };

inline const char* to_string(StimKind s) { return s == StimKind::paired ? "paired" : "single"; }

struct SubjectParams {
  std::string subject_id = "S01";
  double phi_opt = 0.0;            // rad; planted high-excitability phase for this session
  double mod_depth = 0.3;          // [0, 1)
  double base_ppmep_mv = 1.0;
  double base_spmep_mv = 1.0;
  double lognorm_sigma = 0.5;      // SD of log-amplitude noise (natural log)
  double snr_db = 10.0;            // resting-state mu SNR as measured by estimate_snr
  double preinnervation_prob = 0.01;
  double hebb_rate = 5e-4;
  double ltp_rate = 1.85e-4;       // (1 + mod_depth) * (1 + ltp_rate)^400 ~= 1.4
  double coupling0 = 0.3;
  double fc_lag_rad = kPi / 2.0;
  double roi_noise_scale = 1.0;    // independent source noise relative to pink_noise_uv

  // Signal model knobs.
  double mu_hz = 10.0;
  double pink_noise_uv = 10.0;
  double amp_mod_depth = 0.3;
  double amp_mod_hz = 0.2;

  void validate() const {
    if (!(mod_depth >= 0.0 && mod_depth < 1.0)) throw ParameterError("SubjectParams: mod_depth must be in [0, 1)");
    if (!(base_ppmep_mv > 0.0) || !(base_spmep_mv > 0.0)) throw ParameterError("SubjectParams: base amplitudes must be > 0");
    if (!(lognorm_sigma >= 0.0) || !std::isfinite(lognorm_sigma)) throw ParameterError("SubjectParams: lognorm_sigma must be >= 0");
    if (!(preinnervation_prob >= 0.0 && preinnervation_prob <= 1.0))
      throw ParameterError("SubjectParams: preinnervation_prob must be in [0, 1]");
    if (!std::isfinite(hebb_rate) || !std::isfinite(ltp_rate) || ltp_rate <= -1.0)
      throw ParameterError("SubjectParams: plasticity rates must be finite (ltp_rate > -1)");
    if (!(coupling0 >= 0.0 && coupling0 <= 1.0)) throw ParameterError("SubjectParams: coupling0 must be in [0, 1]");
    if (!(roi_noise_scale >= 0.0) || !std::isfinite(roi_noise_scale))
      throw ParameterError("SubjectParams: roi_noise_scale must be >= 0");
    if (!std::isfinite(phi_opt) || !std::isfinite(fc_lag_rad) || !std::isfinite(snr_db))
      throw ParameterError("SubjectParams: non-finite phase or SNR");
    if (!(mu_hz > 0.0) || !(pink_noise_uv > 0.0)) throw ParameterError("SubjectParams: mu_hz and pink_noise_uv must be > 0");
    if (!(amp_mod_depth >= 0.0 && amp_mod_depth < 1.0)) throw ParameterError("SubjectParams: amp_mod_depth must be in [0, 1)");
  }
};

struct SubjectState {
  double coupling = 0.3;
  double excitability_gain = 1.0;
  double clock_s = 0.0;

  static SubjectState initial(const SubjectParams& p) { return {p.coupling0, 1.0, 0.0}; }
};

struct MepResponse {
  double amplitude_mv = 0.0;
  bool preinnervated = false;
  double emg_rms_pre_uv = 0.0;  // -100..-10 ms window
};

inline constexpr double kPreinnervationThresholdUv = 200.0;

// Noise-free expected amplitude: base * gain * (1 + depth * cos(phase - phi_opt)).
inline double expected_amplitude(const SubjectState& s, const SubjectParams& p, StimKind stim, double phase) {
  const double base = stim == StimKind::paired ? p.base_ppmep_mv : p.base_spmep_mv;
  return base * s.excitability_gain * (1.0 + p.mod_depth * std::cos(phase - p.phi_opt));
}

// The lognormal factor is mean-one, exp(sigma*z - sigma^2/2), so
// base_*_mv stays the average amplitude.
inline MepResponse respond(const SubjectState& s, const SubjectParams& p, StimKind stim, double phase_at_pulse, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MepResponse r;
  const double z = gauss(rng);
  const double sigma = p.lognorm_sigma;
  r.amplitude_mv = expected_amplitude(s, p, stim, phase_at_pulse) * std::exp(sigma * z - 0.5 * sigma * sigma);
  r.preinnervated = unit(rng) < p.preinnervation_prob;
  const double u = unit(rng);
  if (r.preinnervated) r.emg_rms_pre_uv = kPreinnervationThresholdUv * (1.0 + 1e-3 + u);  // (200, 400] uV
  else r.emg_rms_pre_uv = 5.0 + 45.0 * u;                                             // relaxed muscle
  return r;
}

// Called once per paired pulse.
inline void apply_plasticity(SubjectState& s, const SubjectParams& p, StimKind stim, double phase_at_pulse) {
  if (stim != StimKind::paired) return;
  s.coupling = std::clamp(s.coupling + p.hebb_rate * std::cos(phase_at_pulse - p.phi_opt), 0.0, 1.0);
  s.excitability_gain *= 1.0 + p.ltp_rate;
}

// ---------------------------------------------------------------------------
// Signals

inline SnrCalibrationKey calibration_key(const SubjectParams& p, double fs = 1000.0) {
  SnrCalibrationKey key;
  key.mu_hz = p.mu_hz;
  key.amp_mod_depth = p.amp_mod_depth;
  key.amp_mod_hz = p.amp_mod_hz;
  key.fs = fs;
  return key;
}

// Oscillation amplitude that puts the resting-state SNR at p.snr_db.
inline double calibrated_mu_amplitude(const SubjectParams& p, double fs = 1000.0) {
  return p.pink_noise_uv * SnrCalibrator::shared_ratio(calibration_key(p, fs), p.snr_db);
}

inline MuGenParams scalp_gen_params(const SubjectParams& p, double duration_s, double fs = 1000.0) {
  MuGenParams g;
  g.mu_hz = p.mu_hz;
  g.mu_amp_uv = calibrated_mu_amplitude(p, fs);
  g.amp_mod_depth = p.amp_mod_depth;
  g.amp_mod_hz = p.amp_mod_hz;
  g.pink_noise_uv = p.pink_noise_uv;
  g.duration_s = duration_s;
  g.fs = fs;
  return g;
}

inline MuEegComponents emit_scalp_components(const SubjectState&, const SubjectParams& p, double duration_s,
                                             std::uint64_t seed, double fs = 1000.0) {
  return generate_mu_components(scalp_gen_params(p, duration_s, fs), seed, "C3");
}

inline TimeSeries emit_scalp_eeg(const SubjectState& s, const SubjectParams& p, double duration_s, std::uint64_t seed,
                                 double fs = 1000.0) {
  return emit_scalp_components(s, p, duration_s, seed, fs).total();
}

enum class RoiLayout { pair, sensorimotor8 };

struct RoiSignalSet {
  std::vector<TimeSeries> series;

  const TimeSeries& get(const std::string& label) const {
    for (const auto& ts : series)
      if (ts.label == label) return ts;
    throw ParameterError("RoiSignalSet: no ROI named " + label);
  }
  bool has(const std::string& label) const {
    return std::any_of(series.begin(), series.end(), [&](const TimeSeries& t) { return t.label == label; });
  }
};

inline const std::vector<std::string>& sensorimotor_rois() {
  static const std::vector<std::string> names{"SMA_L", "M1_L", "PM_L", "S1_L", "SMA_R", "M1_R", "PM_R", "S1_R"};
  return names;
}

// Source signals. M1_L = coupling * SMA_L delayed by fc_lag_rad at mu_hz plus
// independent pink noise; the other sensorimotor ROIs (layout sensorimotor8)
// carry fixed weak lagged copies of SMA_L or M1_L plus their own noise.
inline RoiSignalSet emit_roi_signals(const SubjectState& s, const SubjectParams& p, double duration_s, double fs,
                                     std::uint64_t seed, RoiLayout layout = RoiLayout::pair) {
  if (!(duration_s > 0.0)) throw ParameterError("emit_roi_signals: duration_s must be > 0");
  const auto delay = static_cast<std::size_t>(std::llround(p.fc_lag_rad / (kTwoPi * p.mu_hz) * fs));
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));

  MuGenParams g = scalp_gen_params(p, static_cast<double>(n + delay) / fs, fs);
  const TimeSeries sma_full = generate_mu_eeg(g, derive_seed(seed, {1}), "SMA_L");

  auto slice = [&](const TimeSeries& src, std::size_t offset, std::string label) {
    TimeSeries t;
    t.fs = fs;
    t.label = std::move(label);
    t.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     src.samples.begin() + static_cast<std::ptrdiff_t>(offset + n));
    return t;
  };
  auto independent = [&](std::uint64_t tag) {
    Rng rng(derive_seed(seed, {tag}));
    return pink_noise(n, fs, p.pink_noise_uv * p.roi_noise_scale, rng);
  };

  RoiSignalSet out;
  TimeSeries sma = slice(sma_full, delay, "SMA_L");
  TimeSeries sma_lagged = slice(sma_full, 0, "lagged");
  TimeSeries m1;
  m1.fs = fs;
  m1.label = "M1_L";
  m1.samples = independent(2);
  for (std::size_t i = 0; i < n; ++i) m1.samples[i] += s.coupling * sma_lagged.samples[i];
  out.series.push_back(sma);
  out.series.push_back(m1);

  if (layout == RoiLayout::sensorimotor8) {
    struct Link {
      const char* name;
      const TimeSeries* source;
      double weight;
    };
    const Link links[] = {{"PM_L", &sma, 0.15}, {"S1_L", &m1, 0.15}, {"SMA_R", &sma, 0.10},
                          {"M1_R", &m1, 0.10},  {"PM_R", &sma, 0.05}, {"S1_R", &m1, 0.05}};
    std::uint64_t tag = 3;
    for (const auto& link : links) {
      TimeSeries t;
      t.fs = fs;
      t.label = link.name;
      t.samples = independent(tag++);
      for (std::size_t i = delay; i < n; ++i) t.samples[i] += link.weight * link.source->samples[i - delay];
      out.series.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort draws

// Best-Fisher von Mises sampler.
inline double sample_von_mises(double mu, double kappa, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (kappa < 1e-8) return wrap_phase(mu + kTwoPi * unit(rng) - kPi);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
    const double z = std::cos(kPi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = (u3 > 0.5 ? 1.0 : -1.0) * std::acos(f);
      return wrap_phase(mu + theta);
    }
  }
}

// Subject-level ground truth. Each session draws its own phi_opt around
// phi_center with concentration phi_kappa.
struct SubjectProfile {
  SubjectParams base;
  double phi_center = 0.0;
  double phi_kappa = 2.0;
  double snr_db_sd = 0.0;

  SubjectParams draw_session(Rng& rng) const {
    SubjectParams p = base;
    p.phi_opt = sample_von_mises(phi_center, phi_kappa, rng);
    if (snr_db_sd > 0.0) p.snr_db = base.snr_db + snr_db_sd * std::normal_distribution<double>(0.0, 1.0)(rng);
    return p;
  }
};

}  // namespace cltms
