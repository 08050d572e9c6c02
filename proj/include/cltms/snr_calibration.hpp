#pragma once

// Maps a requested resting-state SNR (as measured by estimate_snr on a
// Welch spectrum) to the oscillation amplitude that produces it. The curve is
// measured, not modeled: for a fixed set of calibration seeds the three
// Welch cross terms of (r * mu_unit + noise) are accumulated once, so the
// spectrum for any ratio r = mu_amp / noise_rms is available in closed form.
// The returned ratio puts the median measured SNR across seeds on target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "cltms/signal_core.hpp"

namespace cltms {

struct SnrCalibrationKey {
  double mu_hz = 10.0;
  double amp_mod_depth = 0.3;
  double amp_mod_hz = 0.2;
  double fs = 1000.0;
  double duration_s = 300.0;
  double window_s = 2.0;
  double overlap = 0.5;
  int n_seeds = 256;  // median error about 0.015 dB at 4 dB

  auto tie() const {
    return std::tie(mu_hz, amp_mod_depth, amp_mod_hz, fs, duration_s, window_s, overlap, n_seeds);
  }
  bool operator<(const SnrCalibrationKey& o) const { return tie() < o.tie(); }
};

class SnrCalibrator {
 public:
  static constexpr std::uint64_t kCalibrationSeed = 0x5eed'ca1b'0000'0001ULL;

  explicit SnrCalibrator(const SnrCalibrationKey& key) : key_(key) {
    MuGenParams p;
    p.mu_hz = key.mu_hz;
    p.amp_mod_depth = key.amp_mod_depth;
    p.amp_mod_hz = key.amp_mod_hz;
    p.fs = key.fs;
    p.duration_s = key.duration_s;
    p.mu_amp_uv = 1.0;
    p.pink_noise_uv = 1.0;

    const auto len = static_cast<std::size_t>(std::llround(key.window_s * key.fs));
    const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len * (1.0 - key.overlap))));
    const std::size_t nbins = len / 2 + 1;
    std::vector<double> window(len);
    double wsum2 = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      window[j] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(len));
      wsum2 += window[j] * window[j];
    }
    freqs_.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) freqs_[k] = static_cast<double>(k) * key.fs / static_cast<double>(len);

    std::vector<double> sm(len), sn(len);
    for (int s = 0; s < key.n_seeds; ++s) {
      auto c = generate_mu_components(p, derive_seed(kCalibrationSeed, {static_cast<std::uint64_t>(s)}));
      Terms t{std::vector<double>(nbins), std::vector<double>(nbins), std::vector<double>(nbins)};
      std::size_t count = 0;
      for (std::size_t start = 0; start + len <= c.mu.size(); start += step, ++count) {
        double mm = 0.0, mn = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          mm += c.mu.samples[start + j];
          mn += c.noise.samples[start + j];
        }
        mm /= static_cast<double>(len);
        mn /= static_cast<double>(len);
        for (std::size_t j = 0; j < len; ++j) {
          sm[j] = (c.mu.samples[start + j] - mm) * window[j];
          sn[j] = (c.noise.samples[start + j] - mn) * window[j];
        }
        auto fm = fft::rfft(sm);
        auto fn = fft::rfft(sn);
        for (std::size_t k = 0; k < nbins; ++k) {
          t.mm[k] += std::norm(fm[k]);
          t.mn[k] += 2.0 * std::real(fm[k] * std::conj(fn[k]));
          t.nn[k] += std::norm(fn[k]);
        }
      }
      const double norm = 1.0 / (key.fs * wsum2 * static_cast<double>(count));
      for (std::size_t k = 0; k < nbins; ++k) {
        const bool edge = k == 0 || ((len % 2 == 0) && k == len / 2);
        const double f = norm * (edge ? 1.0 : 2.0);
        t.mm[k] *= f;
        t.mn[k] *= f;
        t.nn[k] *= f;
      }
      terms_.push_back(std::move(t));
    }
  }

  // Measured SNR for each calibration seed at amplitude ratio r.
  std::vector<double> measured_snr(double ratio, Band search = {8.0, 13.0}) const {
    std::vector<double> out;
    out.reserve(terms_.size());
    SpectrumEstimate spec;
    spec.freqs = freqs_;
    spec.window_s = key_.window_s;
    spec.power_db.resize(freqs_.size());
    for (const auto& t : terms_) {
      for (std::size_t k = 0; k < freqs_.size(); ++k) {
        const double p = ratio * ratio * t.mm[k] + ratio * t.mn[k] + t.nn[k];
        spec.power_db[k] = 10.0 * std::log10(std::max(p, 1e-300));
      }
      out.push_back(estimate_snr(spec, search).snr_db);
    }
    return out;
  }

  double median_snr(double ratio) const {
    auto v = measured_snr(ratio);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }

  // Smallest ratio whose median measured SNR reaches target_db (0 when the
  // pure-noise median already exceeds the target).
  double ratio_for_snr(double target_db) const {
    if (median_snr(0.0) >= target_db) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (median_snr(hi) < target_db) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e6) throw ParameterError("SnrCalibrator: target SNR unreachable");
    }
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (median_snr(mid) < target_db ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  const SnrCalibrationKey& key() const { return key_; }

  // Process-wide cache; calibration for a key runs once.
  static const SnrCalibrator& shared(const SnrCalibrationKey& key) {
    static std::mutex mutex;
    static std::map<SnrCalibrationKey, std::unique_ptr<SnrCalibrator>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[key];
    if (!slot) slot = std::make_unique<SnrCalibrator>(key);
    return *slot;
  }

  // Memoized ratio_for_snr on the shared calibrator.
  static double shared_ratio(const SnrCalibrationKey& key, double target_db) {
    const auto& cal = shared(key);
    static std::mutex mutex;
    static std::map<std::pair<SnrCalibrationKey, double>, double> memo;
    {
      std::lock_guard lock(mutex);
      if (auto it = memo.find({key, target_db}); it != memo.end()) return it->second;
    }
    const double r = cal.ratio_for_snr(target_db);
    std::lock_guard lock(mutex);
    memo[{key, target_db}] = r;
    return r;
  }

 private:
  struct Terms {
    std::vector<double> mm, mn, nn;
  };
  SnrCalibrationKey key_;
  std::vector<double> freqs_;
  std::vector<Terms> terms_;
};

}  // namespace cltms
