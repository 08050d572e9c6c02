#pragma once

// Synthetic EEG, zero-phase IIR filtering, Welch spectra, SNR estimation and
// the analytic-signal phase used as ground truth throughout the simulator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cltms/errors.hpp"
#include "cltms/fft.hpp"
#include "cltms/random.hpp"
#include "cltms/text.hpp"

namespace cltms {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Wraps an angle to (-pi, pi].
inline double wrap_phase(double x) {
  double y = std::remainder(x, kTwoPi);
  if (y <= -kPi) y += kTwoPi;
  return y;
}

struct Band {
  double low_hz = 8.0;
  double high_hz = 13.0;
  bool contains(double f) const { return f >= low_hz && f <= high_hz; }
};

struct TimeSeries {
  std::vector<double> samples;  // uV
  double fs = 1000.0;           // Hz
  double t0 = 0.0;              // s
  std::string label;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) / fs; }

  void validate() const {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("TimeSeries: fs must be > 0");
    if (samples.empty()) throw ParameterError("TimeSeries: at least one sample required");
    for (double v : samples)
      if (!std::isfinite(v)) throw ParameterError("TimeSeries: non-finite sample in " + label);
  }
};

// ---------------------------------------------------------------------------
// Filtering

enum class FilterKind { bandpass, notch };

struct FilterSpec {
  FilterKind kind = FilterKind::bandpass;
  double low_hz = 1.0;
  double high_hz = 99.0;
  int order = 2;  // Butterworth prototype order; bandpass/bandstop doubles it

  void validate(double fs) const {
    if (order < 1 || order > 12) throw ParameterError("FilterSpec: order must be in [1, 12]");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0))
      throw ParameterError("FilterSpec: band must satisfy 0 < low < high < fs/2");
  }
};

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

// Cascade of second-order sections, direct form II transposed.
struct SosFilter {
  std::vector<Biquad> sections;
  double max_pole_radius = 0.0;

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(x.begin(), x.end());
    for (const auto& s : sections) {
      double z1 = 0.0, z2 = 0.0;
      for (double& v : y) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
    return y;
  }

  std::complex<double> response(double omega) const {
    const std::complex<double> zi = std::polar(1.0, -omega);
    std::complex<double> h = 1.0;
    for (const auto& s : sections)
      h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return h;
  }

  // Samples for the slowest pole to decay by 1/e.
  double time_constant_samples() const {
    if (max_pole_radius <= 0.0) return 0.0;
    return -1.0 / std::log(max_pole_radius);
  }
};

// Butterworth bandpass or bandstop via bilinear transform with prewarping.
inline SosFilter design_butterworth(const FilterSpec& spec, double fs) {
  spec.validate(fs);
  using cd = std::complex<double>;
  const int n = spec.order;
  const double w1 = 2.0 * fs * std::tan(kPi * spec.low_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * spec.high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);
  const double omega_c = 2.0 * std::atan(w0 / (2.0 * fs));

  std::vector<cd> analog;
  for (int k = 0; k < n; ++k) {
    const cd p = std::polar(1.0, kPi * (2.0 * k + n + 1) / (2.0 * n));
    const cd base = spec.kind == FilterKind::bandpass ? p * (bw / 2.0) : (bw / 2.0) / p;
    const cd disc = std::sqrt(base * base - w0 * w0);
    analog.push_back(base + disc);
    analog.push_back(base - disc);
  }

  std::vector<cd> upper;
  std::vector<double> real;
  SosFilter filt;
  for (const cd& s : analog) {
    const cd z = (2.0 * fs + s) / (2.0 * fs - s);
    filt.max_pole_radius = std::max(filt.max_pole_radius, std::abs(z));
    if (z.imag() > 1e-12) upper.push_back(z);
    else if (std::abs(z.imag()) <= 1e-12) real.push_back(z.real());
  }
  std::sort(real.begin(), real.end());

  Biquad num;
  if (spec.kind == FilterKind::bandpass) num = {1.0, 0.0, -1.0, 0, 0};
  else num = {1.0, -2.0 * std::cos(omega_c), 1.0, 0, 0};

  for (const cd& p : upper) {
    Biquad b = num;
    b.a1 = -2.0 * p.real();
    b.a2 = std::norm(p);
    filt.sections.push_back(b);
  }
  for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
    Biquad b = num;
    b.a1 = -(real[i] + real[i + 1]);
    b.a2 = real[i] * real[i + 1];
    filt.sections.push_back(b);
  }
  if (static_cast<int>(filt.sections.size()) != n)
    throw ParameterError("design_butterworth: unexpected pole configuration");

  const double ref = spec.kind == FilterKind::bandpass ? omega_c : 0.0;
  const double g = 1.0 / std::abs(filt.response(ref));
  filt.sections.front().b0 *= g;
  filt.sections.front().b1 *= g;
  filt.sections.front().b2 *= g;
  return filt;
}

// Forward-backward filtering with odd-reflection padding of about three time
// constants. Linear in x; output length equals input length.
inline std::vector<double> filtfilt(const SosFilter& filt, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return std::vector<double>(x.begin(), x.end());
  const auto want = static_cast<std::size_t>(std::ceil(3.0 * filt.time_constant_samples()));
  const std::size_t pad = std::min(n - 1, std::max<std::size_t>(want, 1));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto fwd = filt.apply(ext);
  std::reverse(fwd.begin(), fwd.end());
  auto back = filt.apply(fwd);
  std::reverse(back.begin(), back.end());
  return {back.begin() + static_cast<std::ptrdiff_t>(pad),
          back.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline TimeSeries apply_filter(const TimeSeries& ts, const FilterSpec& spec) {
  ts.validate();
  const SosFilter filt = design_butterworth(spec, ts.fs);
  TimeSeries out = ts;
  out.samples = filtfilt(filt, ts.samples);
  return out;
}

// Samples to discard at each end after zero-phase filtering (three time constants).
inline std::size_t edge_trim_samples(const FilterSpec& spec, double fs) {
  return static_cast<std::size_t>(std::ceil(3.0 * design_butterworth(spec, fs).time_constant_samples()));
}

// Linear-phase FIR bandpass: Hamming-windowed sinc with `order + 1` taps
// (order even), unit gain at the band center.
inline std::vector<double> design_fir_bandpass(Band band, double fs, std::size_t order) {
  if (order < 2 || order % 2) throw ParameterError("design_fir_bandpass: order must be even and >= 2");
  if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < fs / 2.0))
    throw ParameterError("design_fir_bandpass: need 0 < low < high < fs/2");
  const double f1 = band.low_hz / fs, f2 = band.high_hz / fs;
  const auto m = static_cast<double>(order) / 2.0;
  std::vector<double> h(order + 1);
  for (std::size_t i = 0; i <= order; ++i) {
    const double t = static_cast<double>(i) - m;
    const double ideal = t == 0.0 ? 2.0 * (f2 - f1)
                                  : (std::sin(kTwoPi * f2 * t) - std::sin(kTwoPi * f1 * t)) / (kPi * t);
    h[i] = ideal * (0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(order)));
  }
  const double wc = kTwoPi * 0.5 * (f1 + f2);
  std::complex<double> g = 0.0;
  for (std::size_t i = 0; i <= order; ++i) g += h[i] * std::polar(1.0, -wc * (static_cast<double>(i) - m));
  for (double& v : h) v /= std::abs(g);
  return h;
}

// Causal FIR output where the full kernel overlaps x; output[j] is centered
// on x[j + order/2] for a symmetric kernel. Length x.size() - order.
inline std::vector<double> fir_valid(std::span<const double> h, std::span<const double> x) {
  if (h.empty() || x.size() < h.size()) throw ParameterError("fir_valid: input shorter than kernel");
  const std::size_t n = x.size() - h.size() + 1;
  std::vector<double> y(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) acc += h[k] * x[j + k];
    y[j] = acc;
  }
  return y;
}

inline TimeSeries trim_edges(const TimeSeries& ts, std::size_t n) {
  if (2 * n >= ts.size()) throw ParameterError("trim_edges: trim consumes the whole series");
  TimeSeries out;
  out.fs = ts.fs;
  out.label = ts.label;
  out.t0 = ts.time_at(n);
  out.samples.assign(ts.samples.begin() + static_cast<std::ptrdiff_t>(n),
                     ts.samples.end() - static_cast<std::ptrdiff_t>(n));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic EEG

struct MuGenParams {
  double mu_hz = 10.0;
  double mu_amp_uv = 10.0;
  double amp_mod_depth = 0.3;  // in [0, 1)
  double amp_mod_hz = 0.2;
  double pink_noise_uv = 10.0;  // expected RMS of the 1/f component
  double duration_s = 1.0;
  double fs = 1000.0;

  void validate() const {
    if (!(duration_s > 0.0)) throw ParameterError("MuGenParams: duration_s must be > 0");
    if (!(fs > 0.0)) throw ParameterError("MuGenParams: fs must be > 0");
    if (!(mu_hz > 0.0) || fs < 4.0 * mu_hz) throw ParameterError("MuGenParams: need fs >= 4 * mu_hz");
    if (!(mu_amp_uv >= 0.0) || !(pink_noise_uv >= 0.0))
      throw ParameterError("MuGenParams: amplitudes must be >= 0");
    if (!(amp_mod_depth >= 0.0 && amp_mod_depth < 1.0))
      throw ParameterError("MuGenParams: amp_mod_depth must be in [0, 1)");
    if (!(amp_mod_hz >= 0.0)) throw ParameterError("MuGenParams: amp_mod_hz must be >= 0");
  }

  std::size_t sample_count() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration_s * fs)));
  }
};

// Smallest m >= n whose only prime factors are 2, 3 and 5.
inline std::size_t fft_friendly_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

// Spectrally shaped Gaussian noise with power ~ 1/f above fmin_hz (flat
// below), synthesized on an FFT-friendly length and truncated to n. Scaled
// so the expected variance equals rms_uv^2.
inline std::vector<double> pink_noise(std::size_t count, double fs, double rms_uv, Rng& rng,
                                      double fmin_hz = 0.5) {
  std::vector<double> out(count, 0.0);
  if (count < 2 || rms_uv == 0.0) return out;
  const std::size_t n = fft_friendly_size(count);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t half = n / 2;
  std::vector<std::complex<double>> spec(half + 1);
  double total = 0.0;
  for (std::size_t k = 1; k <= half; ++k) {
    const double f = std::max(static_cast<double>(k) * fs / static_cast<double>(n), fmin_hz);
    const double a = 1.0 / std::sqrt(f);
    const bool nyquist = (n % 2 == 0) && k == half;
    const double g1 = gauss(rng);
    const double g2 = gauss(rng);
    if (nyquist) {
      spec[k] = {a * g1, 0.0};
      total += a * a;
    } else {
      spec[k] = {a * g1 / std::sqrt(2.0), a * g2 / std::sqrt(2.0)};
      total += 2.0 * a * a;
    }
  }
  const double scale = rms_uv * static_cast<double>(n) / std::sqrt(total);
  for (auto& c : spec) c *= scale;
  auto full = fft::irfft(spec, n);
  full.resize(count);
  return full;
}

// The planted oscillation and the noise kept apart so the ground-truth phase
// of the oscillation is available to the simulator.
struct MuEegComponents {
  TimeSeries mu;
  TimeSeries noise;
  double phase0 = 0.0;  // rad at sample 0
  double mu_hz = 10.0;

  double analytic_phase(std::size_t i) const {
    return wrap_phase(phase0 + kTwoPi * mu_hz * static_cast<double>(i) / mu.fs);
  }

  TimeSeries total() const {
    TimeSeries out = mu;
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += noise.samples[i];
    return out;
  }
};

inline MuEegComponents generate_mu_components(const MuGenParams& p, std::uint64_t seed,
                                              std::string label = "C3") {
  p.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> uphase(-kPi, kPi);
  const std::size_t n = p.sample_count();

  MuEegComponents c;
  c.mu_hz = p.mu_hz;
  c.phase0 = uphase(rng);
  const double psi1 = uphase(rng);
  const double psi2 = uphase(rng);

  c.mu.fs = c.noise.fs = p.fs;
  c.mu.label = label;
  c.noise.label = label;
  c.mu.samples.resize(n);
  const double w = kTwoPi * p.mu_hz / p.fs;
  const double wm1 = kTwoPi * p.amp_mod_hz / p.fs;
  const double wm2 = kTwoPi * p.amp_mod_hz * 0.618 / p.fs;
  // Phasors advanced by rotation, re-seeded from the closed form every block.
  using cd = std::complex<double>;
  const cd r0 = std::polar(1.0, w), r1 = std::polar(1.0, wm1), r2 = std::polar(1.0, wm2);
  cd z0, z1, z2;
  for (std::size_t i = 0; i < n; ++i) {
    if ((i & 511) == 0) {
      const double t = static_cast<double>(i);
      z0 = std::polar(1.0, w * t + c.phase0);
      z1 = std::polar(1.0, wm1 * t + psi1);
      z2 = std::polar(1.0, wm2 * t + psi2);
    }
    const double m = 0.5 * (z1.imag() + z2.imag());
    c.mu.samples[i] = p.mu_amp_uv * (1.0 + p.amp_mod_depth * m) * z0.real();
    z0 *= r0;
    z1 *= r1;
    z2 *= r2;
  }
  c.noise.samples = pink_noise(n, p.fs, p.pink_noise_uv, rng);
  return c;
}

inline TimeSeries generate_mu_eeg(const MuGenParams& p, std::uint64_t seed, std::string label = "C3") {
  return generate_mu_components(p, seed, std::move(label)).total();
}

// ---------------------------------------------------------------------------
// Analytic signal

inline std::vector<std::complex<double>> analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  auto half = fft::rfft(x);
  std::vector<std::complex<double>> full(n, 0.0);
  full[0] = half[0];
  for (std::size_t k = 1; k < half.size(); ++k) {
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    full[k] = nyquist ? half[k] : 2.0 * half[k];
  }
  fft::transform(full, true);
  return full;
}

// Instantaneous phase in (-pi, pi]; 0 at oscillation peaks, pi at troughs.
inline std::vector<double> hilbert_phase(const TimeSeries& ts, double lowest_hz = 1.0) {
  ts.validate();
  if (static_cast<double>(ts.size()) < 2.0 * ts.fs / lowest_hz)
    throw ParameterError("hilbert_phase: series shorter than two cycles of the lowest frequency");
  auto z = analytic_signal(ts.samples);
  std::vector<double> phase(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) phase[i] = wrap_phase(std::arg(z[i]));
  return phase;
}

inline std::vector<double> unwrap(std::span<const double> phase) {
  std::vector<double> out(phase.begin(), phase.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    double d = wrap_phase(phase[i] - phase[i - 1]);
    out[i] = out[i - 1] + d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectra and SNR

struct SpectrumEstimate {
  std::vector<double> freqs;     // Hz, strictly increasing
  std::vector<double> power_db;  // 10*log10 of one-sided PSD (uV^2/Hz)
  double window_s = 2.0;

  double power_linear(std::size_t i) const { return std::pow(10.0, power_db[i] / 10.0); }
  double df() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

inline SpectrumEstimate welch_psd(const TimeSeries& ts, double window_s = 2.0, double overlap_frac = 0.5) {
  ts.validate();
  const auto len = static_cast<std::size_t>(std::llround(window_s * ts.fs));
  if (len < 64) throw ParameterError("welch_psd: window must hold at least 64 samples");
  if (ts.size() < len) throw ParameterError("welch_psd: input shorter than one window");
  if (!(overlap_frac >= 0.0 && overlap_frac < 1.0)) throw ParameterError("welch_psd: overlap must be in [0, 1)");
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len * (1.0 - overlap_frac))));

  std::vector<double> window(len);
  double wsum2 = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    window[j] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(len));
    wsum2 += window[j] * window[j];
  }

  const std::size_t nbins = len / 2 + 1;
  std::vector<double> acc(nbins, 0.0);
  std::vector<double> seg(len);
  std::size_t count = 0;
  for (std::size_t start = 0; start + len <= ts.size(); start += step, ++count) {
    double mean = 0.0;
    for (std::size_t j = 0; j < len; ++j) mean += ts.samples[start + j];
    mean /= static_cast<double>(len);
    for (std::size_t j = 0; j < len; ++j) seg[j] = (ts.samples[start + j] - mean) * window[j];
    auto spec = fft::rfft(seg);
    for (std::size_t k = 0; k < nbins; ++k) acc[k] += std::norm(spec[k]);
  }

  SpectrumEstimate out;
  out.window_s = window_s;
  out.freqs.resize(nbins);
  out.power_db.resize(nbins);
  const double norm = 1.0 / (ts.fs * wsum2 * static_cast<double>(count));
  for (std::size_t k = 0; k < nbins; ++k) {
    const bool edge = k == 0 || ((len % 2 == 0) && k == len / 2);
    const double p = acc[k] * norm * (edge ? 1.0 : 2.0);
    out.freqs[k] = static_cast<double>(k) * ts.fs / static_cast<double>(len);
    out.power_db[k] = 10.0 * std::log10(std::max(p, 1e-300));
  }
  return out;
}

struct SnrOptions {
  Band fit_range{2.0, 40.0};
  Band fit_exclude{7.0, 14.0};
};

struct SnrEstimate {
  double peak_hz = 0.0;
  double peak_db = 0.0;
  double noise_fit_db = 0.0;
  double snr_db = 0.0;
};

// Peak-minus-1/f-fit SNR. The fit is a straight line of power_db against
// log10(f) over opts.fit_range with opts.fit_exclude removed.
inline SnrEstimate estimate_snr(const SpectrumEstimate& spec, Band search = {8.0, 13.0},
                                const SnrOptions& opts = {}) {
  if (spec.freqs.empty()) throw ParameterError("estimate_snr: empty spectrum");
  if (!(search.low_hz < search.high_hz) || search.low_hz < spec.freqs.front() ||
      search.high_hz > spec.freqs.back())
    throw ParameterError("estimate_snr: search band outside spectrum range");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t nfit = 0;
  std::size_t best = spec.freqs.size();
  for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
    const double f = spec.freqs[k];
    if (opts.fit_range.contains(f) && !opts.fit_exclude.contains(f) && f > 0.0) {
      const double x = std::log10(f);
      sx += x;
      sy += spec.power_db[k];
      sxx += x * x;
      sxy += x * spec.power_db[k];
      ++nfit;
    }
    if (search.contains(f) && (best == spec.freqs.size() || spec.power_db[k] > spec.power_db[best])) best = k;
  }
  if (best == spec.freqs.size()) throw ParameterError("estimate_snr: no bins inside search band");
  if (nfit < 3) throw ParameterError("estimate_snr: too few bins for the noise fit");

  const double nf = static_cast<double>(nfit);
  const double slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / nf;

  SnrEstimate out;
  out.peak_hz = spec.freqs[best];
  out.peak_db = spec.power_db[best];
  out.noise_fit_db = intercept + slope * std::log10(out.peak_hz);
  out.snr_db = out.peak_db - out.noise_fit_db;
  return out;
}

// Peak frequency inside `search` refined by a parabola through the dB values
// of the peak bin and its neighbours.
inline double interpolate_peak_hz(const SpectrumEstimate& spec, Band search = {8.0, 13.0}) {
  std::size_t best = spec.freqs.size();
  for (std::size_t k = 0; k < spec.freqs.size(); ++k)
    if (search.contains(spec.freqs[k]) && (best == spec.freqs.size() || spec.power_db[k] > spec.power_db[best])) best = k;
  if (best == spec.freqs.size()) throw ParameterError("interpolate_peak_hz: no bins inside search band");
  if (best == 0 || best + 1 >= spec.freqs.size()) return spec.freqs[best];
  const double a = spec.power_db[best - 1], b = spec.power_db[best], c = spec.power_db[best + 1];
  const double denom = a - 2.0 * b + c;
  const double offset = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
  const double f = spec.freqs[best] + offset * (spec.freqs[best + 1] - spec.freqs[best]);
  return std::clamp(f, search.low_hz, search.high_hz);
}

// Straight-line fit of power_db against log10(f) within [lo, hi]; returns
// the slope in dB per decade.
inline double spectral_slope_db_per_decade(const SpectrumEstimate& spec, double lo, double hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < spec.freqs.size(); ++k) {
    const double f = spec.freqs[k];
    if (f < lo || f > hi || f <= 0.0) continue;
    const double x = std::log10(f);
    sx += x;
    sy += spec.power_db[k];
    sxx += x * x;
    sxy += x * spec.power_db[k];
    ++n;
  }
  if (n < 2) throw ParameterError("spectral_slope: fewer than two bins");
  const double nf = static_cast<double>(n);
  return (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// CSV: one or more blocks, each "# fs=<Hz> label=<name>" followed by
// "time_s,value_uv" rows.

inline void write_csv(std::ostream& os, std::span<const TimeSeries> series) {
  for (const auto& ts : series) {
    os << "# fs=" << text::format_double(ts.fs) << " label=" << ts.label << '\n';
    for (std::size_t i = 0; i < ts.size(); ++i)
      os << text::format_double(ts.time_at(i)) << ',' << text::format_double(ts.samples[i]) << '\n';
  }
}

inline void write_csv(std::ostream& os, const TimeSeries& ts) { write_csv(os, std::span(&ts, 1)); }

inline std::vector<TimeSeries> read_csv(std::istream& is) {
  std::vector<TimeSeries> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto view = text::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      TimeSeries ts;
      auto fs_pos = view.find("fs=");
      auto label_pos = view.find("label=");
      if (fs_pos == std::string_view::npos || label_pos == std::string_view::npos)
        throw ParseError("time-series header must be '# fs=<Hz> label=<name>'", lineno);
      auto fs_text = view.substr(fs_pos + 3, label_pos - fs_pos - 3);
      auto fs = text::parse_double(fs_text);
      if (!fs || !(*fs > 0.0)) throw ParseError("bad fs in time-series header", lineno, "fs");
      ts.fs = *fs;
      ts.label = std::string(view.substr(label_pos + 6));
      out.push_back(std::move(ts));
      continue;
    }
    if (out.empty()) throw ParseError("time-series data before header", lineno);
    auto cols = text::split(view, ',');
    if (cols.size() != 2) throw ParseError("expected two columns time_s,value_uv", lineno);
    auto t = text::parse_double(cols[0]);
    auto v = text::parse_double(cols[1]);
    if (!t || !v) throw ParseError("unparsable number", lineno);
    auto& ts = out.back();
    if (ts.samples.empty()) ts.t0 = *t;
    ts.samples.push_back(*v);
  }
  return out;
}

}  // namespace cltms
