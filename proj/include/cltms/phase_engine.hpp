#pragma once

// Real-time phase estimation and trigger scheduling. A window of past samples
// is band-passed with a causal linear-phase FIR whose group delay equals the
// edge trim. The phase at the newest sample comes either from a sinusoid fit
// over the filtered window or from AR extrapolation across the trimmed edge
// followed by the analytic phase. The trigger is the earliest future sample
// where the extrapolated phase hits the target bin center.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cltms/errors.hpp"
#include "cltms/signal_core.hpp"

namespace cltms {

// One of the eight phase targets; center(k) = -7pi/8 + k*pi/4.
struct PhaseBin {
  static constexpr int kCount = 8;
  int index = 0;

  constexpr PhaseBin() = default;
  constexpr explicit PhaseBin(int k) : index(k) {}

  double center() const { return -7.0 * kPi / 8.0 + index * (kPi / 4.0); }
  friend bool operator==(PhaseBin a, PhaseBin b) { return a.index == b.index; }

  static PhaseBin checked(int k) {
    if (k < 0 || k >= kCount) throw ParameterError("PhaseBin index out of range: " + std::to_string(k));
    return PhaseBin(k);
  }
};

// Bin whose center is nearest in circular distance.
inline PhaseBin bin_of(double phase) {
  const double w = wrap_phase(phase);
  int k = static_cast<int>(std::floor((w + kPi) / (kPi / 4.0)));
  return PhaseBin(std::clamp(k, 0, PhaseBin::kCount - 1));
}

// Wrapped difference a - b in (-pi, pi].
inline double circular_error(double a, double b) { return wrap_phase(a - b); }

// Circular distance in bins between two bins (0..4).
inline int bin_distance(PhaseBin a, PhaseBin b) {
  int d = std::abs(a.index - b.index) % PhaseBin::kCount;
  return std::min(d, PhaseBin::kCount - d);
}

// ---------------------------------------------------------------------------
// Autoregressive model

enum class ArMethod {
  // Normal equations with the forward-backward (modified covariance)
  // estimate of the autocorrelation matrix. Exact on pure tones.
  forward_backward,
  // Classic biased-autocorrelation Toeplitz system via Levinson-Durbin.
  levinson,
};

struct ArModel {
  std::vector<double> coeffs;  // x[n] = sum_k coeffs[k-1] * x[n-k]
  double noise_var = 0.0;

  int order() const { return static_cast<int>(coeffs.size()); }

  double predict_next(std::span<const double> history) const {
    double acc = 0.0;
    const std::size_t n = history.size();
    for (std::size_t k = 0; k < coeffs.size(); ++k) acc += coeffs[k] * history[n - 1 - k];
    return acc;
  }
};

// Schur-Cohn step-down on A(z/rho) with rho = 1 + tol: true when every pole of
// 1 - sum a_k z^-k lies within radius 1 + tol.
inline bool ar_is_stable(std::span<const double> coeffs, double tol = 1e-6) {
  const std::size_t p = coeffs.size();
  std::vector<double> a(p + 1);
  a[0] = 1.0;
  const double rho = 1.0 + tol;
  double scale = 1.0;
  for (std::size_t k = 1; k <= p; ++k) {
    scale /= rho;
    a[k] = -coeffs[k - 1] * scale;
  }
  for (std::size_t m = p; m >= 1; --m) {
    const double k = a[m];
    if (!std::isfinite(k) || std::abs(k) >= 1.0) return false;
    const double denom = 1.0 - k * k;
    std::vector<double> next(m);
    next[0] = 1.0;
    for (std::size_t i = 1; i < m; ++i) next[i] = (a[i] - k * a[m - i]) / denom;
    a.assign(next.begin(), next.end());
  }
  return true;
}

namespace detail {

inline void check_variance(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  if (!(var > 1e-14 * std::max(mean * mean, 1e-280)))
    throw DegenerateInputError("fit_ar: zero-variance window");
}

inline ArModel fit_levinson(std::span<const double> x, int order) {
  const std::size_t n = x.size();
  std::vector<double> r(order + 1, 0.0);
  for (int k = 0; k <= order; ++k) {
    double acc = 0.0;
    for (std::size_t i = static_cast<std::size_t>(k); i < n; ++i) acc += x[i] * x[i - k];
    r[k] = acc / static_cast<double>(n);
  }
  if (!(r[0] > 0.0)) throw DegenerateInputError("fit_ar: zero autocorrelation");
  std::vector<double> a(order + 1, 0.0), prev;
  a[0] = 1.0;
  double err = r[0];
  for (int m = 1; m <= order; ++m) {
    double acc = r[m];
    for (int i = 1; i < m; ++i) acc += a[i] * r[m - i];
    const double k = -acc / err;
    if (!(std::abs(k) < 1.0)) throw InstabilityError("fit_ar: reflection coefficient outside unit circle");
    prev = a;
    for (int i = 1; i < m; ++i) a[i] = prev[i] + k * prev[m - i];
    a[m] = k;
    err *= (1.0 - k * k);
    if (!(err > 0.0)) throw DegenerateInputError("fit_ar: singular autocorrelation matrix");
  }
  ArModel model;
  model.coeffs.resize(order);
  for (int k = 1; k <= order; ++k) model.coeffs[k - 1] = -a[k];
  model.noise_var = err;
  return model;
}

inline ArModel fit_forward_backward(std::span<const double> x, int order) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t p = order;
  // F(i,j) = sum_{t=p}^{n-1} x[t-i] x[t-j];  B(i,j) = sum_{t=0}^{n-1-p} x[t+i] x[t+j]
  Eigen::MatrixXd f(p + 1, p + 1), b(p + 1, p + 1);
  for (std::ptrdiff_t j = 0; j <= p; ++j) {
    double fa = 0.0, ba = 0.0;
    for (std::ptrdiff_t t = p; t < n; ++t) fa += x[t] * x[t - j];
    for (std::ptrdiff_t t = 0; t <= n - 1 - p; ++t) ba += x[t] * x[t + j];
    f(0, j) = f(j, 0) = fa;
    b(0, j) = b(j, 0) = ba;
  }
  for (std::ptrdiff_t i = 0; i < p; ++i)
    for (std::ptrdiff_t j = i; j < p; ++j) {
      double v = f(i, j) + x[p - 1 - i] * x[p - 1 - j] - x[n - 1 - i] * x[n - 1 - j];
      f(i + 1, j + 1) = f(j + 1, i + 1) = v;
      double w = b(i, j) - x[i] * x[j] + x[n - p + i] * x[n - p + j];
      b(i + 1, j + 1) = b(j + 1, i + 1) = w;
    }
  Eigen::MatrixXd c = f + b;
  Eigen::MatrixXd lhs = c.bottomRightCorner(p, p);
  Eigen::VectorXd rhs = c.col(0).tail(p);
  Eigen::LLT<Eigen::MatrixXd> llt(lhs);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) {
    // Rank-deficient (e.g. order above the number of spectral lines): a tiny
    // ridge picks a stable solution.
    const double ridge = 1e-10 * lhs.trace() / static_cast<double>(p);
    if (!(ridge > 0.0)) throw DegenerateInputError("fit_ar: singular autocorrelation matrix");
    lhs.diagonal().array() += ridge;
    llt.compute(lhs);
    if (llt.info() != Eigen::Success) throw DegenerateInputError("fit_ar: singular autocorrelation matrix");
  }
  Eigen::VectorXd a = llt.solve(rhs);

  ArModel model;
  model.coeffs.assign(a.data(), a.data() + p);
  const double energy = c(0, 0) - rhs.dot(a);
  model.noise_var = std::max(0.0, energy) / static_cast<double>(2 * (n - p));
  return model;
}

}  // namespace detail

// Fits an AR(order) model. Throws DegenerateInputError on zero-variance or
// singular input, InstabilityError when poles fall outside the unit circle.
inline ArModel fit_ar(std::span<const double> window, int order, ArMethod method = ArMethod::forward_backward) {
  if (order < 1) throw ParameterError("fit_ar: order must be >= 1");
  if (window.size() <= static_cast<std::size_t>(3 * order))
    throw ParameterError("fit_ar: window must be longer than 3 * order");
  for (double v : window)
    if (!std::isfinite(v)) throw ParameterError("fit_ar: non-finite sample");
  detail::check_variance(window);
  ArModel model = method == ArMethod::levinson ? detail::fit_levinson(window, order)
                                               : detail::fit_forward_backward(window, order);
  for (double c : model.coeffs)
    if (!std::isfinite(c)) throw DegenerateInputError("fit_ar: non-finite coefficients");
  if (!ar_is_stable(model.coeffs)) throw InstabilityError("fit_ar: model has poles outside the unit circle");
  return model;
}

inline ArModel fit_ar(const TimeSeries& window, int order, ArMethod method = ArMethod::forward_backward) {
  return fit_ar(std::span<const double>(window.samples), order, method);
}

// Recursive extrapolation appended to the window.
inline TimeSeries forward_predict(const ArModel& model, const TimeSeries& window, double horizon_ms) {
  if (!(horizon_ms >= 0.0)) throw ParameterError("forward_predict: horizon must be >= 0");
  if (!ar_is_stable(model.coeffs)) throw InstabilityError("forward_predict: unstable model");
  if (window.size() < model.coeffs.size()) throw ParameterError("forward_predict: window shorter than AR order");
  const auto steps = static_cast<std::size_t>(std::llround(horizon_ms * window.fs / 1000.0));
  TimeSeries out = window;
  out.samples.reserve(window.size() + steps);
  for (std::size_t s = 0; s < steps; ++s) out.samples.push_back(model.predict_next(out.samples));
  return out;
}

// ---------------------------------------------------------------------------
// Trigger scheduling

enum class PhaseMethod {
  // Least-squares sinusoid at the reference frequency over the whole filtered
  // window, continued to the newest sample.
  sinusoid_fit,
  // AR extrapolation across the trimmed edge, analytic phase at the newest sample.
  ar_forecast,
};

struct PredictorConfig {
  double window_ms = 1000.0;
  Band band{8.0, 13.0};
  int ar_order = 30;
  double horizon_ms = 128.0;
  double edge_trim_ms = 64.0;
  ArMethod method = ArMethod::forward_backward;
  PhaseMethod phase_method = PhaseMethod::sinusoid_fit;
  // Oscillation frequency assumed by the predictor; 0 estimates it from each window.
  double reference_hz = 0.0;

  std::size_t window_samples(double fs) const { return static_cast<std::size_t>(std::llround(window_ms * fs / 1000.0)); }
  std::size_t trim_samples(double fs) const { return static_cast<std::size_t>(std::llround(edge_trim_ms * fs / 1000.0)); }
  std::size_t horizon_samples(double fs) const { return static_cast<std::size_t>(std::llround(horizon_ms * fs / 1000.0)); }

  // Search limit for the crossing: one period at the band's low edge plus the horizon.
  std::size_t max_delay_samples(double fs) const {
    return static_cast<std::size_t>(std::ceil(fs / band.low_hz)) + horizon_samples(fs);
  }

  void validate(double fs) const {
    if (!(fs > 0.0)) throw ParameterError("PredictorConfig: fs must be > 0");
    if (!(window_ms > 0.0) || !(horizon_ms > 0.0) || !(edge_trim_ms >= 0.0))
      throw ParameterError("PredictorConfig: window/horizon must be > 0, trim >= 0");
    if (ar_order < 1) throw ParameterError("PredictorConfig: ar_order must be >= 1");
    const auto w = window_samples(fs);
    const auto e = trim_samples(fs);
    if (e < 1) throw ParameterError("PredictorConfig: edge_trim_ms must cover at least one sample");
    if (2 * e >= w) throw ParameterError("PredictorConfig: edge trim consumes the window");
    if (!(static_cast<double>(w) > 3.0 * ar_order) || w - 2 * e <= static_cast<std::size_t>(3 * ar_order))
      throw ParameterError("PredictorConfig: window must exceed 3 * ar_order samples after trimming");
    if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < fs / 2.0))
      throw ParameterError("PredictorConfig: need 0 < band.low < band.high < fs/2");
    if (!(reference_hz == 0.0 || band.contains(reference_hz)))
      throw ParameterError("PredictorConfig: reference_hz must be 0 or inside the band");
  }
};

struct TriggerPlan {
  PhaseBin target;
  std::int64_t decision_sample = 0;  // newest sample used for the decision
  std::int64_t fire_sample = 0;      // > decision_sample
  double predicted_phase = 0.0;      // rad at fire_sample
};

// Phase and angular rate at the newest sample of a window.
struct PhaseEstimate {
  double phase = 0.0;          // rad
  double omega = 0.0;          // rad per sample
  double amplitude = 0.0;      // oscillation amplitude estimate
};

// FIR kernel for the predictor: 2 * edge_trim + 1 taps.
inline std::vector<double> predictor_kernel(const PredictorConfig& cfg, double fs) {
  return design_fir_bandpass(cfg.band, fs, 2 * cfg.trim_samples(fs));
}

struct SinusoidFit {
  double c = 0.0, s = 0.0;  // y[j] ~ c cos(omega j) + s sin(omega j)
  double energy = 0.0;      // explained sum of squares

  double amplitude() const { return std::hypot(c, s); }
  double phase_at(double j, double omega) const { return wrap_phase(omega * j - std::atan2(s, c)); }
};

// Least-squares fit of a sinusoid at a fixed rate (rad/sample); the basis is
// generated by rotation.
inline SinusoidFit fit_sinusoid(std::span<const double> y, double omega) {
  double m00 = 0, m01 = 0, m11 = 0, r0 = 0, r1 = 0;
  const std::complex<double> step = std::polar(1.0, omega);
  std::complex<double> z = 1.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double c = z.real(), s = z.imag();
    m00 += c * c;
    m01 += c * s;
    m11 += s * s;
    r0 += c * y[j];
    r1 += s * y[j];
    z *= step;
    if ((j & 255) == 255) z /= std::abs(z);
  }
  const double det = m00 * m11 - m01 * m01;
  SinusoidFit fit;
  if (!(det > 1e-12 * std::max(1.0, m00 * m11))) return fit;
  fit.c = (m11 * r0 - m01 * r1) / det;
  fit.s = (m00 * r1 - m01 * r0) / det;
  fit.energy = fit.c * r0 + fit.s * r1;
  return fit;
}

// Rate (rad/sample) in the band maximizing the explained energy of a
// sinusoid fit: coarse grid, then golden-section refinement.
inline double peak_omega(std::span<const double> y, Band band, double fs) {
  const double lo = kTwoPi * band.low_hz / fs, hi = kTwoPi * band.high_hz / fs;
  const double span = static_cast<double>(y.size());
  const double grid = kPi / (4.0 * span);  // an eighth of the DFT bin spacing
  double best = lo, best_e = -1.0;
  for (double w = lo; w <= hi + 1e-15; w += grid) {
    const double e = fit_sinusoid(y, w).energy;
    if (e > best_e) {
      best_e = e;
      best = w;
    }
  }
  double a = std::max(lo, best - grid), b = std::min(hi, best + grid);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = fit_sinusoid(y, x1).energy, f2 = fit_sinusoid(y, x2).energy;
  for (int i = 0; i < 40; ++i) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = fit_sinusoid(y, x2).energy;
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = fit_sinusoid(y, x1).energy;
    }
  }
  return 0.5 * (a + b);
}

namespace detail {

inline PhaseEstimate ar_forecast_phase(std::vector<double> ext, std::size_t now, std::size_t h, double ref_omega,
                                       const PredictorConfig& cfg) {
  const ArModel model = fit_ar(ext, cfg.ar_order, cfg.method);
  ext.reserve(ext.size() + h);
  for (std::size_t s = 0; s < h; ++s) ext.push_back(model.predict_next(ext));

  auto z = analytic_signal(ext);
  PhaseEstimate est;
  est.phase = wrap_phase(std::arg(z[now]));
  est.amplitude = std::abs(z[now]);
  if (ref_omega > 0.0) {
    est.omega = ref_omega;
    return est;
  }
  // Least-squares slope of the unwrapped phase, away from the segment start.
  std::vector<double> ph(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) ph[i] = std::arg(z[i]);
  auto un = unwrap(ph);
  const std::size_t lo = ext.size() / 4;
  const std::size_t hi = std::min(ext.size() - 1, now + h / 2);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = lo; i <= hi; ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += un[i];
    sxx += x * x;
    sxy += x * un[i];
  }
  const double cnt = static_cast<double>(hi - lo + 1);
  est.omega = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return est;
}

}  // namespace detail

// Phase, rate and amplitude at the newest sample of `window` (its last
// window_ms worth of samples are used). Throws DegenerateInputError on flat
// input and InstabilityError on an unstable AR fit.
inline PhaseEstimate estimate_current_phase(std::span<const double> window, double fs, const PredictorConfig& cfg,
                                            std::span<const double> kernel) {
  const std::size_t w = cfg.window_samples(fs);
  const std::size_t e = cfg.trim_samples(fs);
  const std::size_t h = cfg.horizon_samples(fs);
  if (window.size() < w) throw ParameterError("estimate_current_phase: not enough samples");
  if (kernel.size() != 2 * e + 1) throw ParameterError("estimate_current_phase: kernel length must be 2 * trim + 1");
  auto recent = window.subspan(window.size() - w);
  for (double v : recent)
    if (!std::isfinite(v)) throw ParameterError("estimate_current_phase: non-finite sample");
  detail::check_variance(recent);
  std::vector<double> ext = fir_valid(kernel, recent);  // covers window samples [e, w - e)
  const std::size_t now = w - 1 - e;                     // newest sample, in ext coordinates
  const double ref = cfg.reference_hz > 0.0 ? kTwoPi * cfg.reference_hz / fs : 0.0;

  if (cfg.phase_method == PhaseMethod::ar_forecast) return detail::ar_forecast_phase(std::move(ext), now, h, ref, cfg);

  double rms = 0.0;
  for (double v : ext) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(ext.size()));
  if (!(rms > 0.0)) throw DegenerateInputError("estimate_current_phase: no in-band signal");
  const double omega = ref > 0.0 ? ref : peak_omega(ext, cfg.band, fs);
  const SinusoidFit fit = fit_sinusoid(ext, omega);
  if (!(fit.amplitude() > 1e-9 * rms)) throw DegenerateInputError("estimate_current_phase: no oscillation in window");
  PhaseEstimate est;
  est.omega = omega;
  est.phase = fit.phase_at(static_cast<double>(now), omega);
  est.amplitude = fit.amplitude();
  return est;
}

// Plans the earliest strictly-future sample at which the extrapolated phase
// equals target.center(). decision_sample is the absolute index of the
// newest sample in `window`.
inline TriggerPlan plan_trigger(const PhaseEstimate& est, std::int64_t decision_sample, PhaseBin target, double fs,
                                const PredictorConfig& cfg) {
  if (!std::isfinite(est.omega) || !(est.omega > 0.0) || !(est.amplitude > 0.0) || !std::isfinite(est.phase))
    throw NoTriggerError("no phase progression in window");
  const double delta = std::fmod(target.center() - est.phase + 4.0 * kPi, kTwoPi);
  double delay = delta / est.omega;
  auto k = static_cast<std::int64_t>(std::llround(delay));
  if (k < 1) {
    delay += kTwoPi / est.omega;
    k = static_cast<std::int64_t>(std::llround(delay));
  }
  if (k > static_cast<std::int64_t>(cfg.max_delay_samples(fs)))
    throw NoTriggerError("target crossing beyond prediction horizon");
  TriggerPlan plan;
  plan.target = target;
  plan.decision_sample = decision_sample;
  plan.fire_sample = decision_sample + k;
  plan.predicted_phase = wrap_phase(est.phase + est.omega * static_cast<double>(k));
  return plan;
}

// Streaming engine: holds the most recent window of samples; advanced by
// chunks. Deterministic given the pushed samples.
class PhaseEngine {
 public:
  PhaseEngine(const PredictorConfig& cfg, double fs)
      : cfg_(cfg), fs_(fs) {
    cfg_.validate(fs);
    kernel_ = predictor_kernel(cfg_, fs_);
  }

  void push(std::span<const double> chunk) {
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
    consumed_ += static_cast<std::int64_t>(chunk.size());
    const std::size_t keep = cfg_.window_samples(fs_);
    if (buffer_.size() > 2 * keep) buffer_.erase(buffer_.begin(), buffer_.end() - static_cast<std::ptrdiff_t>(keep));
  }

  void reset() {
    buffer_.clear();
    consumed_ = 0;
  }

  // Number of samples pushed so far; the newest sample has index position()-1.
  std::int64_t position() const { return consumed_; }
  bool ready() const { return buffer_.size() >= cfg_.window_samples(fs_); }

  PhaseEstimate estimate() const {
    if (!ready()) throw ParameterError("PhaseEngine: fewer than window_ms of samples available");
    return estimate_current_phase(buffer_, fs_, cfg_, kernel_);
  }

  // Throws NoTriggerError when the window yields no usable phase (flat,
  // degenerate or unstable fit, or a crossing beyond the horizon).
  TriggerPlan schedule(PhaseBin target) const {
    PhaseEstimate est;
    try {
      est = estimate();
    } catch (const DegenerateInputError& e) {
      throw NoTriggerError(std::string("degenerate window: ") + e.what());
    } catch (const InstabilityError& e) {
      throw NoTriggerError(std::string("unstable AR fit: ") + e.what());
    }
    return plan_trigger(est, consumed_ - 1, target, fs_, cfg_);
  }

  const PredictorConfig& config() const { return cfg_; }
  double fs() const { return fs_; }

 private:
  PredictorConfig cfg_;
  double fs_;
  std::vector<double> kernel_;
  std::vector<double> buffer_;
  std::int64_t consumed_ = 0;
};

// Plans a trigger using samples [0, position) of a stream.
inline TriggerPlan schedule_trigger(const TimeSeries& stream, std::size_t position, PhaseBin target,
                                    const PredictorConfig& cfg) {
  if (position > stream.size()) throw ParameterError("schedule_trigger: position beyond stream");
  const std::size_t w = cfg.window_samples(stream.fs);
  if (position < w) throw ParameterError("schedule_trigger: fewer than window_ms of samples available");
  PhaseEngine engine(cfg, stream.fs);
  engine.push(std::span<const double>(stream.samples).subspan(position - w, w));
  TriggerPlan plan = engine.schedule(target);
  const auto shift = static_cast<std::int64_t>(position - w);
  plan.decision_sample += shift;
  plan.fire_sample += shift;
  return plan;
}

// ---------------------------------------------------------------------------
// Targeting accuracy

struct TargetingReport {
  std::vector<double> errors;  // wrapped oracle - target, per unflagged trial
  double circular_mean = 0.0;
  double circular_sd = 0.0;
  double resultant_length = 0.0;
};

// Circular statistics of (oracle phase at fire - target center). Flagged
// trials are skipped.
inline TargetingReport targeting_accuracy(std::span<const double> target_centers, std::span<const double> oracle_phases,
                                          std::span<const bool> flagged = {}) {
  if (target_centers.size() != oracle_phases.size()) throw ParameterError("targeting_accuracy: size mismatch");
  TargetingReport rep;
  double c = 0.0, s = 0.0;
  for (std::size_t i = 0; i < target_centers.size(); ++i) {
    if (!flagged.empty() && flagged[i]) continue;
    const double e = circular_error(oracle_phases[i], target_centers[i]);
    rep.errors.push_back(e);
    c += std::cos(e);
    s += std::sin(e);
  }
  if (rep.errors.empty()) throw ParameterError("targeting_accuracy: no unflagged trials");
  const double n = static_cast<double>(rep.errors.size());
  rep.resultant_length = std::min(1.0, std::hypot(c, s) / n);
  rep.circular_mean = wrap_phase(std::atan2(s, c));
  rep.circular_sd = rep.resultant_length >= 1.0 ? 0.0 : std::sqrt(-2.0 * std::log(rep.resultant_length));
  return rep;
}

}  // namespace cltms
