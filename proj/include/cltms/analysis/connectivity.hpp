#pragma once

// Functional connectivity between ROI source signals: band-averaged imaginary
// coherence from non-overlapping epochs, and the Post30 - Baseline change
// analysis across sessions with Holm correction over the whole family.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "cltms/analysis/stats.hpp"
#include "cltms/errors.hpp"
#include "cltms/fft.hpp"
#include "cltms/rl_agent.hpp"
#include "cltms/signal_core.hpp"
#include "cltms/virtual_subject.hpp"

namespace cltms {

struct CoherenceSpectrum {
  std::vector<double> freqs;
  std::vector<double> imcoh;
};

// Im(Sxy) / sqrt(Sxx Syy) per frequency, with Sxy = <X conj(Y)> averaged over
// Hann-windowed epochs. Positive values mean y lags x.
inline CoherenceSpectrum imaginary_coherence_spectrum(const TimeSeries& x, const TimeSeries& y, double epoch_s = 2.0) {
  if (x.size() != y.size()) throw ParameterError("imaginary_coherence: series differ in length");
  if (x.fs != y.fs) throw ParameterError("imaginary_coherence: sampling rates differ");
  x.validate();
  y.validate();
  const auto len = static_cast<std::size_t>(std::llround(epoch_s * x.fs));
  if (len < 16 || x.size() < len) throw ParameterError("imaginary_coherence: series shorter than one epoch");
  std::vector<double> w(len);
  for (std::size_t j = 0; j < len; ++j) w[j] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(len));

  const std::size_t nbins = len / 2 + 1;
  std::vector<std::complex<double>> sxy(nbins);
  std::vector<double> sxx(nbins, 0.0), syy(nbins, 0.0);
  std::vector<double> a(len), b(len);
  for (std::size_t start = 0; start + len <= x.size(); start += len) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      ma += x.samples[start + j];
      mb += y.samples[start + j];
    }
    ma /= static_cast<double>(len);
    mb /= static_cast<double>(len);
    for (std::size_t j = 0; j < len; ++j) {
      a[j] = (x.samples[start + j] - ma) * w[j];
      b[j] = (y.samples[start + j] - mb) * w[j];
    }
    const auto fa = fft::rfft(a);
    const auto fb = fft::rfft(b);
    for (std::size_t k = 0; k < nbins; ++k) {
      sxy[k] += fa[k] * std::conj(fb[k]);
      sxx[k] += std::norm(fa[k]);
      syy[k] += std::norm(fb[k]);
    }
  }
  CoherenceSpectrum out;
  out.freqs.resize(nbins);
  out.imcoh.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    out.freqs[k] = static_cast<double>(k) * x.fs / static_cast<double>(len);
    const double denom = std::sqrt(sxx[k] * syy[k]);
    out.imcoh[k] = denom > 0.0 ? std::clamp(sxy[k].imag() / denom, -1.0, 1.0) : 0.0;
  }
  return out;
}

// Mean imaginary coherence over the frequency bins inside band.
inline double imaginary_coherence(const TimeSeries& x, const TimeSeries& y, Band band, double epoch_s = 2.0) {
  const auto spec = imaginary_coherence_spectrum(x, y, epoch_s);
  double sum = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < spec.freqs.size(); ++k)
    if (band.contains(spec.freqs[k])) {
      sum += spec.imcoh[k];
      ++n;
    }
  if (n == 0) throw ParameterError("imaginary_coherence: band contains no frequency bins");
  return sum / n;
}

// Connectivity band: the individual mu peak +- 2 Hz.
inline Band individual_band(double peak_hz, double half_width_hz = 2.0) {
  return {peak_hz - half_width_hz, peak_hz + half_width_hz};
}

struct RoiPair {
  std::string a, b;
  std::string name() const { return a + "-" + b; }
};

inline std::vector<RoiPair> all_pairs(const RoiSignalSet& rois) {
  std::vector<RoiPair> out;
  for (std::size_t i = 0; i < rois.series.size(); ++i)
    for (std::size_t j = i + 1; j < rois.series.size(); ++j) out.push_back({rois.series[i].label, rois.series[j].label});
  return out;
}

// Per-session connectivity values for a list of pairs.
struct FcSessionValues {
  std::string session;
  Condition condition = Condition::increase;
  std::vector<RoiPair> pairs;
  std::vector<double> baseline, post30;
};

inline FcSessionValues fc_session_values(std::string session, Condition c, const RoiSignalSet& baseline,
                                         const RoiSignalSet& post30, const std::vector<RoiPair>& pairs, Band band) {
  FcSessionValues v;
  v.session = std::move(session);
  v.condition = c;
  v.pairs = pairs;
  for (const auto& p : pairs) {
    v.baseline.push_back(imaginary_coherence(baseline.get(p.a), baseline.get(p.b), band));
    v.post30.push_back(imaginary_coherence(post30.get(p.a), post30.get(p.b), band));
  }
  return v;
}

struct ConnectionResult {
  Condition condition = Condition::increase;
  RoiPair pair;
  std::size_t n = 0;
  double baseline = 0.0;  // mean over sessions
  double post30 = 0.0;
  double delta = 0.0;
  double t = 0.0;
  double p_raw = 1.0;
  double p_corrected = 1.0;
  bool significant = false;
};

// One two-sided one-sample t-test of the Post30 - Baseline deltas per
// (condition, connection); Holm over every test in the call.
inline std::vector<ConnectionResult> fc_change_analysis(const std::vector<FcSessionValues>& sessions,
                                                        const std::vector<Condition>& conditions,
                                                        const std::vector<RoiPair>& pairs, double alpha = 0.05) {
  std::vector<ConnectionResult> out;
  for (Condition c : conditions) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      std::vector<double> base, post, delta;
      for (const auto& s : sessions) {
        if (s.condition != c) continue;
        std::size_t idx = s.pairs.size();
        for (std::size_t j = 0; j < s.pairs.size(); ++j)
          if (s.pairs[j].a == pairs[k].a && s.pairs[j].b == pairs[k].b) idx = j;
        if (idx == s.pairs.size()) throw ParameterError("fc_change_analysis: session " + s.session + " lacks " + pairs[k].name());
        base.push_back(s.baseline[idx]);
        post.push_back(s.post30[idx]);
        delta.push_back(s.post30[idx] - s.baseline[idx]);
      }
      if (delta.size() < 2) continue;
      ConnectionResult r;
      r.condition = c;
      r.pair = pairs[k];
      r.n = delta.size();
      r.baseline = stats::mean(base);
      r.post30 = stats::mean(post);
      const auto t = stats::one_sample_t(delta);
      r.delta = t.mean;
      r.t = t.t;
      r.p_raw = t.p;
      out.push_back(r);
    }
  }
  std::vector<double> raw;
  for (const auto& r : out) raw.push_back(r.p_raw);
  const auto adj = stats::holm(raw);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].p_corrected = adj[i];
    out[i].significant = adj[i] < alpha;
  }
  return out;
}

}  // namespace cltms
