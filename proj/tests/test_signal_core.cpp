#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "cltms/signal_core.hpp"
#include "cltms/virtual_subject.hpp"

using namespace cltms;
using Catch::Approx;

namespace {

TimeSeries tone(double hz, double seconds, double amp = 1.0, double fs = 1000.0, double phase = 0.0) {
  TimeSeries t;
  t.fs = fs;
  const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
  for (std::size_t i = 0; i < n; ++i) t.samples.push_back(amp * std::cos(kTwoPi * hz * i / fs + phase));
  return t;
}

double rms(const std::vector<double>& x, std::size_t skip = 0) {
  double s = 0.0;
  for (std::size_t i = skip; i + skip < x.size(); ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(x.size() - 2 * skip));
}

MuGenParams pure_tone_params() {
  MuGenParams p;
  p.mu_amp_uv = 1.0;
  p.pink_noise_uv = 0.0;
  p.amp_mod_depth = 0.0;
  p.mu_hz = 10.0;
  p.fs = 1000.0;
  p.duration_s = 1.0;
  return p;
}

}  // namespace

TEST_CASE("wrap_phase maps into (-pi, pi]", "[signal_core]") {
  CHECK(wrap_phase(kPi) == Approx(kPi));
  CHECK(wrap_phase(-kPi) == Approx(kPi));
  CHECK(wrap_phase(3 * kTwoPi + 0.25) == Approx(0.25));
  for (double x = -20.0; x < 20.0; x += 0.37) {
    const double w = wrap_phase(x);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(std::remainder(w - x, kTwoPi) == Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("TimeSeries validation", "[signal_core]") {
  TimeSeries t;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t.samples = {1.0};
  t.fs = 0.0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t.fs = 1000.0;
  t.samples.push_back(std::nan(""));
  CHECK_THROWS_AS(t.validate(), ParameterError);
}

TEST_CASE("generate_mu_eeg noiseless tone advances 2*pi*10 rad/s", "[signal_core]") {
  const auto comps = generate_mu_components(pure_tone_params(), 4);
  REQUIRE(comps.mu.size() == 1000);
  const auto ts = comps.total();
  // A pure cosine: every sample matches the analytic model.
  for (std::size_t i = 0; i < ts.size(); ++i) CHECK(ts.samples[i] == Approx(std::cos(comps.analytic_phase(i))).margin(1e-9));
  const auto ph = unwrap(hilbert_phase(generate_mu_eeg(pure_tone_params(), 4), 8.0));
  // Least-squares slope over the interior.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t i = 100; i < 900; ++i) {
    const double t = i / 1000.0;
    sx += t, sy += ph[i], sxx += t * t, sxy += t * ph[i], n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == Approx(kTwoPi * 10.0).epsilon(1e-3));
}

TEST_CASE("generate_mu_eeg is deterministic and validates parameters", "[signal_core]") {
  MuGenParams p;
  p.duration_s = 5.0;
  const auto a = generate_mu_eeg(p, 99);
  const auto b = generate_mu_eeg(p, 99);
  const auto c = generate_mu_eeg(p, 100);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  MuGenParams bad = p;
  bad.duration_s = 0.0;
  CHECK_THROWS_AS(generate_mu_eeg(bad, 1), ParameterError);
  bad = p;
  bad.fs = 30.0;  // below 4 * mu_hz
  CHECK_THROWS_AS(generate_mu_eeg(bad, 1), ParameterError);
  bad = p;
  bad.amp_mod_depth = 1.0;
  CHECK_THROWS_AS(generate_mu_eeg(bad, 1), ParameterError);
}

TEST_CASE("pure pink noise has no mu peak", "[signal_core]") {
  MuGenParams p;
  p.mu_amp_uv = 0.0;
  p.pink_noise_uv = 1.0;
  p.duration_s = 300.0;
  double sum = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    const auto snr = estimate_snr(welch_psd(generate_mu_eeg(p, 1000 + s)));
    CHECK(std::abs(snr.snr_db) < 2.0);
    sum += snr.snr_db;
  }
  CHECK(std::abs(sum / seeds) < 1.0);
}

TEST_CASE("calibrated mu amplitude hits the requested SNR", "[signal_core]") {
  for (double target : {4.0, 10.0}) {
    SubjectParams sp;
    sp.snr_db = target;
    const MuGenParams g = scalp_gen_params(sp, 300.0);
    double sum = 0.0;
    const int seeds = 8;
    for (int s = 0; s < seeds; ++s) sum += estimate_snr(welch_psd(generate_mu_eeg(g, 50 + s))).snr_db;
    CHECK(sum / seeds == Approx(target).margin(0.3));
  }
}

TEST_CASE("apply_filter examples", "[signal_core]") {
  SECTION("10 Hz through 8-13 Hz bandpass keeps its amplitude") {
    FilterSpec spec{FilterKind::bandpass, 8.0, 13.0, 2};
    const auto x = tone(10.0, 10.0);
    const auto y = apply_filter(x, spec);
    REQUIRE(y.size() == x.size());
    const auto trim = edge_trim_samples(spec, x.fs);
    CHECK(rms(y.samples, trim) / rms(x.samples, trim) == Approx(1.0).margin(0.01));
  }
  SECTION("50 Hz through a 50 Hz notch is removed") {
    FilterSpec spec{FilterKind::notch, 48.0, 52.0, 2};
    const auto x = tone(50.0, 10.0);
    const auto y = apply_filter(x, spec);
    const auto trim = edge_trim_samples(spec, x.fs);
    CHECK(rms(y.samples, trim) / rms(x.samples, trim) < 0.01);
  }
  SECTION("DC offset is rejected by the 1-99 Hz bandpass") {
    FilterSpec spec{FilterKind::bandpass, 1.0, 99.0, 2};
    auto x = tone(10.0, 10.0);
    for (double& v : x.samples) v += 5.0;
    const auto y = apply_filter(x, spec);
    const auto trim = edge_trim_samples(spec, x.fs);
    double m = 0.0;
    for (std::size_t i = trim; i + trim < y.size(); ++i) m += y.samples[i];
    m /= static_cast<double>(y.size() - 2 * trim);
    CHECK(std::abs(m) < 0.01);
  }
  SECTION("band outside Nyquist is a parameter error") {
    FilterSpec spec{FilterKind::bandpass, 8.0, 600.0, 2};
    CHECK_THROWS_AS(apply_filter(tone(10.0, 1.0), spec), ParameterError);
  }
}

TEST_CASE("apply_filter is linear", "[signal_core][property]") {
  FilterSpec spec{FilterKind::bandpass, 1.0, 99.0, 2};
  Rng rng(8);
  TimeSeries x = tone(10.0, 4.0), y = tone(37.0, 4.0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : x.samples) v += g(rng);
  for (auto& v : y.samples) v += g(rng);
  const double a = 2.5, b = -0.75;
  TimeSeries z = x;
  for (std::size_t i = 0; i < z.size(); ++i) z.samples[i] = a * x.samples[i] + b * y.samples[i];
  const auto fx = apply_filter(x, spec), fy = apply_filter(y, spec), fz = apply_filter(z, spec);
  double scale = 0.0;
  for (double v : fz.samples) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(std::abs(fz.samples[i] - (a * fx.samples[i] + b * fy.samples[i])) <= 1e-9 * scale);
}

TEST_CASE("hilbert_phase conventions", "[signal_core]") {
  const auto x = tone(10.0, 2.0);
  const auto ph = hilbert_phase(x);
  // Peaks at whole periods, troughs at half periods (interior samples).
  CHECK(ph[1000] == Approx(0.0).margin(1e-3));
  CHECK(std::abs(ph[1050]) == Approx(kPi).margin(1e-3));

  SECTION("negation shifts phase by pi everywhere in the interior") {
    MuGenParams p;
    p.duration_s = 4.0;
    auto y = apply_filter(generate_mu_eeg(p, 3), FilterSpec{FilterKind::bandpass, 8.0, 13.0, 2});
    TimeSeries neg = y;
    for (auto& v : neg.samples) v = -v;
    const auto a = hilbert_phase(y), b = hilbert_phase(neg);
    for (std::size_t i = 200; i + 200 < a.size(); ++i)
      CHECK(std::abs(wrap_phase(a[i] - b[i] - kPi)) < 1e-9);
  }
}

TEST_CASE("welch_psd examples", "[signal_core]") {
  SECTION("unit tone peaks at its frequency") {
    const auto spec = welch_psd(tone(10.0, 20.0));
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.power_db.size(); ++k)
      if (spec.power_db[k] > spec.power_db[best]) best = k;
    CHECK(std::abs(spec.freqs[best] - 10.0) <= spec.df());
  }
  SECTION("white noise is flat") {
    Rng rng(12);
    std::normal_distribution<double> g(0.0, 1.0);
    TimeSeries w;
    for (int i = 0; i < 600000; ++i) w.samples.push_back(g(rng));
    CHECK(std::abs(spectral_slope_db_per_decade(welch_psd(w), 2.0, 200.0)) < 0.5);
  }
  SECTION("pink noise falls 10 dB per decade") {
    Rng rng(13);
    TimeSeries pn;
    pn.samples = pink_noise(600000, 1000.0, 10.0, rng);
    CHECK(spectral_slope_db_per_decade(welch_psd(pn), 2.0, 200.0) == Approx(-10.0).margin(0.5));
    double var = 0.0;
    for (double v : pn.samples) var += v * v;
    CHECK(std::sqrt(var / pn.size()) == Approx(10.0).epsilon(0.05));
  }
  SECTION("Parseval in linear units") {
    Rng rng(14);
    std::normal_distribution<double> g(0.0, 3.0);
    TimeSeries w;
    for (int i = 0; i < 200000; ++i) w.samples.push_back(g(rng));
    const auto spec = welch_psd(w);
    double total = 0.0;
    for (std::size_t k = 0; k < spec.freqs.size(); ++k) total += spec.power_linear(k) * spec.df();
    CHECK(total == Approx(9.0).epsilon(0.02));
  }
  SECTION("too-short input is a parameter error") {
    CHECK_THROWS_AS(welch_psd(tone(10.0, 1.0), 2.0), ParameterError);
    CHECK_THROWS_AS(welch_psd(tone(10.0, 1.0), 0.05), ParameterError);
  }
}

TEST_CASE("estimate_snr examples and invariants", "[signal_core]") {
  SECTION("definition: peak 30 dB over a 24 dB fit gives 6 dB") {
    // Flat 24 dB floor with one 30 dB bin at 10 Hz.
    SpectrumEstimate s;
    for (int k = 0; k <= 100; ++k) {
      s.freqs.push_back(k * 0.5);
      s.power_db.push_back(k == 20 ? 30.0 : 24.0);
    }
    const auto snr = estimate_snr(s);
    CHECK(snr.peak_hz == 10.0);
    CHECK(snr.peak_db == 30.0);
    CHECK(snr.noise_fit_db == Approx(24.0).margin(1e-9));
    CHECK(snr.snr_db == Approx(6.0).margin(1e-9));
  }
  MuGenParams p;
  p.duration_s = 120.0;
  p.mu_amp_uv = 20.0;
  p.amp_mod_depth = 0.0;
  const auto comps = generate_mu_components(p, 21);
  const auto base = estimate_snr(welch_psd(comps.total()));
  SECTION("snr equals peak minus fit exactly") { CHECK(base.snr_db == base.peak_db - base.noise_fit_db); }
  SECTION("scale invariance") {
    TimeSeries scaled = comps.total();
    for (auto& v : scaled.samples) v *= 7.3;
    CHECK(estimate_snr(welch_psd(scaled)).snr_db == Approx(base.snr_db).margin(1e-9));
  }
  SECTION("doubling the tone over fixed noise adds about 6 dB") {
    TimeSeries doubled = comps.noise;
    for (std::size_t i = 0; i < doubled.size(); ++i) doubled.samples[i] += 2.0 * comps.mu.samples[i];
    // Linear peak power grows 4x against a fixed floor; in dB that is +6 once
    // the peak dominates the floor.
    const auto hi = estimate_snr(welch_psd(doubled));
    CHECK(hi.snr_db - base.snr_db == Approx(6.0).margin(1.0));
  }
  SECTION("band outside the spectrum is a parameter error") {
    CHECK_THROWS_AS(estimate_snr(welch_psd(comps.total()), Band{8.0, 900.0}), ParameterError);
  }
}

TEST_CASE("TimeSeries CSV round trip", "[signal_core]") {
  TimeSeries a = tone(10.0, 0.2);
  a.label = "C3";
  a.t0 = 1.25;
  std::stringstream ss;
  write_csv(ss, a);
  const std::string text = ss.str();
  CHECK(text.rfind("# fs=1000 label=C3", 0) == 0);
  const auto back = read_csv(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].label == "C3");
  CHECK(back[0].fs == 1000.0);
  CHECK(back[0].samples == a.samples);
}
