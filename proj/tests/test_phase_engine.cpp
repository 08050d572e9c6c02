#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "cltms/phase_engine.hpp"

using namespace cltms;
using Catch::Approx;

namespace {

TimeSeries tone(double hz, std::size_t n, double phase0 = 0.0, double amp = 1.0, double fs = 1000.0) {
  TimeSeries t;
  t.fs = fs;
  t.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.samples[i] = amp * std::cos(kTwoPi * hz * i / fs + phase0);
  return t;
}

double tone_phase(double hz, std::int64_t i, double phase0 = 0.0, double fs = 1000.0) {
  return wrap_phase(kTwoPi * hz * static_cast<double>(i) / fs + phase0);
}

PredictorConfig fixed_reference(double hz) {
  PredictorConfig cfg;
  cfg.reference_hz = hz;
  return cfg;
}

}  // namespace

TEST_CASE("phase bins", "[phase_engine]") {
  CHECK(PhaseBin(0).center() == Approx(-7.0 * kPi / 8.0));
  CHECK(PhaseBin(3).center() == Approx(-kPi / 8.0));
  CHECK(PhaseBin(4).center() == Approx(kPi / 8.0));
  CHECK(PhaseBin(7).center() == Approx(7.0 * kPi / 8.0));
  CHECK(bin_of(0.01).index == 4);
  CHECK(bin_of(-0.01).index == 3);
  CHECK(bin_of(kPi).index == 7);
  CHECK_THROWS_AS(PhaseBin::checked(8), ParameterError);
  CHECK_THROWS_AS(PhaseBin::checked(-1), ParameterError);
  for (int k = 0; k < PhaseBin::kCount; ++k) CHECK(bin_of(PhaseBin(k).center()).index == k);
  CHECK(bin_distance(PhaseBin(0), PhaseBin(7)) == 1);
  CHECK(bin_distance(PhaseBin(1), PhaseBin(5)) == 4);
  CHECK(circular_error(kPi - 0.1, -kPi + 0.1) == Approx(-0.2));
}

TEST_CASE("fit_ar recovers a pure tone exactly", "[phase_engine]") {
  const auto x = tone(10.0, 500, 0.3);
  const double w = kTwoPi * 10.0 / 1000.0;
  for (auto method : {ArMethod::forward_backward, ArMethod::levinson}) {
    const auto m = fit_ar(x, 2, method);
    REQUIRE(m.order() == 2);
    if (method == ArMethod::forward_backward) {
      CHECK(m.coeffs[0] == Approx(2.0 * std::cos(w)).margin(1e-9));
      CHECK(m.coeffs[1] == Approx(-1.0).margin(1e-9));
    } else {
      // Yule-Walker on a noiseless tone is biased but always stable.
      CHECK(ar_is_stable(m.coeffs));
    }
  }
}

TEST_CASE("fit_ar on white noise gives near-zero coefficients", "[phase_engine]") {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  TimeSeries x;
  for (int i = 0; i < 20000; ++i) x.samples.push_back(g(rng));
  const auto m = fit_ar(x, 30);
  for (double c : m.coeffs) CHECK(std::abs(c) < 0.05);
  CHECK(m.noise_var == Approx(1.0).epsilon(0.05));
}

TEST_CASE("fit_ar errors", "[phase_engine]") {
  TimeSeries flat;
  flat.samples.assign(500, 3.0);
  CHECK_THROWS_AS(fit_ar(flat, 30), DegenerateInputError);
  CHECK_THROWS_AS(fit_ar(tone(10.0, 90), 30), ParameterError);
  CHECK_THROWS_AS(fit_ar(tone(10.0, 500), 0), ParameterError);
}

TEST_CASE("forward_predict", "[phase_engine]") {
  const auto x = tone(10.0, 500, -0.4);
  const auto m = fit_ar(x, 2);
  SECTION("zero horizon returns the input") {
    const auto y = forward_predict(m, x, 0.0);
    CHECK(y.samples == x.samples);
  }
  SECTION("100 ms continuation of a tone") {
    const auto y = forward_predict(m, x, 100.0);
    REQUIRE(y.size() == 600);
    for (std::size_t i = 500; i < 600; ++i) CHECK(std::abs(y.samples[i] - std::cos(tone_phase(10.0, i, -0.4))) < 1e-6);
  }
  SECTION("negative horizon is rejected") { CHECK_THROWS_AS(forward_predict(m, x, -1.0), ParameterError); }
  SECTION("unstable model is rejected") {
    ArModel bad;
    bad.coeffs = {2.5, -1.0};
    CHECK_THROWS_AS(forward_predict(bad, x, 10.0), InstabilityError);
  }
}

TEST_CASE("schedule_trigger examples", "[phase_engine]") {
  const auto x = tone(10.0, 3000);
  SECTION("target -pi/8 on a 10 Hz tone") {
    const auto plan = schedule_trigger(x, 2000, PhaseBin(3), fixed_reference(10.0));
    CHECK(plan.decision_sample == 1999);
    CHECK(plan.fire_sample > plan.decision_sample);
    CHECK(plan.fire_sample - plan.decision_sample <= 100);
    CHECK(std::abs(circular_error(tone_phase(10.0, plan.fire_sample), PhaseBin(3).center())) <= kTwoPi * 10.0 / 1000.0);
  }
  SECTION("delay never exceeds one period plus rounding") {
    for (int k = 0; k < PhaseBin::kCount; ++k)
      for (std::size_t pos : {1000u, 1013u, 1077u, 1500u}) {
        const auto plan = schedule_trigger(x, pos, PhaseBin(k), fixed_reference(10.0));
        CHECK(plan.fire_sample - plan.decision_sample >= 1);
        CHECK(plan.fire_sample - plan.decision_sample <= 101);
      }
  }
  SECTION("zero input cannot trigger") {
    TimeSeries z;
    z.samples.assign(2000, 0.0);
    CHECK_THROWS_AS(schedule_trigger(z, 2000, PhaseBin(0), PredictorConfig{}), NoTriggerError);
  }
  SECTION("too little history is a parameter error") {
    CHECK_THROWS_AS(schedule_trigger(x, 500, PhaseBin(0), PredictorConfig{}), ParameterError);
  }
}

TEST_CASE("noiseless triggering lands inside the target bin", "[phase_engine][property]") {
  // 8 bins x 64 starting phases; estimated frequency and AR forecast variants.
  for (auto method : {PhaseMethod::sinusoid_fit, PhaseMethod::ar_forecast}) {
    PredictorConfig cfg;
    cfg.phase_method = method;
    for (int j = 0; j < 64; ++j) {
      const double phase0 = -kPi + kTwoPi * j / 64.0;
      const auto x = tone(10.0, 1000, phase0);
      for (int k = 0; k < PhaseBin::kCount; ++k) {
        const auto plan = schedule_trigger(x, 1000, PhaseBin(k), cfg);
        const double err = circular_error(tone_phase(10.0, plan.fire_sample, phase0), PhaseBin(k).center());
        CHECK(std::abs(err) < kPi / 8.0);
        CHECK(bin_of(tone_phase(10.0, plan.fire_sample, phase0)).index == k);
      }
    }
  }
}

TEST_CASE("PhaseEngine streaming matches schedule_trigger", "[phase_engine]") {
  const auto x = tone(11.0, 4000, 0.7);
  PhaseEngine eng(fixed_reference(11.0), 1000.0);
  CHECK_FALSE(eng.ready());
  CHECK_THROWS_AS(eng.estimate(), ParameterError);
  for (std::size_t i = 0; i < 2500; i += 100) eng.push(std::span<const double>(x.samples).subspan(i, 100));
  REQUIRE(eng.ready());
  const auto a = eng.schedule(PhaseBin(6));
  const auto b = schedule_trigger(x, 2500, PhaseBin(6), fixed_reference(11.0));
  CHECK(a.fire_sample == b.fire_sample);
  CHECK(a.predicted_phase == Approx(b.predicted_phase));
  eng.reset();
  CHECK(eng.position() == 0);
}

TEST_CASE("PredictorConfig validation", "[phase_engine]") {
  PredictorConfig cfg;
  CHECK_NOTHROW(cfg.validate(1000.0));
  cfg.edge_trim_ms = 600.0;
  CHECK_THROWS_AS(cfg.validate(1000.0), ParameterError);
  cfg = {};
  cfg.reference_hz = 20.0;
  CHECK_THROWS_AS(cfg.validate(1000.0), ParameterError);
  cfg = {};
  cfg.band = {8.0, 600.0};
  CHECK_THROWS_AS(cfg.validate(1000.0), ParameterError);
}

TEST_CASE("targeting_accuracy examples", "[phase_engine]") {
  SECTION("perfect targeting") {
    const std::vector<double> t{0.1, 1.0, -2.0}, o{0.1, 1.0, -2.0};
    const auto r = targeting_accuracy(t, o);
    CHECK(r.circular_mean == Approx(0.0).margin(1e-12));
    CHECK(r.resultant_length == Approx(1.0));
    CHECK(r.circular_sd == Approx(0.0).margin(1e-6));
  }
  SECTION("constant offset across the wrap") {
    const std::vector<double> t{kPi - 0.05, 0.0}, o{-kPi + 0.15, 0.2};
    const auto r = targeting_accuracy(t, o);
    CHECK(r.circular_mean == Approx(0.2));
    CHECK(r.errors[0] == Approx(0.2));
  }
  SECTION("opposite errors cancel") {
    const std::vector<double> t{0.0, 0.0}, o{0.5, -0.5};
    const auto r = targeting_accuracy(t, o);
    CHECK(r.resultant_length == Approx(std::cos(0.5)));
    CHECK(r.circular_sd == Approx(std::sqrt(-2.0 * std::log(std::cos(0.5)))));
  }
  SECTION("flagged trials are skipped") {
    const std::vector<double> t{0.0, 0.0}, o{0.5, 3.0};
    const bool flags[] = {false, true};
    const auto r = targeting_accuracy(t, o, flags);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.circular_mean == Approx(0.5));
    const bool all[] = {true, true};
    CHECK_THROWS_AS(targeting_accuracy(t, o, all), ParameterError);
  }
  SECTION("rotation invariance of R") {
    Rng rng(3);
    std::normal_distribution<double> g(0.0, 0.6);
    std::vector<double> t(200), o(200), o2(200);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = PhaseBin(static_cast<int>(i % 8)).center();
      o[i] = wrap_phase(t[i] + g(rng));
      o2[i] = wrap_phase(o[i] + 1.234);
    }
    CHECK(targeting_accuracy(t, o).resultant_length == Approx(targeting_accuracy(t, o2).resultant_length));
  }
}
