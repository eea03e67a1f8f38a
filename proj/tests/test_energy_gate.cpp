#include "tapkit/energy_gate.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "tapkit/synth.hpp"

using namespace tapkit;
using Catch::Approx;

namespace {
constexpr double kPi = 3.14159265358979323846;

EnergySeries series(std::vector<double> energies) {
  EnergySeries e;
  e.energies = std::move(energies);
  e.window_len = 4;
  e.hop = 4;
  for (std::size_t i = 0; i < e.energies.size(); ++i) e.window_starts.push_back(i * 4);
  return e;
}

Spectrum flat_spectrum(double value, std::size_t bins = 513, double fs = 44100.0) {
  Spectrum s;
  s.delta_f = fs / (2.0 * (bins - 1));
  for (std::size_t k = 0; k < bins; ++k) {
    s.freqs.push_back(k * s.delta_f);
    s.psd.push_back(value);
  }
  return s;
}
}  // namespace

TEST_CASE("partition_by_energy") {
  SECTION("hand percentile case: [0,0,0,0,10,10], 50/90") {
    std::vector<std::size_t> low, high;
    partition_by_energy(series({0, 0, 0, 0, 10, 10}), 50, 90, low, high);
    REQUIRE(low == std::vector<std::size_t>{0, 1, 2, 3});
    REQUIRE(high == std::vector<std::size_t>{4, 5});
  }
  SECTION("constant energies: ties belong to both sets") {
    std::vector<std::size_t> low, high;
    partition_by_energy(series({3, 3, 3, 3}), 25, 75, low, high);
    REQUIRE(low == std::vector<std::size_t>{0, 1, 2, 3});
    REQUIRE(high == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SECTION("errors") {
    std::vector<std::size_t> low, high;
    REQUIRE_THROWS_AS(partition_by_energy(series({1}), 25, 75, low, high), DataError);
    REQUIRE_THROWS_AS(partition_by_energy(series({1, 2}), 75, 25, low, high),
                      std::invalid_argument);
  }
}

TEST_CASE("select_band") {
  SECTION("flat spectrum has no -20 dB crossing") {
    REQUIRE_THROWS_AS(select_band(flat_spectrum(1e-6)), DataError);
  }

  SECTION("piecewise step: f_min lands at the step edge") {
    Spectrum s = flat_spectrum(1e-4);
    // 40 dB lower above 500 Hz
    for (std::size_t k = 0; k < s.freqs.size(); ++k)
      if (s.freqs[k] > 500.0) s.psd[k] = 1e-8;
    const auto result = select_band(s);
    // crossing within one smoothed span of the edge
    REQUIRE(result.band.f_min_hz > 500.0 - 10 * s.delta_f);
    REQUIRE(result.band.f_min_hz < 500.0 + 10 * s.delta_f);
    REQUIRE(result.band.f_max_hz > result.band.f_min_hz);
    // the tail above the step is exactly flat, so the band closes right there
    REQUIRE(result.band.f_max_hz < 1500.0);
    REQUIRE_FALSE(result.f_max_at_nyquist);
  }

  SECTION("spectral content above f_min defers f_max past it") {
    Spectrum s = flat_spectrum(1e-9);
    // low-frequency shoulder
    for (std::size_t k = 0; k < s.freqs.size(); ++k)
      if (s.freqs[k] < 250.0) s.psd[k] = 1e-4;
    // a mode at 1.8 kHz: the flat valley between shoulder and mode must not
    // close the band early
    for (std::size_t k = 0; k < s.freqs.size(); ++k) {
      const double d = s.freqs[k] - 1800.0;
      s.psd[k] += 1e-4 * std::exp(-d * d / (2.0 * 120.0 * 120.0));
    }
    const auto result = select_band(s);
    REQUIRE(result.band.f_min_hz > 200.0);
    REQUIRE(result.band.f_min_hz < 1700.0);
    REQUIRE(result.band.f_max_hz > 1800.0);
  }

  SECTION("synthetic session with a known 1.8 kHz mode") {
    // One-mode tap over a quiet floor with platform vibration: the band must
    // exclude the sub-200 Hz region the rumble and rattle occupy and keep
    // the mode.
    SessionSpec spec;
    spec.taps_healthy = 30;
    spec.taps_unhealthy = 0;
    spec.noise_floor_db = -60.0;
    spec.vibration = VibrationProfile::level(5.0, 40.0);
    spec.tap_interval_s = 0.713;
    spec.seed = 7;
    TapTemplate mode;
    mode.modal_freqs_hz = {1800.0};
    mode.modal_damping = {0.03};
    mode.modal_phases_rad = {1.2};
    mode.base_amplitude = 0.08;
    const Session session = synth_session(spec, mode, mode);

    const EnergySeries energy = short_time_energy(session.signal, 2048, 512);
    std::vector<std::size_t> low, high;
    partition_by_energy(energy, 25, 75, low, high);
    std::vector<std::size_t> high_starts;
    for (std::size_t i : high) high_starts.push_back(energy.window_starts[i]);
    const Spectrum psd = welch_psd_windows(session.signal, high_starts, 2048, 1024);

    const auto result = select_band(psd);
    REQUIRE(result.band.f_min_hz > 200.0);
    REQUIRE(result.band.f_min_hz < 1800.0);
    REQUIRE(result.band.f_max_hz > 1800.0 * 1.03);
  }
}

TEST_CASE("band_energy") {
  Spectrum s = flat_spectrum(2e-5);
  SECTION("full axis equals the plain integral") {
    double total = 0.0;
    for (double v : s.psd) total += v * s.delta_f;
    REQUIRE(band_energy(s, {0.0, s.freqs.back()}) == Approx(total));
  }
  SECTION("zero psd gives zero") {
    REQUIRE(band_energy(flat_spectrum(0.0), {100.0, 5000.0}) == 0.0);
  }
  SECTION("two tones, band keeps only the inside one") {
    const int fs = 16384;
    const std::size_t n = 16384 * 4;
    AudioSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(n);
    const double f1 = 1000.0, f2 = 5000.0, a1 = 0.4, a2 = 0.6;
    for (std::size_t i = 0; i < n; ++i)
      sig.samples[i] = a1 * std::sin(2.0 * kPi * f1 * i / fs) +
                       a2 * std::sin(2.0 * kPi * f2 * i / fs);
    const Spectrum psd = welch_psd(sig, 2048, 0.5, Taper::Hann);
    const double inside = band_energy(psd, {500.0, 2000.0});
    REQUIRE(inside == Approx(a1 * a1 / 2.0).epsilon(1e-3));
  }
  SECTION("monotone in band growth") {
    const auto spec = flat_spectrum(1e-4);
    const double e1 = band_energy(spec, {1000.0, 2000.0});
    const double e2 = band_energy(spec, {500.0, 4000.0});
    REQUIRE(e2 >= e1);
  }
  SECTION("band outside support") {
    REQUIRE_THROWS_AS(band_energy(s, {100.0, 30000.0}), std::invalid_argument);
  }
}

TEST_CASE("band_limited_spl") {
  const int fs = 44100;
  const BandSelection band{300.0, 4000.0};

  SECTION("in-band sine: constant spl at 20 log10(A/sqrt(2))") {
    AudioSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(fs * 2);
    const double amp = 0.5;
    // tone near the geometric band center, where the skirts contribute
    // well under the 0.1 dB budget
    for (std::size_t i = 0; i < sig.samples.size(); ++i)
      sig.samples[i] = amp * std::sin(2.0 * kPi * 1100.0 * i / fs);
    const SplSeries spl = band_limited_spl(sig, BandSelection{200.0, 6000.0}, 2048, 512, 1.0);
    const double expected = 20.0 * std::log10(amp / std::sqrt(2.0));
    for (std::size_t i = 4; i + 4 < spl.spl_db.size(); ++i)
      REQUIRE(spl.spl_db[i] == Approx(expected).margin(0.1));
  }

  SECTION("zero signal clamps at the floor") {
    AudioSignal sig{std::vector<double>(fs, 0.0), fs};
    const SplSeries spl = band_limited_spl(sig, band, 2048, 512, 1.0);
    for (double v : spl.spl_db) REQUIRE(v == Approx(kSplFloorDb));
  }

  SECTION("far out-of-band sine is attenuated to the floor") {
    // Band [100, 500]: a 16 kHz sine sits five octaves above the lowpass
    // edge; the doubled 2nd-order rolloff puts it under the SPL floor.
    AudioSignal sig;
    sig.sample_rate = fs;
    sig.samples.resize(fs * 2);
    for (std::size_t i = 0; i < sig.samples.size(); ++i)
      sig.samples[i] = 0.5 * std::sin(2.0 * kPi * 16000.0 * i / fs);
    const SplSeries spl = band_limited_spl(sig, BandSelection{100.0, 500.0}, 2048, 512, 1.0);
    for (std::size_t i = 4; i + 4 < spl.spl_db.size(); ++i)
      REQUIRE(spl.spl_db[i] <= kSplFloorDb + 6.0);
  }
}

TEST_CASE("baseline_stats") {
  SplSeries spl;
  SECTION("constant -40 dB") {
    spl.spl_db = {-40, -40, -40, -40};
    const auto stats = baseline_stats(spl, {0, 1, 2, 3});
    REQUIRE(stats.mean_spl_db == Approx(-40.0));
    REQUIRE(stats.std_spl_db == Approx(0.0));
  }
  SECTION("two values {-50, -40}") {
    spl.spl_db = {-50, -40, 0, 0};
    const auto stats = baseline_stats(spl, {0, 1});
    REQUIRE(stats.mean_spl_db == Approx(-45.0));
    REQUIRE(stats.std_spl_db == Approx(5.0));
  }
  SECTION("empty low set") {
    spl.spl_db = {-40};
    REQUIRE_THROWS_AS(baseline_stats(spl, {}), std::invalid_argument);
  }
}

TEST_CASE("derive_thresholds") {
  SECTION("degenerate std falls back to the minimum margin") {
    BaselineStats stats;
    stats.mean_spl_db = -40.0;
    stats.std_spl_db = 0.0;
    const auto t = derive_thresholds(stats, {3.0, 12.0, 1.0, 6.0});
    REQUIRE(t.lambda_min == Approx(0.01));
    REQUIRE(t.lambda_max == Approx(std::pow(10.0, -34.0 / 20.0)).epsilon(1e-6));
  }
  SECTION("round trip: 20 log10(lambda_min / p_ref) recovers spl_min") {
    BaselineStats stats;
    stats.mean_spl_db = -37.3;
    stats.std_spl_db = 2.1;
    const auto t = derive_thresholds(stats, {3.0, 12.0, 1.0, 6.0});
    REQUIRE(20.0 * std::log10(t.lambda_min / 1.0) ==
            Approx(stats.mean_spl_db + 3.0 * stats.std_spl_db).margin(1e-12));
  }
  SECTION("closed-form: mean -40, std 3, k 3/12") {
    BaselineStats stats;
    stats.mean_spl_db = -40.0;
    stats.std_spl_db = 3.0;
    const auto t = derive_thresholds(stats, {3.0, 12.0, 1.0, 6.0});
    REQUIRE(t.lambda_min == Approx(0.02818).epsilon(1e-3));
    REQUIRE(t.lambda_max == Approx(0.6310).epsilon(1e-3));
  }
  SECTION("ordering always holds") {
    for (double std_db : {0.0, 0.1, 1.0, 5.0, 20.0}) {
      BaselineStats stats;
      stats.mean_spl_db = -55.0;
      stats.std_spl_db = std_db;
      const auto t = derive_thresholds(stats, {3.0, 12.0, 1.0, 6.0});
      REQUIRE(t.lambda_min < t.lambda_max);
    }
  }
  SECTION("parameter validation") {
    BaselineStats stats;
    REQUIRE_THROWS_AS(derive_thresholds(stats, {12.0, 3.0, 1.0, 6.0}), std::invalid_argument);
  }
}

TEST_CASE("scaling covariance: gain shifts spl and scales thresholds exactly") {
  const int fs = 44100;
  AudioSignal sig;
  sig.sample_rate = fs;
  sig.samples.resize(fs);
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    sig.samples[i] = 0.1 * std::sin(2.0 * kPi * 900.0 * i / fs) +
                     0.02 * std::sin(2.0 * kPi * 2100.0 * i / fs + 0.4);

  const double gain = 3.7;
  AudioSignal scaled = sig;
  for (double& v : scaled.samples) v *= gain;

  const BandSelection band{300.0, 4000.0};
  const SplSeries a = band_limited_spl(sig, band, 2048, 512, 1.0);
  const SplSeries b = band_limited_spl(scaled, band, 2048, 512, 1.0);
  const double shift = 20.0 * std::log10(gain);
  for (std::size_t i = 0; i < a.spl_db.size(); ++i)
    REQUIRE(b.spl_db[i] - a.spl_db[i] == Approx(shift).margin(1e-9));

  std::vector<std::size_t> all(a.spl_db.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto ta = derive_thresholds(baseline_stats(a, all), {3.0, 12.0, 1.0, 6.0});
  const auto tb = derive_thresholds(baseline_stats(b, all), {3.0, 12.0, 1.0, 6.0});
  REQUIRE(tb.lambda_min / ta.lambda_min == Approx(gain).epsilon(1e-9));
  REQUIRE(tb.lambda_max / ta.lambda_max == Approx(gain).epsilon(1e-9));
}

TEST_CASE("gate report json round trip") {
  GateReport r;
  r.band = {312.5, 5031.25};
  r.thresholds = {0.0123, 0.873};
  r.baseline = {-51.7, 4.4, 25.0, 75.0};
  const auto j = gate_report_to_json(r);
  REQUIRE(j.at("f_min_hz").get<double>() == 312.5);
  const GateReport back = gate_report_from_json(j);
  REQUIRE(back.band.f_max_hz == Approx(r.band.f_max_hz));
  REQUIRE(back.thresholds.lambda_min == Approx(r.thresholds.lambda_min));
  REQUIRE(back.baseline.std_spl_db == Approx(r.baseline.std_spl_db));
}
