#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/filter.hpp"
#include "tapkit/segmenter.hpp"
#include "tapkit/signal.hpp"

namespace tapkit {

// Modal recipe for one tile condition. A debonded tile rings lower, longer
// and louder than a well-bonded one; the defaults below encode that contrast.
struct TapTemplate {
  Condition condition{Condition::healthy};
  std::vector<double> modal_freqs_hz;
  std::vector<double> modal_damping;  // dimensionless decay ratios in (0, 1)
  std::vector<double> modal_phases_rad;
  double base_amplitude{0.5};
  double duration_s{0.12};
  double jitter{0.03};  // relative spread on frequencies and amplitude
};

inline TapTemplate healthy_template() {
  TapTemplate t;
  t.condition = Condition::healthy;
  t.modal_freqs_hz = {1800.0, 3400.0};
  t.modal_damping = {0.03, 0.05};
  t.modal_phases_rad = {1.2, 1.6};
  t.base_amplitude = 0.5;
  return t;
}

inline TapTemplate unhealthy_template() {
  TapTemplate t;
  t.condition = Condition::unhealthy;
  t.modal_freqs_hz = {700.0, 1400.0};
  t.modal_damping = {0.015, 0.03};
  t.modal_phases_rad = {0.8, 2.4};
  t.base_amplitude = 0.7;
  return t;
}

// Platform oscillation: per-axis sinusoids (roll, pitch, yaw) at a common
// frequency. A zero-amplitude profile is the no-motion baseline.
struct VibrationProfile {
  double amplitude_deg[3]{0.0, 0.0, 0.0};
  double frequency_hz{0.5};
  double duration_s{90.0};
  double phase_deg[3]{0.0, 0.0, 0.0};

  static VibrationProfile level(double deg, double duration_s = 90.0) {
    VibrationProfile p;
    p.amplitude_deg[0] = p.amplitude_deg[1] = p.amplitude_deg[2] = deg;
    p.duration_s = duration_s;
    return p;
  }

  double max_amplitude_deg() const {
    return std::max({amplitude_deg[0], amplitude_deg[1], amplitude_deg[2]});
  }
};

struct SessionSpec {
  std::size_t taps_healthy{96};
  std::size_t taps_unhealthy{97};
  double tap_interval_s{0.713};
  double lead_in_s{2.0};
  double noise_floor_db{-52.0};  // dBFS RMS of the broadband floor
  // Slow amplitude modulation of the floor (ambient character); gives the
  // quiet-window SPL a realistic spread instead of a near-constant value.
  double noise_mod_depth{0.75};
  double noise_mod_hz{0.3};
  // Room ambience: band-limited low-frequency noise, present at every
  // vibration level, with its own independent slow modulation. This is what
  // dominates the spectrum below a few hundred hertz in a lab recording.
  double ambient_rms{0.003};
  double ambient_low_hz{25.0};
  double ambient_high_hz{220.0};
  double ambient_mod_depth{0.8};
  double ambient_mod_hz{0.17};
  // Low-frequency bed amplitude per degree of platform motion.
  double rumble_per_deg{0.011};
  // Structure-borne rattle: impulsive low-frequency knocks from the moving
  // rig. Rate and amplitude grow with the commanded angle; at rest there are
  // none. These are the events the amplitude gate has to reject.
  double rattle_rate_per_deg_hz{0.25};
  double rattle_amp_per_deg{0.25};
  double rattle_amp_cap{0.85};
  double rattle_low_hz{40.0};
  double rattle_high_hz{90.0};
  double coupling_per_deg{0.12};
  double gain_floor{0.2};
  int sample_rate{44100};
  std::uint64_t seed{42};
  VibrationProfile vibration;
};

struct GroundTruthEvent {
  std::size_t index{0};
  Condition condition{Condition::healthy};
  double strike_gain{1.0};
};

// Instantaneous angular magnitude: RMS over the three axes.
inline double vibration_angle_deg(const VibrationProfile& p, double t) {
  const double pi = 3.14159265358979323846;
  double acc = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double th = p.amplitude_deg[a] *
                      std::sin(2.0 * pi * p.frequency_hz * t + p.phase_deg[a] * pi / 180.0);
    acc += th * th;
  }
  return std::sqrt(acc / 3.0);
}

// Strike-energy loss model: platform tilt robs the hammer of impact energy in
// proportion to the instantaneous angle, clamped to a floor. Exactly 1 when
// the platform is still.
inline double impact_modulation(const VibrationProfile& vibration, double t, double coupling_per_deg,
                                double gain_floor = 0.2) {
  if (!(coupling_per_deg >= 0.0)) throw std::invalid_argument("impact_modulation: coupling must be >= 0");
  if (vibration.max_amplitude_deg() == 0.0) return 1.0;
  const double theta = vibration_angle_deg(vibration, t);
  return std::clamp(1.0 - coupling_per_deg * theta, gain_floor, 1.0);
}

namespace detail {

// Deterministic N(0,1) via Box-Muller; std::normal_distribution is not
// pinned across standard library implementations.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    const double pi = 3.14159265358979323846;
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    have_ = true;
    return r * std::cos(2.0 * pi * u2);
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 rng_;
  bool have_{false};
  double spare_{0.0};
};

}  // namespace detail

// One strike: a sum of exponentially decaying modes, peak-normalized to
// strike_gain * base_amplitude. The seed drives the +-jitter on frequencies
// and amplitude and a small phase wobble.
inline std::vector<double> synth_tap(const TapTemplate& tmpl, double strike_gain,
                                     std::uint64_t seed, int sample_rate) {
  if (!(strike_gain >= 0.0)) throw std::invalid_argument("synth_tap: strike_gain must be >= 0");
  if (tmpl.modal_freqs_hz.size() != tmpl.modal_damping.size() ||
      tmpl.modal_freqs_hz.size() != tmpl.modal_phases_rad.size())
    throw std::invalid_argument("synth_tap: modal parameter lists must have equal length");
  for (double f : tmpl.modal_freqs_hz)
    if (!(f > 0.0) || f >= 0.5 * sample_rate)
      throw std::invalid_argument("synth_tap: modal frequency outside (0, Nyquist)");
  for (double z : tmpl.modal_damping)
    if (!(z > 0.0 && z < 1.0)) throw std::invalid_argument("synth_tap: damping ratio outside (0, 1)");

  const std::size_t n = static_cast<std::size_t>(tmpl.duration_s * sample_rate);
  std::vector<double> wave(n, 0.0);
  if (n == 0 || strike_gain == 0.0) return std::vector<double>(n, 0.0);

  detail::Gaussian rng(seed);
  const double pi = 3.14159265358979323846;
  const double dt = 1.0 / static_cast<double>(sample_rate);
  // One frequency multiplier per strike: the tile's modes shift together
  // (one resonator, one boundary condition), they do not wander separately.
  const double freq_scale = 1.0 + tmpl.jitter * (2.0 * rng.uniform() - 1.0);
  for (std::size_t m = 0; m < tmpl.modal_freqs_hz.size(); ++m) {
    const double f = tmpl.modal_freqs_hz[m] * freq_scale;
    const double zeta = tmpl.modal_damping[m];
    const double phase = tmpl.modal_phases_rad[m] + 0.04 * (2.0 * rng.uniform() - 1.0);
    const double decay = 2.0 * pi * f * zeta;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      wave[i] += std::exp(-decay * t) * std::sin(2.0 * pi * f * t + phase);
    }
  }

  double peak = 0.0;
  for (double v : wave) peak = std::max(peak, std::abs(v));
  const double amp_jitter = 1.0 + tmpl.jitter * (2.0 * rng.uniform() - 1.0);
  const double target = strike_gain * tmpl.base_amplitude * amp_jitter;
  if (peak > 0.0) {
    const double scale = target / peak;
    for (double& v : wave) v *= scale;
  }
  return wave;
}

struct Session {
  AudioSignal signal;
  std::vector<GroundTruthEvent> truth;
  // Peak positions of injected vibration artifacts (rattle knocks), for
  // gate-effectiveness checks.
  std::vector<std::size_t> artifact_indices;
};

// Assembles a full recording: alternating-class taps on a regular grid, each
// scaled by the impact modulation at its strike time, over a modulated
// broadband noise floor plus a sub-2 Hz rumble bed proportional to the
// platform amplitude. Bit-identical for identical spec and templates.
inline Session synth_session(const SessionSpec& spec, const TapTemplate& healthy,
                             const TapTemplate& unhealthy) {
  const std::size_t total_taps = spec.taps_healthy + spec.taps_unhealthy;
  if (total_taps == 0) throw std::invalid_argument("synth_session: no taps requested");
  if (spec.sample_rate <= 0) throw std::invalid_argument("synth_session: sample_rate must be > 0");

  const double needed_s = spec.lead_in_s * 2.0 +
                          static_cast<double>(total_taps - 1) * spec.tap_interval_s +
                          std::max(healthy.duration_s, unhealthy.duration_s);
  if (needed_s > spec.vibration.duration_s)
    throw DataError("synth_session: taps exceed the session duration (" +
                    std::to_string(needed_s) + " s needed, " +
                    std::to_string(spec.vibration.duration_s) + " s available)");

  const std::size_t n = static_cast<std::size_t>(spec.vibration.duration_s * spec.sample_rate);
  Session session;
  session.signal.sample_rate = spec.sample_rate;
  session.signal.samples.assign(n, 0.0);
  auto& x = session.signal.samples;

  const double pi = 3.14159265358979323846;
  const double fs = static_cast<double>(spec.sample_rate);

  // Noise floor with slow amplitude modulation.
  {
    detail::Gaussian noise(mix_seed(spec.seed, 1));
    const double sigma = std::pow(10.0, spec.noise_floor_db / 20.0);
    const double wm = 2.0 * pi * spec.noise_mod_hz / fs;
    const double mod_phase = 2.0 * pi * noise.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double env = 1.0 + spec.noise_mod_depth * std::sin(wm * static_cast<double>(i) + mod_phase);
      x[i] = sigma * env * noise();
    }
  }

  // Room ambience: low-frequency noise bed with its own slow modulation,
  // independent of the floor's.
  if (spec.ambient_rms > 0.0) {
    detail::Gaussian amb(mix_seed(spec.seed, 3));
    std::vector<double> bed(n);
    for (auto& v : bed) v = amb();
    const BandpassFilter shaper = design_bandpass(spec.ambient_low_hz, spec.ambient_high_hz, fs);
    bed = filtfilt(shaper, bed);
    double ms = 0.0;
    for (double v : bed) ms += v * v;
    const double scale = spec.ambient_rms / std::sqrt(ms / static_cast<double>(n));
    const double wa = 2.0 * pi * spec.ambient_mod_hz / fs;
    const double amb_phase = 2.0 * pi * amb.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double env = 1.0 + spec.ambient_mod_depth * std::sin(wa * static_cast<double>(i) + amb_phase);
      x[i] += scale * env * bed[i];
    }
  }

  // Vibration-borne rumble: the platform frequency and two harmonics, all at
  // or below 2 Hz, amplitude proportional to the commanded angle.
  const double rumble_amp = spec.rumble_per_deg * spec.vibration.max_amplitude_deg();
  if (rumble_amp > 0.0) {
    detail::Gaussian rr(mix_seed(spec.seed, 2));
    const double f0 = spec.vibration.frequency_hz;
    const double harmonics[3] = {f0, 2.0 * f0, 4.0 * f0};
    const double weights[3] = {1.0, 0.5, 0.25};
    double phases[3];
    for (int h = 0; h < 3; ++h) phases[h] = 2.0 * pi * rr.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      double v = 0.0;
      for (int h = 0; h < 3; ++h) {
        if (harmonics[h] > 2.0) continue;
        v += weights[h] * std::sin(2.0 * pi * harmonics[h] * t + phases[h]);
      }
      x[i] += rumble_amp * v;
    }
  }

  // Rattle knocks: short damped low-frequency transients at seeded times,
  // rate and amplitude scaling with the platform angle.
  const double deg = spec.vibration.max_amplitude_deg();
  if (deg > 0.0 && spec.rattle_rate_per_deg_hz > 0.0 && spec.rattle_amp_per_deg > 0.0) {
    detail::Gaussian kr(mix_seed(spec.seed, 4));
    const double rate_hz = spec.rattle_rate_per_deg_hz * deg;
    const std::size_t count =
        static_cast<std::size_t>(rate_hz * spec.vibration.duration_s);
    for (std::size_t k = 0; k < count; ++k) {
      const double t0 = kr.uniform() * (spec.vibration.duration_s - 0.1);
      const double f = spec.rattle_low_hz +
                       kr.uniform() * (spec.rattle_high_hz - spec.rattle_low_hz);
      const double amp = std::min(spec.rattle_amp_per_deg * deg, spec.rattle_amp_cap) *
                         (0.6 + 0.4 * kr.uniform());
      const double decay = 2.0 * pi * f * (0.03 + 0.02 * kr.uniform());
      const std::size_t start = static_cast<std::size_t>(t0 * fs);
      const std::size_t knock_len = static_cast<std::size_t>(0.12 * fs);
      // Raised-cosine attack over one period and a cosine tail fade keep the
      // knock spectrum at its nominal frequency instead of splattering a
      // broadband click into the analysis band.
      const double attack_s = 1.0 / f;
      const double fade_s = 0.02;
      const double knock_s = static_cast<double>(knock_len) / fs;
      std::size_t peak_off = 0;
      double peak_val = -1.0;
      for (std::size_t i = 0; i < knock_len && start + i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        double ramp = t >= attack_s ? 1.0 : 0.5 * (1.0 - std::cos(pi * t / attack_s));
        if (t > knock_s - fade_s) ramp *= 0.5 * (1.0 - std::cos(pi * (knock_s - t) / fade_s));
        const double v = ramp * amp * std::exp(-decay * t) * std::sin(2.0 * pi * f * t);
        x[start + i] += v;
        if (std::abs(v) > peak_val) {
          peak_val = std::abs(v);
          peak_off = i;
        }
      }
      session.artifact_indices.push_back(start + peak_off);
    }
    std::sort(session.artifact_indices.begin(), session.artifact_indices.end());
  }

  // Alternating class sequence, starting with the larger class; the leftover
  // taps of the larger class fill the tail. Alternation keeps time order out
  // of the class split.
  std::vector<Condition> sequence;
  sequence.reserve(total_taps);
  {
    std::size_t left_h = spec.taps_healthy, left_u = spec.taps_unhealthy;
    Condition turn = (left_u >= left_h) ? Condition::unhealthy : Condition::healthy;
    while (left_h + left_u > 0) {
      Condition c = turn;
      if (c == Condition::unhealthy && left_u == 0) c = Condition::healthy;
      if (c == Condition::healthy && left_h == 0) c = Condition::unhealthy;
      (c == Condition::unhealthy ? left_u : left_h) -= 1;
      sequence.push_back(c);
      turn = (c == Condition::healthy) ? Condition::unhealthy : Condition::healthy;
    }
  }

  for (std::size_t k = 0; k < total_taps; ++k) {
    const Condition cond = sequence[k];
    const double t_strike = spec.lead_in_s + static_cast<double>(k) * spec.tap_interval_s;
    const double gain =
        impact_modulation(spec.vibration, t_strike, spec.coupling_per_deg, spec.gain_floor);
    const TapTemplate& tmpl = (cond == Condition::healthy) ? healthy : unhealthy;
    const std::vector<double> wave = synth_tap(tmpl, gain, mix_seed(spec.seed, 1000 + k),
                                               spec.sample_rate);

    const std::size_t start = static_cast<std::size_t>(t_strike * fs);
    std::size_t peak_off = 0;
    double peak_val = -1.0;
    for (std::size_t i = 0; i < wave.size() && start + i < n; ++i) {
      x[start + i] += wave[i];
      if (std::abs(wave[i]) > peak_val) {
        peak_val = std::abs(wave[i]);
        peak_off = i;
      }
    }
    session.truth.push_back({start + peak_off, cond, gain});
  }

  return session;
}

inline void ground_truth_to_csv(const std::vector<GroundTruthEvent>& truth, std::ostream& os) {
  os << "sample_index,class\n";
  for (const auto& e : truth) os << e.index << ',' << condition_name(e.condition) << '\n';
}

inline std::vector<GroundTruthEvent> ground_truth_from_csv(std::istream& is) {
  std::vector<GroundTruthEvent> out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("sample_index", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("ground truth csv: malformed line");
    GroundTruthEvent e;
    e.index = static_cast<std::size_t>(std::stoull(line.substr(0, comma)));
    e.condition = condition_from_name(line.substr(comma + 1));
    out.push_back(e);
  }
  return out;
}

}  // namespace tapkit
