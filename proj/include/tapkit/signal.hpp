#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/fft.hpp"

namespace tapkit {

// Uniformly sampled mono amplitude sequence. Samples are dimensionless,
// nominally in [-1, 1] (digital full scale).
struct AudioSignal {
  std::vector<double> samples;
  int sample_rate{44100};

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  double nyquist() const { return 0.5 * static_cast<double>(sample_rate); }
};

inline void require_valid(const AudioSignal& s, const char* op) {
  if (s.samples.empty()) throw std::invalid_argument(std::string(op) + ": empty signal");
  if (s.sample_rate <= 0) throw std::invalid_argument(std::string(op) + ": sample_rate must be > 0");
  for (double v : s.samples)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite sample");
}

// Windowed signal energy (amplitude^2 * samples) on a fixed grid of window
// starts with constant hop.
struct EnergySeries {
  std::vector<std::size_t> window_starts;
  std::vector<double> energies;
  std::size_t window_len{0};
  std::size_t hop{0};
};

// One-sided power spectral density. freqs[k] = k * sample_rate / nfft, from
// 0 to Nyquist inclusive; psd in amplitude^2 / Hz.
struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> psd;
  double delta_f{0.0};
};

// Energy per overlapping window: energies[i] = sum of squared samples over
// [window_starts[i], window_starts[i] + window_len). A trailing window that
// would run past the end of the signal is discarded, never padded, so all
// energies are comparable.
inline EnergySeries short_time_energy(const AudioSignal& signal, std::size_t window_len,
                                      std::size_t hop) {
  require_valid(signal, "short_time_energy");
  const std::size_t n = signal.size();
  if (window_len < 1 || window_len > n)
    throw std::invalid_argument("short_time_energy: window_len must be in [1, signal length]");
  if (hop < 1 || hop > window_len)
    throw std::invalid_argument("short_time_energy: hop must be in [1, window_len]");

  EnergySeries out;
  out.window_len = window_len;
  out.hop = hop;
  for (std::size_t start = 0; start + window_len <= n; start += hop) {
    double e = 0.0;
    for (std::size_t k = 0; k < window_len; ++k) {
      const double v = signal.samples[start + k];
      e += v * v;
    }
    out.window_starts.push_back(start);
    out.energies.push_back(e);
  }
  return out;
}

enum class Taper { Rectangular, Hann };

// Periodic Hann, the spectral-analysis convention (the window plus its hop
// tiles the signal without modulation at 50% overlap).
inline std::vector<double> make_taper(Taper kind, std::size_t len) {
  std::vector<double> w(len, 1.0);
  if (kind == Taper::Hann) {
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < len; ++i)
      w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(len)));
  }
  return w;
}

namespace detail {

// Accumulates |FFT|^2 of one tapered segment into acc (length nfft/2+1).
inline void accumulate_periodogram(const double* seg, const std::vector<double>& taper,
                                   std::vector<std::complex<double>>& buf,
                                   std::vector<double>& acc) {
  const std::size_t len = taper.size();
  for (std::size_t i = 0; i < len; ++i) buf[i] = std::complex<double>(seg[i] * taper[i], 0.0);
  for (std::size_t i = len; i < buf.size(); ++i) buf[i] = std::complex<double>(0.0, 0.0);
  fft_inplace(buf, false);
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += std::norm(buf[k]);
}

inline Spectrum finish_welch(std::vector<double>& acc, std::size_t n_segments,
                             const std::vector<double>& taper, int sample_rate,
                             std::size_t seg_len) {
  double win_power = 0.0;
  for (double w : taper) win_power += w * w;

  // One-sided scaling: interior bins carry the energy of their negative-
  // frequency twins. Normalization by fs * sum(w^2) makes sum(psd)*delta_f
  // estimate the mean square of the input.
  const double fs = static_cast<double>(sample_rate);
  const double scale = 1.0 / (fs * win_power * static_cast<double>(n_segments));
  Spectrum out;
  const std::size_t half = acc.size();
  out.freqs.resize(half);
  out.psd.resize(half);
  out.delta_f = fs / static_cast<double>(seg_len);
  for (std::size_t k = 0; k < half; ++k) {
    out.freqs[k] = static_cast<double>(k) * out.delta_f;
    double v = acc[k] * scale;
    if (k != 0 && k != half - 1) v *= 2.0;
    out.psd[k] = v;
  }
  return out;
}

}  // namespace detail

// Welch's averaged-periodogram PSD estimate over the whole signal.
// seg_len must be a power of two; overlap_fraction in [0, 1).
inline Spectrum welch_psd(const AudioSignal& signal, std::size_t seg_len,
                          double overlap_fraction = 0.5, Taper window = Taper::Hann) {
  require_valid(signal, "welch_psd");
  if (!is_power_of_two(seg_len)) throw std::invalid_argument("welch_psd: seg_len must be a power of two");
  if (seg_len > signal.size()) throw std::invalid_argument("welch_psd: seg_len exceeds signal length");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw std::invalid_argument("welch_psd: overlap_fraction must be in [0, 1)");

  const std::size_t hop =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((1.0 - overlap_fraction) *
                                                                   static_cast<double>(seg_len))));
  const std::vector<double> taper = make_taper(window, seg_len);
  std::vector<std::complex<double>> buf(seg_len);
  std::vector<double> acc(seg_len / 2 + 1, 0.0);
  std::size_t n_segments = 0;
  for (std::size_t start = 0; start + seg_len <= signal.size(); start += hop) {
    detail::accumulate_periodogram(signal.samples.data() + start, taper, buf, acc);
    ++n_segments;
  }
  if (n_segments == 0) throw DataError("welch_psd: fewer than one complete segment");
  return detail::finish_welch(acc, n_segments, taper, signal.sample_rate, seg_len);
}

// Welch estimate pooled over selected windows of the signal (e.g. only the
// high-activity windows found by the energy partition). Segments never cross
// a window boundary.
inline Spectrum welch_psd_windows(const AudioSignal& signal,
                                  const std::vector<std::size_t>& window_starts,
                                  std::size_t window_len, std::size_t seg_len,
                                  double overlap_fraction = 0.5, Taper window = Taper::Hann) {
  require_valid(signal, "welch_psd_windows");
  if (!is_power_of_two(seg_len)) throw std::invalid_argument("welch_psd_windows: seg_len must be a power of two");
  if (seg_len > window_len) throw std::invalid_argument("welch_psd_windows: seg_len exceeds window_len");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw std::invalid_argument("welch_psd_windows: overlap_fraction must be in [0, 1)");

  const std::size_t hop =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor((1.0 - overlap_fraction) *
                                                                   static_cast<double>(seg_len))));
  const std::vector<double> taper = make_taper(window, seg_len);
  std::vector<std::complex<double>> buf(seg_len);
  std::vector<double> acc(seg_len / 2 + 1, 0.0);
  std::size_t n_segments = 0;
  for (std::size_t ws : window_starts) {
    if (ws + window_len > signal.size()) continue;
    for (std::size_t off = 0; off + seg_len <= window_len; off += hop) {
      detail::accumulate_periodogram(signal.samples.data() + ws + off, taper, buf, acc);
      ++n_segments;
    }
  }
  if (n_segments == 0) throw DataError("welch_psd_windows: fewer than one complete segment");
  return detail::finish_welch(acc, n_segments, taper, signal.sample_rate, seg_len);
}

// Total signal energy in the time domain: sum of squared samples.
inline double total_energy_time(const AudioSignal& signal) {
  require_valid(signal, "total_energy_time");
  double e = 0.0;
  for (double v : signal.samples) e += v * v;
  return e;
}

// Total signal energy from the DFT, normalized so it equals the time-domain
// sum exactly (Parseval). Zero-padding to a power of two does not change the
// result.
inline double total_energy_freq(const AudioSignal& signal) {
  require_valid(signal, "total_energy_freq");
  const std::size_t nfft = next_power_of_two(signal.size());
  const auto spec = fft_real(signal.samples, nfft);
  double e = 0.0;
  for (const auto& c : spec) e += std::norm(c);
  return e / static_cast<double>(nfft);
}

}  // namespace tapkit
