#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/filter.hpp"
#include "tapkit/signal.hpp"

#include "json.hpp"

namespace tapkit {

// Clamp for the SPL of near-silent windows; log10 of a true zero RMS is
// otherwise unbounded.
constexpr double kSplFloorDb = -120.0;

struct BandSelection {
  double f_min_hz{0.0};
  double f_max_hz{0.0};
};

// select_band result. f_max_at_nyquist means the flat-tail search never
// converged and the band was closed at Nyquist instead.
struct BandSelectionResult {
  BandSelection band;
  bool f_max_at_nyquist{false};
};

struct SplSeries {
  std::vector<std::size_t> window_starts;
  std::vector<double> spl_db;
  double p_ref{1.0};
};

struct BaselineStats {
  double mean_spl_db{0.0};
  double std_spl_db{0.0};
  double low_pct{25.0};
  double high_pct{75.0};
};

// Linear-amplitude event gate: a peak passes iff lambda_min < v < lambda_max.
struct AmplitudeThresholds {
  double lambda_min{0.0};
  double lambda_max{0.0};
};

// Percentile with linear interpolation on the sorted values (the numpy
// convention: position q/100 * (n-1)).
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile: q must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

// Splits window indices into a low-activity and a high-activity set by energy
// percentile. Windows whose energy ties a percentile land in both sets, which
// keeps the rule deterministic for constant inputs.
inline void partition_by_energy(const EnergySeries& energy, double low_pct, double high_pct,
                                std::vector<std::size_t>& low_windows,
                                std::vector<std::size_t>& high_windows) {
  if (energy.energies.size() < 2) throw DataError("partition_by_energy: fewer than 2 windows");
  if (!(low_pct >= 0.0 && low_pct < high_pct && high_pct <= 100.0))
    throw std::invalid_argument("partition_by_energy: need 0 <= low_pct < high_pct <= 100");

  const double p_low = percentile(energy.energies, low_pct);
  const double p_high = percentile(energy.energies, high_pct);
  low_windows.clear();
  high_windows.clear();
  for (std::size_t i = 0; i < energy.energies.size(); ++i) {
    if (energy.energies[i] <= p_low) low_windows.push_back(i);
    if (energy.energies[i] >= p_high) high_windows.push_back(i);
  }
}

namespace detail {

// Moving average over +-(span/2) bins; the window shrinks at the edges.
inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t span) {
  const std::size_t half = span / 2;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = (i >= half) ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace detail

struct BandSearchParams {
  double drop_db{20.0};
  // Upper edge of the region searched for the low-frequency PSD maximum.
  double low_freq_search_max_hz{500.0};
  // Flatness tolerance for the f_max criterion, in dB per bin of the
  // smoothed spectrum.
  double slope_eps_db_per_bin{0.01};
  std::size_t smooth_bins{9};
};

// Frequency-band selection from a high-activity PSD.
//
// f_min: lowest frequency above the low-frequency PSD maximum where the
// smoothed dB spectrum has dropped by at least drop_db from that maximum.
// No such crossing (a flat spectrum) is a data error; callers may fall back
// to the full band.
//
// f_max: lowest frequency above f_min from which the smoothed dB spectrum
// stays flat (|slope| < slope_eps per bin) all the way to Nyquist, i.e. no
// significant spectral content remains above it. If the tail never flattens,
// the band is closed at Nyquist and the result carries a warning flag.
inline BandSelectionResult select_band(const Spectrum& spectrum_high,
                                       const BandSearchParams& params = {}) {
  const std::size_t n = spectrum_high.psd.size();
  if (n < 3) throw std::invalid_argument("select_band: spectrum too short");
  if (!(params.drop_db > 0.0)) throw std::invalid_argument("select_band: drop_db must be > 0");

  const double tiny = 1e-30;
  std::vector<double> db(n);
  for (std::size_t i = 0; i < n; ++i) db[i] = 10.0 * std::log10(std::max(spectrum_high.psd[i], tiny));
  const std::vector<double> smooth = detail::moving_average(db, params.smooth_bins);

  // Low-frequency maximum.
  std::size_t max_idx = 0;
  for (std::size_t i = 0; i < n && spectrum_high.freqs[i] <= params.low_freq_search_max_hz; ++i)
    if (smooth[i] > smooth[max_idx]) max_idx = i;

  // f_min: first -drop_db crossing above the maximum.
  const double threshold = smooth[max_idx] - params.drop_db;
  std::size_t fmin_idx = n;
  for (std::size_t i = max_idx + 1; i < n; ++i) {
    if (smooth[i] <= threshold) {
      fmin_idx = i;
      break;
    }
  }
  if (fmin_idx >= n)
    throw DataError("select_band: no -" + std::to_string(params.drop_db) +
                    " dB crossing found (flat spectrum)");

  // Slope of the smoothed spectrum, dB per bin (central differences).
  std::vector<double> slope(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) slope[i] = 0.5 * (smooth[i + 1] - smooth[i - 1]);
  if (n >= 2) {
    slope[0] = smooth[1] - smooth[0];
    slope[n - 1] = smooth[n - 1] - smooth[n - 2];
  }

  // flat_from[i]: the tail starting at i is flat through Nyquist. The last
  // smooth_bins edge bins are ignored (the shrinking average distorts them).
  const std::size_t edge = std::min(n - 1, params.smooth_bins);
  std::vector<char> flat_from(n, 1);
  for (std::size_t i = n - 1;; --i) {
    const bool flat_here =
        (i + edge >= n) || std::abs(slope[i]) < params.slope_eps_db_per_bin;
    flat_from[i] = flat_here && (i + 1 < n ? flat_from[i + 1] : 1);
    if (i == 0) break;
  }

  BandSelectionResult result;
  result.band.f_min_hz = spectrum_high.freqs[fmin_idx];
  std::size_t fmax_idx = n;
  for (std::size_t i = fmin_idx + 1; i < n; ++i) {
    if (flat_from[i]) {
      fmax_idx = i;
      break;
    }
  }
  if (fmax_idx >= n) {
    result.band.f_max_hz = spectrum_high.freqs[n - 1];
    result.f_max_at_nyquist = true;
  } else {
    result.band.f_max_hz = spectrum_high.freqs[fmax_idx];
  }
  return result;
}

// Band energy per the discrete integral sum(psd[k] * delta_f) over bins with
// f_min <= f_k <= f_max, both ends inclusive.
inline double band_energy(const Spectrum& spectrum, const BandSelection& band) {
  if (spectrum.psd.empty()) throw std::invalid_argument("band_energy: empty spectrum");
  if (!(band.f_min_hz >= spectrum.freqs.front() - 1e-9) ||
      !(band.f_max_hz <= spectrum.freqs.back() + 1e-9) || !(band.f_min_hz < band.f_max_hz))
    throw std::invalid_argument("band_energy: band outside spectrum support");
  double e = 0.0;
  for (std::size_t k = 0; k < spectrum.psd.size(); ++k) {
    const double f = spectrum.freqs[k];
    if (f >= band.f_min_hz && f <= band.f_max_hz) e += spectrum.psd[k] * spectrum.delta_f;
  }
  return e;
}

// Band-limits the signal (zero-phase Butterworth cascade), then converts the
// per-window RMS to an SPL time series in dB re p_ref.
inline SplSeries band_limited_spl(const AudioSignal& signal, const BandSelection& band,
                                  std::size_t window_len, std::size_t hop, double p_ref) {
  require_valid(signal, "band_limited_spl");
  if (!(p_ref > 0.0)) throw std::invalid_argument("band_limited_spl: p_ref must be > 0");

  const BandpassFilter filter =
      design_bandpass(band.f_min_hz, band.f_max_hz, static_cast<double>(signal.sample_rate));
  const std::vector<double> filtered = filtfilt(filter, signal.samples);

  AudioSignal tmp{filtered, signal.sample_rate};
  const EnergySeries energy = short_time_energy(tmp, window_len, hop);

  SplSeries out;
  out.window_starts = energy.window_starts;
  out.p_ref = p_ref;
  out.spl_db.resize(energy.energies.size());
  const double rms_floor = p_ref * std::pow(10.0, kSplFloorDb / 20.0);
  for (std::size_t i = 0; i < energy.energies.size(); ++i) {
    const double rms = std::sqrt(energy.energies[i] / static_cast<double>(window_len));
    out.spl_db[i] = 20.0 * std::log10(std::max(rms, rms_floor) / p_ref);
  }
  return out;
}

// Mean and population standard deviation of the SPL restricted to the
// low-activity windows.
inline BaselineStats baseline_stats(const SplSeries& spl, const std::vector<std::size_t>& low_windows) {
  if (low_windows.empty()) throw std::invalid_argument("baseline_stats: empty low-window set");
  double mean = 0.0;
  for (std::size_t i : low_windows) {
    if (i >= spl.spl_db.size()) throw std::invalid_argument("baseline_stats: window index out of range");
    mean += spl.spl_db[i];
  }
  mean /= static_cast<double>(low_windows.size());
  double var = 0.0;
  for (std::size_t i : low_windows) {
    const double d = spl.spl_db[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(low_windows.size());
  BaselineStats out;
  out.mean_spl_db = mean;
  out.std_spl_db = std::sqrt(var);
  return out;
}

struct ThresholdParams {
  double k_low{3.0};
  double k_high{12.0};
  double p_ref{1.0};
  // Guaranteed margin between the two SPL thresholds when the baseline
  // deviation degenerates to zero.
  double min_margin_db{6.0};
};

// Maps the statistical SPL margins back to the linear amplitude domain:
// lambda = p_ref * 10^(spl/20).
inline AmplitudeThresholds derive_thresholds(const BaselineStats& stats, const ThresholdParams& params) {
  if (!(params.k_high > params.k_low) || !(params.k_low > 0.0))
    throw std::invalid_argument("derive_thresholds: need k_high > k_low > 0");
  if (!(params.p_ref > 0.0)) throw std::invalid_argument("derive_thresholds: p_ref must be > 0");
  const double spl_min = stats.mean_spl_db + params.k_low * stats.std_spl_db;
  double spl_max = stats.mean_spl_db + params.k_high * stats.std_spl_db;
  if (spl_max - spl_min < params.min_margin_db) spl_max = spl_min + params.min_margin_db;
  AmplitudeThresholds out;
  out.lambda_min = params.p_ref * std::pow(10.0, spl_min / 20.0);
  out.lambda_max = params.p_ref * std::pow(10.0, spl_max / 20.0);
  return out;
}

// Gate report: the serialized contract between the gate stage and the
// segmenter / CLI.
struct GateReport {
  BandSelection band;
  AmplitudeThresholds thresholds;
  BaselineStats baseline;
  bool f_max_at_nyquist{false};
  bool full_band_fallback{false};
};

inline nlohmann::json gate_report_to_json(const GateReport& report) {
  return nlohmann::json{{"f_min_hz", report.band.f_min_hz},
                        {"f_max_hz", report.band.f_max_hz},
                        {"lambda_min", report.thresholds.lambda_min},
                        {"lambda_max", report.thresholds.lambda_max},
                        {"baseline_mean_db", report.baseline.mean_spl_db},
                        {"baseline_std_db", report.baseline.std_spl_db}};
}

inline GateReport gate_report_from_json(const nlohmann::json& j) {
  GateReport r;
  r.band.f_min_hz = j.at("f_min_hz").get<double>();
  r.band.f_max_hz = j.at("f_max_hz").get<double>();
  r.thresholds.lambda_min = j.at("lambda_min").get<double>();
  r.thresholds.lambda_max = j.at("lambda_max").get<double>();
  r.baseline.mean_spl_db = j.at("baseline_mean_db").get<double>();
  r.baseline.std_spl_db = j.at("baseline_std_db").get<double>();
  return r;
}

}  // namespace tapkit
