#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "tapkit/core.hpp"

namespace tapkit {

// Direct Form II transposed biquad section.
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0}, a1{0.0}, a2{0.0};

  void process(std::vector<double>& x) const {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : x) {
      const double y = b0 * v + s1;
      s1 = b1 * v - a1 * y + s2;
      s2 = b2 * v - a2 * y;
      v = y;
    }
  }

  // |H(e^{j 2 pi f / fs})|
  double magnitude(double freq_hz, double sample_rate) const {
    const double pi = 3.14159265358979323846;
    const double w = 2.0 * pi * freq_hz / sample_rate;
    const std::complex<double> z(std::cos(w), std::sin(w));
    const std::complex<double> zi = 1.0 / z;
    const std::complex<double> num = b0 + b1 * zi + b2 * zi * zi;
    const std::complex<double> den = 1.0 + a1 * zi + a2 * zi * zi;
    return std::abs(num / den);
  }
};

// Second-order Butterworth sections via the bilinear transform (audio
// cookbook form, Q = 1/sqrt(2)).
inline Biquad butterworth_lowpass(double cutoff_hz, double sample_rate) {
  if (!(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * sample_rate)
    throw std::invalid_argument("butterworth_lowpass: cutoff must be in (0, Nyquist)");
  const double pi = 3.14159265358979323846;
  const double w0 = 2.0 * pi * cutoff_hz / sample_rate;
  const double q = 1.0 / std::sqrt(2.0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = (1.0 - cw) / 2.0 / a0;
  s.b1 = (1.0 - cw) / a0;
  s.b2 = s.b0;
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

inline Biquad butterworth_highpass(double cutoff_hz, double sample_rate) {
  if (!(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * sample_rate)
    throw std::invalid_argument("butterworth_highpass: cutoff must be in (0, Nyquist)");
  const double pi = 3.14159265358979323846;
  const double w0 = 2.0 * pi * cutoff_hz / sample_rate;
  const double q = 1.0 / std::sqrt(2.0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = (1.0 + cw) / 2.0 / a0;
  s.b1 = -(1.0 + cw) / a0;
  s.b2 = s.b0;
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

// Band-pass as a highpass/lowpass cascade (4 poles total). Either side may be
// absent when the band reaches an axis edge, so [0, f) degrades to a lowpass
// and (f, Nyquist] to a highpass.
struct BandpassFilter {
  std::vector<Biquad> sections;

  double magnitude(double freq_hz, double sample_rate) const {
    double m = 1.0;
    for (const auto& s : sections) m *= s.magnitude(freq_hz, sample_rate);
    return m;
  }
};

inline BandpassFilter design_bandpass(double f_min_hz, double f_max_hz, double sample_rate) {
  const double nyq = 0.5 * sample_rate;
  if (!(f_min_hz >= 0.0) || !(f_max_hz > f_min_hz) || f_max_hz > nyq)
    throw std::invalid_argument("design_bandpass: need 0 <= f_min < f_max <= Nyquist");
  const bool has_hp = f_min_hz > 1e-9;
  // Cutoffs hugging Nyquist are numerically useless; treat them as open.
  const bool has_lp = f_max_hz < 0.999 * nyq;
  if (has_hp && has_lp) {
    const double min_width = std::max(1.0, 0.005 * nyq);
    if (f_max_hz - f_min_hz < min_width)
      throw DataError("design_bandpass: band degenerate (narrower than one transition width)");
  }
  BandpassFilter f;
  if (has_hp) f.sections.push_back(butterworth_highpass(f_min_hz, sample_rate));
  if (has_lp) f.sections.push_back(butterworth_lowpass(f_max_hz, sample_rate));
  return f;
}

// Zero-phase filtering: forward pass, then a second pass over the reversed
// signal. Ends are odd-extended before filtering to keep the startup
// transient out of the data.
inline std::vector<double> filtfilt(const BandpassFilter& filter, const std::vector<double>& x) {
  if (x.empty()) return {};
  if (filter.sections.empty()) return x;

  const std::size_t pad = std::min<std::size_t>(1024, x.size() - 1);
  std::vector<double> buf;
  buf.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) buf.push_back(2.0 * x.front() - x[i]);
  buf.insert(buf.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) buf.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  for (const auto& s : filter.sections) s.process(buf);
  std::reverse(buf.begin(), buf.end());
  for (const auto& s : filter.sections) s.process(buf);
  std::reverse(buf.begin(), buf.end());

  return std::vector<double>(buf.begin() + static_cast<std::ptrdiff_t>(pad),
                             buf.begin() + static_cast<std::ptrdiff_t>(pad + x.size()));
}

}  // namespace tapkit
