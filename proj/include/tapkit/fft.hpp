#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tapkit {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey transform. inverse=true applies the
// conjugate transform and the 1/N scaling, so fft(ifft(x)) == x.
inline void fft_inplace(std::vector<std::complex<double>>& x, bool inverse = false) {
  const std::size_t n = x.size();
  if (n == 0) return;
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: length must be a power of two");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  const double pi = 3.14159265358979323846;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv_n;
  }
}

// Forward transform of a real signal, zero-padded to the next power of two.
inline std::vector<std::complex<double>> fft_real(const std::vector<double>& x,
                                                  std::size_t nfft = 0) {
  if (nfft == 0) nfft = next_power_of_two(x.size());
  if (!is_power_of_two(nfft) || nfft < x.size())
    throw std::invalid_argument("fft_real: nfft must be a power of two >= signal length");
  std::vector<std::complex<double>> buf(nfft, std::complex<double>(0.0, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = std::complex<double>(x[i], 0.0);
  fft_inplace(buf, false);
  return buf;
}

}  // namespace tapkit
