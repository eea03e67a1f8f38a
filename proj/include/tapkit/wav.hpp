#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/signal.hpp"

namespace tapkit {

// 16-bit PCM mono WAV only. Anything else is rejected outright rather than
// resampled or converted.

namespace detail {

inline void wav_write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void wav_write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline std::uint32_t wav_read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("wav: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t wav_read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw IoError("wav: truncated header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace detail

inline void write_wav(const std::string& path, const AudioSignal& signal) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("wav: cannot open for writing: " + path);

  const std::uint32_t n = static_cast<std::uint32_t>(signal.samples.size());
  const std::uint32_t data_bytes = n * 2;
  const std::uint32_t sample_rate = static_cast<std::uint32_t>(signal.sample_rate);

  os.write("RIFF", 4);
  detail::wav_write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::wav_write_u32(os, 16);
  detail::wav_write_u16(os, 1);  // PCM
  detail::wav_write_u16(os, 1);  // mono
  detail::wav_write_u32(os, sample_rate);
  detail::wav_write_u32(os, sample_rate * 2);  // byte rate
  detail::wav_write_u16(os, 2);                // block align
  detail::wav_write_u16(os, 16);               // bits per sample
  os.write("data", 4);
  detail::wav_write_u32(os, data_bytes);

  for (double v : signal.samples) {
    const double clamped = std::clamp(v, -1.0, 1.0);
    const int s = static_cast<int>(std::lrint(clamped * 32767.0));
    detail::wav_write_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  if (!os) throw IoError("wav: write failed: " + path);
}

inline AudioSignal read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("wav: cannot open: " + path);

  char tag[4];
  is.read(tag, 4);
  if (!is || std::strncmp(tag, "RIFF", 4) != 0) throw IoError("wav: not a RIFF file: " + path);
  detail::wav_read_u32(is);  // riff size
  is.read(tag, 4);
  if (!is || std::strncmp(tag, "WAVE", 4) != 0) throw IoError("wav: not a WAVE file: " + path);

  AudioSignal out;
  bool have_fmt = false;
  while (is.read(tag, 4)) {
    const std::uint32_t chunk_size = detail::wav_read_u32(is);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = detail::wav_read_u16(is);
      const std::uint16_t channels = detail::wav_read_u16(is);
      const std::uint32_t sample_rate = detail::wav_read_u32(is);
      detail::wav_read_u32(is);  // byte rate
      detail::wav_read_u16(is);  // block align
      const std::uint16_t bits = detail::wav_read_u16(is);
      if (format != 1) throw IoError("wav: only PCM format supported: " + path);
      if (channels != 1) throw IoError("wav: only mono supported: " + path);
      if (bits != 16) throw IoError("wav: only 16-bit samples supported: " + path);
      out.sample_rate = static_cast<int>(sample_rate);
      if (chunk_size > 16) is.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw IoError("wav: data chunk before fmt chunk: " + path);
      const std::uint32_t count = chunk_size / 2;
      out.samples.resize(count);
      std::vector<unsigned char> raw(chunk_size);
      is.read(reinterpret_cast<char*>(raw.data()), chunk_size);
      if (!is) throw IoError("wav: truncated data chunk: " + path);
      for (std::uint32_t i = 0; i < count; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
        out.samples[i] = static_cast<double>(s) / 32767.0;
      }
      return out;
    } else {
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw IoError("wav: no data chunk found: " + path);
}

}  // namespace tapkit
