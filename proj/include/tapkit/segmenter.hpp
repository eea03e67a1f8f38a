#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/energy_gate.hpp"
#include "tapkit/signal.hpp"

namespace tapkit {

struct Peak {
  std::size_t index{0};
  double amplitude{0.0};
};

// Local maxima thinned to a minimum spacing; indices strictly increasing.
struct PeakSet {
  std::vector<Peak> peaks;
  std::size_t size() const { return peaks.size(); }
};

// Class labels. The unhealthy (debonded) condition is the safety-critical one
// and wins ties wherever a tie rule is needed.
enum class Condition : int { healthy = 0, unhealthy = 1 };

inline const char* condition_name(Condition c) {
  return c == Condition::healthy ? "healthy" : "unhealthy";
}

inline Condition condition_from_name(const std::string& name) {
  if (name == "healthy") return Condition::healthy;
  if (name == "unhealthy") return Condition::unhealthy;
  throw std::invalid_argument("unknown class label: " + name);
}

// Fixed-length tap waveforms, one per row, with per-row class labels and
// provenance ids.
struct SegmentMatrix {
  Matrix data;  // m taps x L samples
  std::vector<Condition> labels;
  std::vector<std::string> source_ids;
  std::size_t dropped_boundary{0};

  std::size_t row_count() const { return data.rows; }
  std::size_t segment_len() const { return data.cols; }
};

struct SplitSpec {
  double train_fraction{0.6};
  bool stratified{true};
  std::uint64_t seed{0};
};

// All strict local maxima of the signal, thinned so surviving peaks are at
// least delta samples apart. Thinning is greedy by descending amplitude
// (ties: lower index first), which keeps the most energetic event of any
// cluster of nearby maxima.
inline PeakSet detect_peaks(const AudioSignal& signal, std::size_t delta) {
  require_valid(signal, "detect_peaks");
  if (delta < 1) throw std::invalid_argument("detect_peaks: delta must be >= 1");

  std::vector<Peak> candidates;
  for (std::size_t i = 1; i + 1 < signal.size(); ++i) {
    const double v = signal.samples[i];
    if (v > signal.samples[i - 1] && v > signal.samples[i + 1])
      candidates.push_back({i, v});
  }

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (candidates[a].amplitude != candidates[b].amplitude)
      return candidates[a].amplitude > candidates[b].amplitude;
    return candidates[a].index < candidates[b].index;
  });

  std::vector<std::size_t> kept_indices;
  std::vector<Peak> kept;
  for (std::size_t oi : order) {
    const Peak& p = candidates[oi];
    bool conflict = false;
    for (std::size_t ki : kept_indices) {
      const std::size_t gap = (p.index > ki) ? p.index - ki : ki - p.index;
      if (gap < delta) {
        conflict = true;
        break;
      }
    }
    if (!conflict) {
      kept.push_back(p);
      kept_indices.push_back(p.index);
    }
  }

  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return a.index < b.index; });
  return PeakSet{std::move(kept)};
}

// Keeps exactly the peaks with lambda_min < amplitude < lambda_max (strict on
// both sides). Order preserved.
inline PeakSet filter_peaks(const PeakSet& peaks, const AmplitudeThresholds& thresholds) {
  if (!(thresholds.lambda_min < thresholds.lambda_max))
    throw std::invalid_argument("filter_peaks: need lambda_min < lambda_max");
  PeakSet out;
  for (const Peak& p : peaks.peaks)
    if (p.amplitude > thresholds.lambda_min && p.amplitude < thresholds.lambda_max)
      out.peaks.push_back(p);
  return out;
}

// Cuts a fixed-length window around each peak: [p - floor(pre_fraction*L),
// ... + L). Windows that would cross a signal boundary are dropped and
// counted, never padded (padding would distort the decomposition downstream).
inline SegmentMatrix extract_segments(const AudioSignal& signal, const PeakSet& peaks,
                                      std::size_t segment_len, double pre_fraction,
                                      Condition label, const std::string& source = "") {
  require_valid(signal, "extract_segments");
  if (segment_len < 2) throw std::invalid_argument("extract_segments: segment length must be >= 2");
  if (segment_len > signal.size()) throw std::invalid_argument("extract_segments: segment longer than signal");
  if (!(pre_fraction >= 0.0 && pre_fraction < 1.0))
    throw std::invalid_argument("extract_segments: pre_fraction must be in [0, 1)");

  const std::size_t pre = static_cast<std::size_t>(std::floor(pre_fraction * static_cast<double>(segment_len)));
  std::vector<const Peak*> usable;
  std::size_t dropped = 0;
  for (const Peak& p : peaks.peaks) {
    if (p.index < pre || p.index - pre + segment_len > signal.size()) {
      ++dropped;
      continue;
    }
    usable.push_back(&p);
  }

  SegmentMatrix out;
  out.dropped_boundary = dropped;
  out.data = Matrix(usable.size(), segment_len);
  out.labels.assign(usable.size(), label);
  out.source_ids.resize(usable.size());
  for (std::size_t r = 0; r < usable.size(); ++r) {
    const std::size_t start = usable[r]->index - pre;
    std::copy(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
              signal.samples.begin() + static_cast<std::ptrdiff_t>(start + segment_len),
              out.data.row(r));
    out.source_ids[r] = source + "@" + std::to_string(usable[r]->index);
  }
  return out;
}

// Per-peak-label variant used by the pipeline when one recording interleaves
// both conditions; labels[i] belongs to peaks.peaks[i].
inline SegmentMatrix extract_segments_labeled(const AudioSignal& signal, const PeakSet& peaks,
                                              const std::vector<Condition>& labels,
                                              std::size_t segment_len, double pre_fraction,
                                              const std::string& source = "") {
  if (labels.size() != peaks.size())
    throw std::invalid_argument("extract_segments_labeled: one label per peak required");
  require_valid(signal, "extract_segments_labeled");
  if (segment_len < 2) throw std::invalid_argument("extract_segments_labeled: segment length must be >= 2");
  if (segment_len > signal.size())
    throw std::invalid_argument("extract_segments_labeled: segment longer than signal");
  if (!(pre_fraction >= 0.0 && pre_fraction < 1.0))
    throw std::invalid_argument("extract_segments_labeled: pre_fraction must be in [0, 1)");

  const std::size_t pre = static_cast<std::size_t>(std::floor(pre_fraction * static_cast<double>(segment_len)));
  std::vector<std::size_t> usable;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const Peak& p = peaks.peaks[i];
    if (p.index < pre || p.index - pre + segment_len > signal.size()) {
      ++dropped;
      continue;
    }
    usable.push_back(i);
  }

  SegmentMatrix out;
  out.dropped_boundary = dropped;
  out.data = Matrix(usable.size(), segment_len);
  out.labels.resize(usable.size());
  out.source_ids.resize(usable.size());
  for (std::size_t r = 0; r < usable.size(); ++r) {
    const Peak& p = peaks.peaks[usable[r]];
    const std::size_t start = p.index - pre;
    std::copy(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
              signal.samples.begin() + static_cast<std::ptrdiff_t>(start + segment_len),
              out.data.row(r));
    out.labels[r] = labels[usable[r]];
    out.source_ids[r] = source + "@" + std::to_string(p.index);
  }
  return out;
}

namespace detail {

inline SegmentMatrix take_rows(const SegmentMatrix& m, const std::vector<std::size_t>& rows) {
  SegmentMatrix out;
  out.data = Matrix(rows.size(), m.data.cols);
  out.labels.resize(rows.size());
  out.source_ids.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.data.row(rows[i]), m.data.row(rows[i]) + m.data.cols, out.data.row(i));
    out.labels[i] = m.labels[rows[i]];
    out.source_ids[i] = m.source_ids[rows[i]];
  }
  return out;
}

}  // namespace detail

// Stratified train/test split: per class, floor(train_fraction * count) rows
// (at least one) go to training after a seeded uniform shuffle; the rest are
// the test set. Identical seed, identical split.
inline void split(const SegmentMatrix& matrix, const SplitSpec& spec, SegmentMatrix& train,
                  SegmentMatrix& test) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  if (matrix.row_count() == 0) throw std::invalid_argument("split: empty matrix");

  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    std::vector<std::size_t> healthy_rows, unhealthy_rows;
    for (std::size_t r = 0; r < matrix.row_count(); ++r)
      (matrix.labels[r] == Condition::healthy ? healthy_rows : unhealthy_rows).push_back(r);
    for (auto* g : {&healthy_rows, &unhealthy_rows})
      if (!g->empty()) groups.push_back(*g);
    for (const auto& g : groups)
      if (g.size() < 2) throw DataError("split: a class has fewer than 2 rows under stratification");
  } else {
    std::vector<std::size_t> all(matrix.row_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    groups.push_back(std::move(all));
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(g.size())));
    n_train = std::max<std::size_t>(1, std::min(n_train, g.size() - 1));
    train_rows.insert(train_rows.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train), g.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  train = detail::take_rows(matrix, train_rows);
  test = detail::take_rows(matrix, test_rows);
}

// ---------------------------------------------------------------------------
// Serialization: CSV (label, source_id, L samples per row) and a compact
// binary form ("TAPX" magic, version, m, n, labels, source ids, float32 data,
// all little-endian).

inline void segments_to_csv(const SegmentMatrix& m, std::ostream& os) {
  os.precision(17);
  for (std::size_t r = 0; r < m.row_count(); ++r) {
    os << condition_name(m.labels[r]) << ',' << m.source_ids[r];
    for (std::size_t c = 0; c < m.data.cols; ++c) os << ',' << m.data.at(r, c);
    os << '\n';
  }
}

inline SegmentMatrix segments_from_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::vector<Condition> labels;
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw IoError("segments csv: missing label");
    labels.push_back(condition_from_name(cell));
    if (!std::getline(ss, cell, ',')) throw IoError("segments csv: missing source id");
    ids.push_back(cell);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  SegmentMatrix out;
  if (rows.empty()) return out;
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols) throw IoError("segments csv: ragged rows");
  out.data = Matrix(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), out.data.row(r));
  out.labels = std::move(labels);
  out.source_ids = std::move(ids);
  return out;
}

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!is) throw IoError("segments binary: truncated stream");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline void segments_to_binary(const SegmentMatrix& m, std::ostream& os) {
  os.write("TAPX", 4);
  detail::write_le<std::uint32_t>(os, 1);  // version
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.row_count()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.data.cols));
  for (Condition c : m.labels) detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(c));
  for (const std::string& id : m.source_ids) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (std::size_t r = 0; r < m.row_count(); ++r)
    for (std::size_t c = 0; c < m.data.cols; ++c)
      detail::write_le<float>(os, static_cast<float>(m.data.at(r, c)));
}

inline SegmentMatrix segments_from_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::strncmp(magic, "TAPX", 4) != 0) throw IoError("segments binary: bad magic");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != 1) throw IoError("segments binary: unsupported version");
  const auto m = detail::read_le<std::uint32_t>(is);
  const auto n = detail::read_le<std::uint32_t>(is);
  SegmentMatrix out;
  out.data = Matrix(m, n);
  out.labels.resize(m);
  out.source_ids.resize(m);
  for (std::uint32_t r = 0; r < m; ++r)
    out.labels[r] = static_cast<Condition>(detail::read_le<std::uint8_t>(is));
  for (std::uint32_t r = 0; r < m; ++r) {
    const auto len = detail::read_le<std::uint32_t>(is);
    std::string id(len, '\0');
    is.read(id.data(), len);
    if (!is) throw IoError("segments binary: truncated source id");
    out.source_ids[r] = std::move(id);
  }
  for (std::uint32_t r = 0; r < m; ++r)
    for (std::uint32_t c = 0; c < n; ++c) out.data.at(r, c) = detail::read_le<float>(is);
  return out;
}

}  // namespace tapkit
