#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tapkit/classify.hpp"
#include "tapkit/config.hpp"
#include "tapkit/energy_gate.hpp"
#include "tapkit/metrics.hpp"
#include "tapkit/pca.hpp"
#include "tapkit/segmenter.hpp"
#include "tapkit/signal.hpp"
#include "tapkit/synth.hpp"

#include "json.hpp"

namespace tapkit {

inline constexpr const char* kToolkitVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Gate stage: energy partition -> high-set spectrum -> band -> SPL baseline
// -> amplitude thresholds.

inline GateReport run_gate(const AudioSignal& signal, const PipelineConfig& config) {
  const EnergySeries energy = short_time_energy(signal, config.ste_window_len, config.ste_hop);
  std::vector<std::size_t> low_idx, high_idx;
  partition_by_energy(energy, config.gate_low_pct, config.gate_high_pct, low_idx, high_idx);

  std::vector<std::size_t> high_starts;
  high_starts.reserve(high_idx.size());
  for (std::size_t i : high_idx) high_starts.push_back(energy.window_starts[i]);

  GateReport report;
  try {
    const Spectrum psd_high = welch_psd_windows(signal, high_starts, config.ste_window_len,
                                                config.welch_seg_len, config.welch_overlap);
    BandSearchParams band_params;
    band_params.drop_db = config.gate_drop_db;
    band_params.low_freq_search_max_hz = config.gate_low_freq_search_max_hz;
    band_params.slope_eps_db_per_bin = config.gate_slope_eps_db_per_bin;
    band_params.smooth_bins = config.gate_smooth_bins;
    const BandSelectionResult sel = select_band(psd_high, band_params);
    report.band = sel.band;
    report.f_max_at_nyquist = sel.f_max_at_nyquist;
  } catch (const DataError&) {
    if (!config.gate_fallback_full_band) throw;
    report.band = BandSelection{0.0, signal.nyquist()};
    report.full_band_fallback = true;
  }

  const SplSeries spl = band_limited_spl(signal, report.band, config.ste_window_len,
                                         config.ste_hop, config.gate_p_ref);
  report.baseline = baseline_stats(spl, low_idx);

  ThresholdParams tp;
  tp.k_low = config.gate_k_low;
  tp.k_high = config.gate_k_high;
  tp.p_ref = config.gate_p_ref;
  tp.min_margin_db = config.gate_min_margin_db;
  report.thresholds = derive_thresholds(report.baseline, tp);
  return report;
}

// ---------------------------------------------------------------------------
// Segmentation stage.
//
// Gated mode band-limits the signal first (the same zero-phase filter the
// SPL series used), detects peaks on the magnitude of the filtered signal
// and cuts segments from the filtered signal, so sub-band artifacts never
// reach the feature matrix. Naive mode works on the raw signal with fixed
// amplitude bounds.

struct SegmentationResult {
  SegmentMatrix segments;
  std::size_t peaks_detected{0};
  std::size_t peaks_in_bounds{0};
  std::size_t unmatched_dropped{0};
};

namespace detail {

// Nearest-truth labeling with a hard tolerance; at most one peak per truth
// event (the closest wins), everything unmatched is dropped.
inline void label_peaks(const PeakSet& peaks, const std::vector<GroundTruthEvent>& truth,
                        std::size_t tol_samples, PeakSet& matched,
                        std::vector<Condition>& labels, std::size_t& unmatched) {
  matched.peaks.clear();
  labels.clear();
  unmatched = 0;
  if (truth.empty()) {
    unmatched = peaks.size();
    return;
  }
  std::vector<std::size_t> truth_idx(truth.size());
  std::iota(truth_idx.begin(), truth_idx.end(), std::size_t{0});

  // best peak per truth event
  std::vector<std::ptrdiff_t> best_peak(truth.size(), -1);
  std::vector<std::size_t> best_dist(truth.size(), 0);
  for (std::size_t p = 0; p < peaks.size(); ++p) {
    const std::size_t idx = peaks.peaks[p].index;
    std::size_t nearest = 0;
    std::size_t nearest_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const std::size_t d = idx > truth[t].index ? idx - truth[t].index : truth[t].index - idx;
      if (d < nearest_dist) {
        nearest_dist = d;
        nearest = t;
      }
    }
    if (nearest_dist <= tol_samples &&
        (best_peak[nearest] < 0 || nearest_dist < best_dist[nearest])) {
      if (best_peak[nearest] >= 0) ++unmatched;  // displaced duplicate
      best_peak[nearest] = static_cast<std::ptrdiff_t>(p);
      best_dist[nearest] = nearest_dist;
    } else {
      ++unmatched;
    }
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (best_peak[t] < 0) continue;
    matched.peaks.push_back(peaks.peaks[static_cast<std::size_t>(best_peak[t])]);
    labels.push_back(truth[t].condition);
  }
  // restore index order
  std::vector<std::size_t> order(matched.peaks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return matched.peaks[a].index < matched.peaks[b].index;
  });
  PeakSet sorted_peaks;
  std::vector<Condition> sorted_labels;
  for (std::size_t i : order) {
    sorted_peaks.peaks.push_back(matched.peaks[i]);
    sorted_labels.push_back(labels[i]);
  }
  matched = std::move(sorted_peaks);
  labels = std::move(sorted_labels);
}

}  // namespace detail

inline SegmentationResult run_segment(const AudioSignal& signal,
                                      const std::optional<GateReport>& gate,
                                      const std::vector<GroundTruthEvent>& truth,
                                      const PipelineConfig& config,
                                      const std::string& source = "session") {
  AudioSignal working;
  working.sample_rate = signal.sample_rate;
  AmplitudeThresholds bounds;
  if (gate) {
    const BandpassFilter filter = design_bandpass(gate->band.f_min_hz, gate->band.f_max_hz,
                                                  static_cast<double>(signal.sample_rate));
    working.samples = filtfilt(filter, signal.samples);
    bounds = gate->thresholds;
  } else {
    working.samples = signal.samples;
    bounds = AmplitudeThresholds{config.naive_lambda_min, config.naive_lambda_max};
  }

  AudioSignal magnitude;
  magnitude.sample_rate = working.sample_rate;
  magnitude.samples.resize(working.samples.size());
  for (std::size_t i = 0; i < working.samples.size(); ++i)
    magnitude.samples[i] = std::abs(working.samples[i]);

  const std::size_t delta =
      std::max<std::size_t>(1, static_cast<std::size_t>(config.segment_delta_s *
                                                        static_cast<double>(config.sample_rate)));
  const PeakSet detected = detect_peaks(magnitude, delta);
  const PeakSet kept = filter_peaks(detected, bounds);

  SegmentationResult result;
  result.peaks_detected = detected.size();
  result.peaks_in_bounds = kept.size();

  const std::size_t tol = static_cast<std::size_t>(config.segment_label_match_tol_s *
                                                   static_cast<double>(signal.sample_rate));
  PeakSet matched;
  std::vector<Condition> labels;
  detail::label_peaks(kept, truth, tol, matched, labels, result.unmatched_dropped);

  result.segments = extract_segments_labeled(working, matched, labels, config.segment_len,
                                             config.segment_pre_fraction, source);
  return result;
}

// ---------------------------------------------------------------------------
// Training and evaluation.

struct ModelBundle {
  PcaModel pca;
  KMeansModel kmeans;
  std::map<std::size_t, Condition> cluster_map;
  DecisionTree tree;
};

struct TrainResult {
  ModelBundle bundle;
  SegmentMatrix train;
  SegmentMatrix test;
};

inline TrainResult run_train(const SegmentMatrix& segments, const PipelineConfig& config) {
  TrainResult out;
  SplitSpec spec;
  spec.train_fraction = config.train_fraction;
  spec.stratified = config.stratified;
  spec.seed = mix_seed(config.seed, 21);
  split(segments, spec, out.train, out.test);

  bool has_h = false, has_u = false;
  for (Condition c : out.train.labels) (c == Condition::healthy ? has_h : has_u) = true;
  if (!has_h || !has_u) throw DataError("run_train: a class is absent from the training split");

  out.bundle.pca = pca_fit(out.train, config.pca_variance_target);
  const ScoreMatrix train_scores = pca_transform(out.train, out.bundle.pca);

  KMeansParams kp;
  kp.k_clusters = config.kmeans_clusters;
  kp.seed = mix_seed(config.seed, 22);
  kp.tol = config.kmeans_tol;
  kp.max_iter = config.kmeans_max_iter;
  kp.restarts = config.kmeans_restarts;
  out.bundle.kmeans = kmeans_fit(train_scores, kp);
  out.bundle.cluster_map =
      map_clusters_to_classes(kmeans_assign(train_scores, out.bundle.kmeans), out.train.labels);

  TreeParams tp;
  tp.max_depth = config.tree_max_depth;
  tp.min_leaf = config.tree_min_leaf;
  out.bundle.tree = tree_fit(train_scores, out.train.labels, tp);
  return out;
}

// The decision tree is the scored classifier; the k-means agreement rate is
// reported alongside as an unsupervised cross-check.
struct EvalResult {
  ConfusionMatrix confusion_matrix;
  MetricsReport metrics;
  double kmeans_agreement{0.0};
  std::size_t test_healthy{0};
  std::size_t test_unhealthy{0};
};

inline EvalResult run_evaluate(const SegmentMatrix& test, const ModelBundle& bundle) {
  if (test.row_count() == 0) throw DataError("run_evaluate: empty test set");
  const ScoreMatrix scores = pca_transform(test, bundle.pca);
  const std::vector<Condition> predicted = tree_predict(bundle.tree, scores);

  EvalResult out;
  out.confusion_matrix = confusion(test.labels, predicted, Condition::healthy);
  out.metrics = compute_metrics(out.confusion_matrix);
  for (Condition c : test.labels) (c == Condition::healthy ? out.test_healthy : out.test_unhealthy) += 1;

  const std::vector<std::size_t> clusters = kmeans_assign(scores, bundle.kmeans);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto it = bundle.cluster_map.find(clusters[i]);
    if (it != bundle.cluster_map.end() && it->second == predicted[i]) ++agree;
  }
  out.kmeans_agreement = static_cast<double>(agree) / static_cast<double>(clusters.size());
  return out;
}

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  nlohmann::json cluster_map = nlohmann::json::object();
  for (const auto& [cluster, cond] : b.cluster_map)
    cluster_map[std::to_string(cluster)] = condition_name(cond);
  return nlohmann::json{{"pca", pca_model_to_json(b.pca)},
                        {"kmeans", kmeans_to_json(b.kmeans)},
                        {"cluster_map", cluster_map},
                        {"tree", tree_to_json(b.tree)}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  ModelBundle b;
  b.pca = pca_model_from_json(j.at("pca"));
  b.kmeans = kmeans_from_json(j.at("kmeans"));
  for (const auto& [key, value] : j.at("cluster_map").items())
    b.cluster_map[std::stoull(key)] = condition_from_name(value.get<std::string>());
  b.tree = tree_from_json(j.at("tree"));
  return b;
}

// ---------------------------------------------------------------------------
// Sweep: full factorial of vibration levels x {energy gate, no gate}.

struct SweepCell {
  double level_deg{0.0};
  bool gated{false};
  bool failed{false};
  std::string error;
  EvalResult eval;
  GateReport gate;
  std::size_t segments_used{0};
  ScoreMatrix test_scores;
  std::vector<Condition> test_labels;
  std::size_t pca_k{0};
  std::vector<double> pca_explained;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

inline SweepCell run_cell(const Session& session, double level_deg, bool gated,
                          const PipelineConfig& config) {
  SweepCell cell;
  cell.level_deg = level_deg;
  cell.gated = gated;
  try {
    std::optional<GateReport> gate;
    if (gated) {
      gate = run_gate(session.signal, config);
      cell.gate = *gate;
    }
    const SegmentationResult seg = run_segment(session.signal, gate, session.truth, config);
    if (seg.segments.row_count() == 0) throw DataError("run_cell: zero segments");
    cell.segments_used = seg.segments.row_count();

    const TrainResult trained = run_train(seg.segments, config);
    cell.eval = run_evaluate(trained.test, trained.bundle);
    cell.test_scores = pca_transform(trained.test, trained.bundle.pca);
    cell.test_labels = trained.test.labels;
    cell.pca_k = trained.bundle.pca.k;
    cell.pca_explained = trained.bundle.pca.explained_ratio;
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

inline SweepResult run_sweep(const PipelineConfig& config) {
  SweepResult result;
  for (double level : config.sweep_levels_deg) {
    PipelineConfig cell_config = config;
    // Band selection legitimately fails on still or nearly-still sessions
    // (nothing dominates the low-frequency range); the sweep always allows
    // the documented full-band fallback so low-vibration cells still gate on
    // amplitude.
    cell_config.gate_fallback_full_band = true;
    const Session session =
        synth_session(make_session_spec(cell_config, level), cell_config.healthy,
                      cell_config.unhealthy);
    result.cells.push_back(run_cell(session, level, false, cell_config));
    result.cells.push_back(run_cell(session, level, true, cell_config));
  }
  return result;
}

inline nlohmann::json sweep_to_json(const SweepResult& sweep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : sweep.cells) {
    nlohmann::json j{{"vibration_level_deg", c.level_deg},
                     {"gating_mode", c.gated ? "energy" : "none"},
                     {"failed", c.failed}};
    if (c.failed) {
      j["error"] = c.error;
    } else {
      j["metrics"] = metrics_to_json(c.eval.metrics);
      j["confusion"] = confusion_to_json(c.eval.confusion_matrix);
      j["kmeans_agreement"] = c.eval.kmeans_agreement;
      j["segments_used"] = c.segments_used;
    }
    cells.push_back(std::move(j));
  }
  return nlohmann::json{{"cells", cells}};
}

// Wide-form sweep report: one row per cell with the five indexes.
inline void sweep_to_csv(const SweepResult& sweep, std::ostream& os) {
  os << "vibration_level_deg,gating_mode,failed,precision,npv,recall,specificity,accuracy,"
        "tp,fp,fn,tn,kmeans_agreement\n";
  for (const auto& c : sweep.cells) {
    os << c.level_deg << ',' << (c.gated ? "energy" : "none") << ',' << (c.failed ? 1 : 0);
    if (c.failed) {
      os << ",n/a,n/a,n/a,n/a,n/a,0,0,0,0,n/a\n";
      continue;
    }
    const auto& m = c.eval.metrics;
    for (const auto& v : {m.precision, m.npv, m.recall, m.specificity, m.accuracy})
      os << ',' << metric_to_string(v, 6);
    const auto& cm = c.eval.confusion_matrix;
    os << ',' << cm.tp << ',' << cm.fp << ',' << cm.fn << ',' << cm.tn << ','
       << c.eval.kmeans_agreement << '\n';
  }
}

// Long-form rows keyed by (level, mode, metric).
inline std::vector<MetricRow> sweep_metric_rows(const SweepResult& sweep) {
  std::vector<MetricRow> rows;
  for (const auto& c : sweep.cells) {
    if (c.failed) continue;
    const auto cell_rows = metric_rows(c.level_deg, c.gated ? "energy" : "none", c.eval.metrics);
    rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
  }
  return rows;
}

// Score scatter export (numeric plot data for the per-cell test sets).
inline void scores_to_csv(const ScoreMatrix& scores, const std::vector<Condition>& labels,
                          std::ostream& os) {
  os << "label";
  for (std::size_t j = 0; j < scores.k; ++j) os << ",pc" << (j + 1);
  os << '\n';
  os.precision(17);
  for (std::size_t r = 0; r < scores.scores.rows; ++r) {
    os << condition_name(labels[r]);
    for (std::size_t j = 0; j < scores.k; ++j) os << ',' << scores.scores.at(r, j);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Run manifest: digests proving a rerun reproduced the same artifacts.

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_digest(const PipelineConfig& config) {
  std::ostringstream ss;
  config_to_stream(config, ss);
  return fnv1a_hex(ss.str());
}

struct RunManifest {
  std::string toolkit_version{kToolkitVersion};
  std::string config_hash;
  std::map<std::string, std::string> inputs;         // path -> digest
  std::map<std::string, std::string> stage_outputs;  // path -> digest
  std::string timestamp;
};

inline std::string iso_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  return nlohmann::json{{"toolkit_version", m.toolkit_version},
                        {"config_hash", m.config_hash},
                        {"inputs", m.inputs},
                        {"stage_outputs", m.stage_outputs},
                        {"timestamp", m.timestamp}};
}

}  // namespace tapkit
