#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/segmenter.hpp"

#include "json.hpp"

namespace tapkit {

struct ConfusionMatrix {
  std::size_t tp{0}, fp{0}, fn{0}, tn{0};
  std::size_t total() const { return tp + fp + fn + tn; }
};

// The five evaluation indexes. A ratio with a zero denominator is undefined
// (rendered "n/a"), never silently 0.
struct MetricsReport {
  std::optional<double> precision;    // TP / (TP + FP)
  std::optional<double> npv;          // TN / (TN + FN)
  std::optional<double> recall;       // TP / (TP + FN)
  std::optional<double> specificity;  // TN / (TN + FP)
  std::optional<double> accuracy;     // (TP + TN) / total
};

// Counts with the healthy (good-condition) class as positive by default:
// TP = healthy tap classified healthy, TN = unhealthy tap classified
// unhealthy.
inline ConfusionMatrix confusion(const std::vector<Condition>& truth,
                                 const std::vector<Condition>& predicted,
                                 Condition positive_class = Condition::healthy) {
  if (truth.empty()) throw std::invalid_argument("confusion: empty input");
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual_pos = truth[i] == positive_class;
    const bool pred_pos = predicted[i] == positive_class;
    if (actual_pos && pred_pos)
      ++cm.tp;
    else if (actual_pos && !pred_pos)
      ++cm.fn;
    else if (!actual_pos && pred_pos)
      ++cm.fp;
    else
      ++cm.tn;
  }
  return cm;
}

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() < 1) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  MetricsReport r;
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.npv = ratio(cm.tn, cm.tn + cm.fn);
  r.recall = ratio(cm.tp, cm.tp + cm.fn);
  r.specificity = ratio(cm.tn, cm.tn + cm.fp);
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  return r;
}

inline std::string metric_to_string(const std::optional<double>& v, int decimals = 2) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, *v);
  return buf;
}

inline nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
  return nlohmann::json{{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  auto put = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return nlohmann::json{{"precision", put(r.precision)},
                        {"npv", put(r.npv)},
                        {"recall", put(r.recall)},
                        {"specificity", put(r.specificity)},
                        {"accuracy", put(r.accuracy)}};
}

// Long-form report rows keyed by (vibration level, gating mode, metric), the
// cross-tabulation emitted by the sweep.
struct MetricRow {
  double vibration_level_deg{0.0};
  std::string gating_mode;  // "none" | "energy"
  std::string metric;
  std::optional<double> value;
};

inline std::vector<MetricRow> metric_rows(double level_deg, const std::string& mode,
                                          const MetricsReport& r) {
  return {{level_deg, mode, "precision", r.precision},
          {level_deg, mode, "npv", r.npv},
          {level_deg, mode, "recall", r.recall},
          {level_deg, mode, "specificity", r.specificity},
          {level_deg, mode, "accuracy", r.accuracy}};
}

inline void metric_rows_to_csv(const std::vector<MetricRow>& rows, std::ostream& os) {
  os << "vibration_level_deg,gating_mode,metric,value\n";
  os.precision(17);
  for (const auto& row : rows) {
    os << row.vibration_level_deg << ',' << row.gating_mode << ',' << row.metric << ',';
    if (row.value)
      os << *row.value;
    else
      os << "n/a";
    os << '\n';
  }
}

}  // namespace tapkit
