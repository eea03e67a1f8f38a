// Acceptance suite. Runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion; the process exit code is the number of
// failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tapkit/pipeline.hpp"
#include "oracles.hpp"

using namespace tapkit;

namespace {

struct Check {
  std::string name;
  bool pass{true};
  std::string detail;
};

std::vector<Check> g_checks;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void record(const std::string& name, bool pass, const std::string& detail) {
  g_checks.push_back({name, pass, detail});
}

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gauss(std::mt19937_64& rng) {
  double u1 = u01(rng);
  while (u1 <= 1e-300) u1 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u01(rng));
}

// --------------------------------------------------------------------------
// 1. Energy accounting: time-domain and frequency-domain totals agree.

void criterion_parseval() {
  Timer timer;
  std::mt19937_64 rng(101);
  std::size_t failures = 0;
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 256 + rng() % 3841;  // 256..4096
    AudioSignal s;
    s.sample_rate = 44100;
    s.samples.resize(n);
    for (auto& v : s.samples) v = gauss(rng);
    const double et = total_energy_time(s);
    const double ef = total_energy_freq(s);
    const double rel = std::abs(et - ef) / std::max(et, 1e-30);
    worst = std::max(worst, rel);
    if (!(rel < 1e-9)) ++failures;
  }
  const double elapsed = timer.seconds();
  std::ostringstream detail;
  detail << "100 signals, worst relative gap " << worst << ", " << elapsed << " s";
  record("1 energy identity (time vs frequency, 100 random signals)",
         failures == 0 && elapsed < 5.0, detail.str());
}

// --------------------------------------------------------------------------
// 2. Decomposition vs an independent covariance eigensolver + reconstruction
//    error identity.

void criterion_pca_oracle() {
  Timer timer;
  std::mt19937_64 rng(202);
  std::size_t cases = 0, loading_checks = 0;
  std::size_t value_failures = 0, loading_failures = 0, eckart_failures = 0;
  double worst_value = 0.0, worst_loading = 0.0, worst_eckart = 0.0;

  while (cases < 100) {
    const std::size_t m = 2 + rng() % 7;  // 2..8
    const std::size_t n = 2 + rng() % 7;
    SegmentMatrix data;
    data.data = Matrix(m, n);
    data.labels.assign(m, Condition::healthy);
    data.source_ids.assign(m, "case");
    for (auto& v : data.data.data) v = gauss(rng);
    ++cases;

    PcaModel model = pca_fit(data, 1.0);

    // Centered copy for the oracle.
    Matrix centered(m, n);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) centered.at(r, c) = data.data.at(r, c) - model.mean[c];
    oracle::EigResult eig = oracle::covariance_eig(centered);

    const std::size_t r_modes = model.singular_values.size();
    const double sigma_max = model.singular_values.empty() ? 0.0 : model.singular_values[0];
    for (std::size_t i = 0; i < r_modes; ++i) {
      const double ref = std::sqrt(std::max(0.0, eig.values[i]));
      const double diff = std::abs(model.singular_values[i] - ref) / std::max(sigma_max, 1e-30);
      worst_value = std::max(worst_value, diff);
      if (!(diff < 1e-7)) ++value_failures;
    }

    // Loading columns compared wherever the mode is numerically identified:
    // non-negligible variance and a spectral gap (a degenerate pair has no
    // preferred basis and either answer is correct).
    for (std::size_t i = 0; i < r_modes; ++i) {
      const double s2 = model.singular_values[i] * model.singular_values[i];
      if (s2 < 1e-10 * model.total_variance) continue;
      const double gap_lo = (i + 1 < eig.values.size())
                                ? std::abs(eig.values[i] - eig.values[i + 1])
                                : eig.values[i];
      const double gap_hi = (i > 0) ? std::abs(eig.values[i - 1] - eig.values[i]) : eig.values[i];
      if (std::min(gap_lo, gap_hi) < 1e-3 * std::max(eig.values[0], 1e-30)) continue;

      Matrix ref_col(n, 1);
      for (std::size_t r = 0; r < n; ++r) ref_col.at(r, 0) = eig.vectors.at(r, i);
      oracle::normalize_sign_column(ref_col, 0);
      ++loading_checks;
      double max_diff = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        max_diff = std::max(max_diff, std::abs(model.loadings.at(r, i) - ref_col.at(r, 0)));
      worst_loading = std::max(worst_loading, max_diff);
      if (!(max_diff < 1e-7)) ++loading_failures;
    }

    // Reconstruction-error identity for a truncated model.
    if (r_modes >= 2) {
      PcaModel truncated = pca_fit(data, 0.5);
      if (truncated.k < r_modes) {
        const ScoreMatrix scores = pca_transform(data, truncated);
        const Matrix recon = pca_reconstruct(scores, truncated);
        double err2 = 0.0;
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            const double d = recon.at(r, c) - data.data.at(r, c);
            err2 += d * d;
          }
        double tail = 0.0;
        for (std::size_t i = truncated.k; i < model.singular_values.size(); ++i)
          tail += model.singular_values[i] * model.singular_values[i];
        const double diff = std::abs(std::sqrt(err2) - std::sqrt(tail));
        worst_eckart = std::max(worst_eckart, diff);
        if (!(diff < 1e-8)) ++eckart_failures;
      }
    }
  }

  const double elapsed = timer.seconds();
  std::ostringstream detail;
  detail << cases << " cases, " << loading_checks << " loading columns compared, worst: values "
         << worst_value << ", loadings " << worst_loading << ", reconstruction " << worst_eckart
         << ", " << elapsed << " s";
  record("2 decomposition matches covariance eigensolver + truncation error identity",
         value_failures == 0 && loading_failures == 0 && eckart_failures == 0 &&
             loading_checks > 300 && elapsed < 10.0,
         detail.str());
}

// --------------------------------------------------------------------------
// 3. Clustering reaches the exhaustive-search optimum on small instances.

void criterion_kmeans_oracle() {
  Timer timer;
  std::mt19937_64 rng(303);
  std::size_t failures = 0;
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t m = 3 + rng() % 6;  // 3..8
    const std::size_t d = 1 + rng() % 3;  // 1..3
    ScoreMatrix points;
    points.k = d;
    points.scores = Matrix(m, d);
    for (auto& v : points.scores.data) v = 2.0 * gauss(rng);

    KMeansParams params;
    params.k_clusters = 2;
    params.seed = rng();
    params.restarts = 16;
    const KMeansModel model = kmeans_fit(points, params);
    const double best = oracle::best_two_partition_sse(points.scores);
    const double gap = std::abs(model.inertia - best);
    worst = std::max(worst, gap);
    if (!(gap < 1e-9)) ++failures;
  }
  const double elapsed = timer.seconds();
  std::ostringstream detail;
  detail << "50 instances, worst optimum gap " << worst << ", " << elapsed << " s";
  record("3 clustering inertia equals exhaustive 2-partition optimum", failures == 0 && elapsed < 10.0,
         detail.str());
}

// --------------------------------------------------------------------------
// 4. The five indexes reproduce the published per-level tables from the
//    reconstructed confusion counts.

struct TableRow {
  double level;
  const char* mode;
  ConfusionMatrix cm;
  double precision, npv, recall, specificity, accuracy;
  bool specificity_flagged;  // published value disagrees with its own counts
};

void criterion_metrics_tables() {
  Timer timer;
  const std::vector<TableRow> rows = {
      {0, "none", {38, 0, 0, 39}, 1.00, 1.00, 1.00, 1.00, 1.00, false},
      {1, "none", {96, 0, 1, 96}, 1.00, 0.99, 0.99, 1.00, 0.99, false},
      {3, "none", {92, 5, 39, 57}, 0.94, 0.59, 0.70, 0.91, 0.77, false},
      {5, "none", {90, 6, 47, 50}, 0.93, 0.51, 0.65, 0.89, 0.72, false},
      {0, "energy", {38, 0, 0, 39}, 1.00, 1.00, 1.00, 1.00, 1.00, false},
      {1, "energy", {96, 0, 0, 97}, 1.00, 1.00, 1.00, 1.00, 1.00, false},
      {3, "energy", {96, 0, 2, 95}, 1.00, 0.98, 0.98, 0.98, 0.99, true},
      {5, "energy", {96, 0, 2, 95}, 1.00, 0.98, 0.98, 0.98, 0.99, true},
  };

  bool pass = true;
  std::ostringstream detail;
  for (const auto& row : rows) {
    const MetricsReport m = compute_metrics(row.cm);
    auto close = [](const std::optional<double>& got, double want) {
      return got && std::abs(*got - want) <= 0.01 + 1e-12;
    };
    bool row_ok = close(m.precision, row.precision) && close(m.npv, row.npv) &&
                  close(m.recall, row.recall) && close(m.accuracy, row.accuracy);
    if (row.specificity_flagged) {
      // Documented discrepancy: the published counts give specificity 1.00
      // while the published table prints 0.98.
      row_ok = row_ok && m.specificity && std::abs(*m.specificity - 1.00) < 1e-12;
    } else {
      row_ok = row_ok && close(m.specificity, row.specificity);
    }
    if (!row_ok) {
      pass = false;
      detail << "[" << row.level << " deg " << row.mode << " mismatch] ";
    }
  }
  const double elapsed = timer.seconds();
  detail << "8 table rows, two flagged specificity cells verified at 1.00, " << elapsed << " s";
  record("4 index formulas reproduce the published tables within 0.01", pass && elapsed < 1.0,
         detail.str());
}

// --------------------------------------------------------------------------
// 5. Segmentation: exact counts on impulse trains; spacing, soundness and
//    bound invariants over randomized cases.

void criterion_segmentation() {
  Timer timer;
  std::mt19937_64 rng(505);
  std::size_t failures = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2000 + rng() % 4000;
    const std::size_t delta = 10 + rng() % 191;
    AudioSignal s;
    s.sample_rate = 44100;
    s.samples.assign(n, 0.0);

    std::vector<std::size_t> truth;
    std::size_t pos = 1 + rng() % delta;
    while (pos + 1 < n) {
      truth.push_back(pos);
      s.samples[pos] = 0.2 + 0.8 * u01(rng);
      pos += delta + 1 + rng() % (2 * delta);
    }
    if (truth.empty()) continue;

    const PeakSet peaks = detect_peaks(s, delta);
    if (peaks.size() != truth.size()) {
      ++failures;
      continue;
    }
    // determinism
    const PeakSet again = detect_peaks(s, delta);
    bool same = again.size() == peaks.size();
    for (std::size_t i = 0; same && i < peaks.size(); ++i)
      same = again.peaks[i].index == peaks.peaks[i].index &&
             again.peaks[i].amplitude == peaks.peaks[i].amplitude;
    if (!same) {
      ++failures;
      continue;
    }
    // spacing + soundness
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      const std::size_t idx = peaks.peaks[i].index;
      if (i > 0 && idx - peaks.peaks[i - 1].index < delta) ++failures;
      if (!(s.samples[idx] > s.samples[idx - 1] && s.samples[idx] > s.samples[idx + 1])) ++failures;
    }
    // amplitude bound filter is a subset with the strict predicate
    AmplitudeThresholds bounds{0.3, 0.9};
    const PeakSet kept = filter_peaks(peaks, bounds);
    std::size_t expected = 0;
    for (const auto& p : peaks.peaks)
      if (p.amplitude > bounds.lambda_min && p.amplitude < bounds.lambda_max) ++expected;
    if (kept.size() != expected) ++failures;
    for (const auto& p : kept.peaks)
      if (!(p.amplitude > bounds.lambda_min && p.amplitude < bounds.lambda_max)) ++failures;
  }
  const double elapsed = timer.seconds();
  std::ostringstream detail;
  detail << "1000 randomized impulse trains, " << failures << " violations, " << elapsed << " s";
  record("5 segmentation determinism, exact counts and invariants", failures == 0 && elapsed < 10.0,
         detail.str());
}

// --------------------------------------------------------------------------
// 6-9. Desk-scale trend reproduction from one default-config sweep.

const SweepCell* find_cell(const SweepResult& sweep, double level, bool gated) {
  for (const auto& c : sweep.cells)
    if (c.level_deg == level && c.gated == gated && !c.failed) return &c;
  return nullptr;
}

void criteria_trends() {
  Timer timer;
  PipelineConfig config;
  const SweepResult sweep = run_sweep(config);
  const double elapsed = timer.seconds();

  auto acc = [&](double level, bool gated) -> double {
    const SweepCell* cell = find_cell(sweep, level, gated);
    if (!cell || !cell->eval.metrics.accuracy) return -1.0;
    return *cell->eval.metrics.accuracy;
  };

  // 6. zero-vibration baseline
  {
    const SweepCell* none = find_cell(sweep, 0.0, false);
    const SweepCell* energy = find_cell(sweep, 0.0, true);
    bool pass = none && energy;
    std::ostringstream detail;
    if (pass) {
      pass = acc(0.0, false) == 1.0 && acc(0.0, true) == 1.0 &&
             none->eval.test_healthy >= 38 && none->eval.test_unhealthy >= 38 &&
             energy->eval.test_healthy >= 38 && energy->eval.test_unhealthy >= 38;
      detail << "accuracy none=" << acc(0.0, false) << " energy=" << acc(0.0, true)
             << ", test taps per class " << none->eval.test_healthy << "/"
             << none->eval.test_unhealthy;
    } else {
      detail << "0-deg cell failed";
    }
    record("6 zero-vibration baseline: accuracy 1.00 with 38+ test taps per class", pass,
           detail.str());
  }

  // 7. degradation ladder without the energy method
  {
    const double a0 = acc(0.0, false), a1 = acc(1.0, false), a3 = acc(3.0, false),
                 a5 = acc(5.0, false);
    std::ostringstream detail;
    detail << "no-gate accuracy ladder " << a0 << " / " << a1 << " / " << a3 << " / " << a5;
    const bool pass = a0 >= a1 && a1 >= a3 && a3 >= a5 && a1 >= 0.95 && a5 <= 0.85 &&
                      std::abs(a3 - 0.77) <= 0.10 + 1e-12 && std::abs(a5 - 0.72) <= 0.10 + 1e-12;
    record("7 degradation ladder (no gate): ordered, 1 deg >= 0.95, degraded cells in regime", pass,
           detail.str());
  }

  // 8. recovery with the energy method
  {
    const double g0 = acc(0.0, true), g1 = acc(1.0, true), g3 = acc(3.0, true), g5 = acc(5.0, true);
    std::ostringstream detail;
    detail << "gated accuracy " << g0 << " / " << g1 << " / " << g3 << " / " << g5;
    const double floor = 0.98 - 0.01;
    const bool pass = g0 >= floor && g1 >= floor && g3 >= floor && g5 >= floor;
    record("8 recovery (energy gate): accuracy >= 0.98 (tolerance -0.01) at every level", pass,
           detail.str());
  }

  // 9. variance capture on the zero-vibration training set
  {
    const SweepCell* cell = find_cell(sweep, 0.0, false);
    bool pass = cell && cell->pca_k >= 1;
    std::ostringstream detail;
    if (pass) {
      double cum2 = cell->pca_explained[0];
      if (cell->pca_explained.size() > 1) cum2 += cell->pca_explained[1];
      detail << "retained modes k=" << cell->pca_k << ", first two modes " << cum2;
      pass = cell->pca_k <= 3 && cum2 >= 0.80 && cum2 <= 0.99;
    } else {
      detail << "0-deg cell failed";
    }
    record("9 variance capture: k <= 3 at the 0.90 target, first two modes in [0.80, 0.99]", pass,
           detail.str());
  }

  std::ostringstream rt;
  rt << "sweep runtime " << elapsed << " s";
  record("6-9 trend suite runtime < 60 s", elapsed < 60.0, rt.str());
}

}  // namespace

int main() {
  criterion_parseval();
  criterion_pca_oracle();
  criterion_kmeans_oracle();
  criterion_metrics_tables();
  criterion_segmentation();
  criteria_trends();

  int failures = 0;
  for (const auto& check : g_checks) {
    std::printf("%s — %s: %s\n", check.pass ? "PASS" : "FAIL", check.name.c_str(),
                check.detail.c_str());
    if (!check.pass) ++failures;
  }
  std::printf("%zu/%zu criteria passed\n", g_checks.size() - static_cast<std::size_t>(failures),
              g_checks.size());
  return failures;
}
