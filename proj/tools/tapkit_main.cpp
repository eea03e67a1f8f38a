// tapkit: acoustic tap-testing pipeline CLI.
//
// Subcommands mirror the pipeline stages; every stage reads and writes plain
// files (WAV, CSV, JSON) so intermediate artifacts stay inspectable and any
// stage can be rerun in isolation. A manifest with content digests is written
// next to the outputs of each run.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "tapkit/config.hpp"
#include "tapkit/pipeline.hpp"
#include "tapkit/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitIo = 4;

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw tapkit::IoError("cannot open for digest: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return tapkit::fnv1a_hex(ss.str());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw tapkit::IoError("cannot open for writing: " + path);
  os << content;
  if (!os) throw tapkit::IoError("write failed: " + path);
}

struct ManifestBuilder {
  tapkit::RunManifest manifest;

  explicit ManifestBuilder(const tapkit::PipelineConfig& config) {
    manifest.config_hash = tapkit::config_digest(config);
    manifest.timestamp = tapkit::iso_timestamp_now();
  }

  void input(const std::string& path) { manifest.inputs[path] = file_digest(path); }
  void output(const std::string& path) { manifest.stage_outputs[path] = file_digest(path); }

  void save(const fs::path& dir, const std::string& name = "manifest.json") {
    write_text((dir / name).string(), tapkit::manifest_to_json(manifest).dump(2) + "\n");
  }
};

tapkit::PipelineConfig load_effective_config(const std::string& config_path,
                                             std::optional<std::uint64_t> seed_override) {
  tapkit::PipelineConfig config;
  if (!config_path.empty()) config = tapkit::load_config(config_path);
  if (seed_override) config.seed = *seed_override;
  return config;
}

std::string level_tag(double level) {
  std::ostringstream ss;
  ss << level;
  std::string s = ss.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

tapkit::SegmentMatrix load_segments(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw tapkit::IoError("cannot open segments file: " + path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".tapx")
    return tapkit::segments_from_binary(is);
  return tapkit::segments_from_csv(is);
}

void print_metrics(std::ostream& os, const tapkit::EvalResult& eval) {
  const auto& m = eval.metrics;
  const auto& cm = eval.confusion_matrix;
  os << "  confusion: tp=" << cm.tp << " fp=" << cm.fp << " fn=" << cm.fn << " tn=" << cm.tn << "\n";
  os << "  precision=" << tapkit::metric_to_string(m.precision)
     << " npv=" << tapkit::metric_to_string(m.npv)
     << " recall=" << tapkit::metric_to_string(m.recall)
     << " specificity=" << tapkit::metric_to_string(m.specificity)
     << " accuracy=" << tapkit::metric_to_string(m.accuracy) << "\n";
  os << "  kmeans agreement with tree: " << tapkit::metric_to_string({eval.kmeans_agreement})
     << "\n";
}

int cmd_synth(const tapkit::PipelineConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  ManifestBuilder manifest(config);
  for (double level : config.sweep_levels_deg) {
    const tapkit::Session session = tapkit::synth_session(
        tapkit::make_session_spec(config, level), config.healthy, config.unhealthy);
    const std::string tag = level_tag(level);
    const std::string wav_path = (fs::path(out_dir) / ("session_" + tag + "deg.wav")).string();
    const std::string csv_path = (fs::path(out_dir) / ("truth_" + tag + "deg.csv")).string();
    tapkit::write_wav(wav_path, session.signal);
    std::ostringstream truth;
    tapkit::ground_truth_to_csv(session.truth, truth);
    write_text(csv_path, truth.str());
    manifest.output(wav_path);
    manifest.output(csv_path);
    std::cout << "wrote " << wav_path << " (" << session.signal.samples.size() << " samples, "
              << session.truth.size() << " taps)\n";
  }
  manifest.save(out_dir);
  return kExitOk;
}

int cmd_gate(const tapkit::PipelineConfig& config, const std::string& wav_path,
             const std::string& out_path) {
  const tapkit::AudioSignal signal = tapkit::read_wav(wav_path);
  tapkit::GateReport report;
  try {
    report = tapkit::run_gate(signal, config);
  } catch (const tapkit::DataError& e) {
    std::cerr << "error: " << e.what()
              << "\nhint: rerun with --fallback-full-band to derive amplitude thresholds "
                 "from the full band\n";
    return kExitData;
  }
  write_text(out_path, tapkit::gate_report_to_json(report).dump(2) + "\n");

  ManifestBuilder manifest(config);
  manifest.input(wav_path);
  manifest.output(out_path);
  manifest.save(fs::path(out_path).parent_path().empty() ? fs::path(".")
                                                         : fs::path(out_path).parent_path(),
                fs::path(out_path).filename().string() + ".manifest.json");

  std::cout << "band: [" << report.band.f_min_hz << ", " << report.band.f_max_hz << "] Hz";
  if (report.full_band_fallback) std::cout << " (full-band fallback)";
  if (report.f_max_at_nyquist) std::cout << " (warning: f_max closed at Nyquist)";
  std::cout << "\nbaseline: mean " << report.baseline.mean_spl_db << " dB, std "
            << report.baseline.std_spl_db << " dB\nthresholds: lambda_min "
            << report.thresholds.lambda_min << ", lambda_max " << report.thresholds.lambda_max
            << "\nwrote " << out_path << "\n";
  return kExitOk;
}

int cmd_segment(const tapkit::PipelineConfig& config, const std::string& wav_path,
                const std::string& gate_path, bool no_gate, const std::string& truth_path,
                const std::string& out_base) {
  const tapkit::AudioSignal signal = tapkit::read_wav(wav_path);

  std::optional<tapkit::GateReport> gate;
  if (!no_gate) {
    std::ifstream is(gate_path);
    if (!is) throw tapkit::IoError("cannot open gate report: " + gate_path);
    gate = tapkit::gate_report_from_json(json::parse(is));
  }

  std::vector<tapkit::GroundTruthEvent> truth;
  if (!truth_path.empty()) {
    std::ifstream is(truth_path);
    if (!is) throw tapkit::IoError("cannot open ground truth: " + truth_path);
    truth = tapkit::ground_truth_from_csv(is);
  }

  const tapkit::SegmentationResult result = tapkit::run_segment(
      signal, gate, truth, config, fs::path(wav_path).filename().string());

  std::cout << "peaks detected: " << result.peaks_detected
            << ", within bounds: " << result.peaks_in_bounds
            << ", unmatched dropped: " << result.unmatched_dropped
            << ", boundary dropped: " << result.segments.dropped_boundary
            << ", segments: " << result.segments.row_count() << "\n";
  if (result.segments.row_count() == 0) {
    std::cerr << "error: zero segments extracted\n";
    return kExitData;
  }

  const std::string csv_path = out_base + ".csv";
  const std::string bin_path = out_base + ".tapx";
  {
    std::ofstream os(csv_path);
    tapkit::segments_to_csv(result.segments, os);
  }
  {
    std::ofstream os(bin_path, std::ios::binary);
    tapkit::segments_to_binary(result.segments, os);
  }

  ManifestBuilder manifest(config);
  manifest.input(wav_path);
  if (!no_gate) manifest.input(gate_path);
  if (!truth_path.empty()) manifest.input(truth_path);
  manifest.output(csv_path);
  manifest.output(bin_path);
  manifest.save(fs::path(out_base).parent_path().empty() ? fs::path(".")
                                                         : fs::path(out_base).parent_path(),
                fs::path(out_base).filename().string() + ".manifest.json");
  std::cout << "wrote " << csv_path << " and " << bin_path << "\n";
  return kExitOk;
}

int cmd_train(const tapkit::PipelineConfig& config, const std::string& segments_path,
              const std::string& out_path) {
  const tapkit::SegmentMatrix segments = load_segments(segments_path);
  const tapkit::TrainResult trained = tapkit::run_train(segments, config);

  json bundle = tapkit::bundle_to_json(trained.bundle);
  json split_info;
  split_info["train_source_ids"] = trained.train.source_ids;
  split_info["test_source_ids"] = trained.test.source_ids;
  bundle["split"] = split_info;
  write_text(out_path, bundle.dump() + "\n");

  ManifestBuilder manifest(config);
  manifest.input(segments_path);
  manifest.output(out_path);
  manifest.save(fs::path(out_path).parent_path().empty() ? fs::path(".")
                                                         : fs::path(out_path).parent_path(),
                fs::path(out_path).filename().string() + ".manifest.json");

  std::cout << "train rows: " << trained.train.row_count()
            << ", test rows: " << trained.test.row_count()
            << ", retained modes: " << trained.bundle.pca.k << " (cumulative "
            << tapkit::cumulative_energy(trained.bundle.pca, trained.bundle.pca.k)
            << ")\nwrote " << out_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const tapkit::PipelineConfig& config, const std::string& segments_path,
                 const std::string& bundle_path, const std::string& out_dir) {
  const tapkit::SegmentMatrix all = load_segments(segments_path);

  std::ifstream is(bundle_path);
  if (!is) throw tapkit::IoError("cannot open model bundle: " + bundle_path);
  const json bundle_json = json::parse(is);
  const tapkit::ModelBundle bundle = tapkit::bundle_from_json(bundle_json);

  // Score the persisted test split when present, otherwise everything.
  tapkit::SegmentMatrix test = all;
  if (bundle_json.contains("split")) {
    const auto test_ids = bundle_json["split"]["test_source_ids"].get<std::vector<std::string>>();
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < all.row_count(); ++r)
      if (std::find(test_ids.begin(), test_ids.end(), all.source_ids[r]) != test_ids.end())
        rows.push_back(r);
    if (!rows.empty()) test = tapkit::detail::take_rows(all, rows);
  }

  const tapkit::EvalResult eval = tapkit::run_evaluate(test, bundle);

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.json").string();
  json out;
  out["metrics"] = tapkit::metrics_to_json(eval.metrics);
  out["confusion"] = tapkit::confusion_to_json(eval.confusion_matrix);
  out["kmeans_agreement"] = eval.kmeans_agreement;
  write_text(metrics_path, out.dump(2) + "\n");

  const std::string confusion_path = (fs::path(out_dir) / "confusion.csv").string();
  {
    std::ostringstream ss;
    const auto& cm = eval.confusion_matrix;
    ss << "tp,fp,fn,tn\n" << cm.tp << ',' << cm.fp << ',' << cm.fn << ',' << cm.tn << '\n';
    write_text(confusion_path, ss.str());
  }

  ManifestBuilder manifest(config);
  manifest.input(segments_path);
  manifest.input(bundle_path);
  manifest.output(metrics_path);
  manifest.output(confusion_path);
  manifest.save(out_dir, "evaluate.manifest.json");

  std::cout << "evaluated " << test.row_count() << " taps\n";
  print_metrics(std::cout, eval);
  std::cout << "wrote " << metrics_path << "\n";
  return kExitOk;
}

int cmd_sweep(const tapkit::PipelineConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const tapkit::SweepResult sweep = tapkit::run_sweep(config);

  ManifestBuilder manifest(config);

  const std::string report_path = (fs::path(out_dir) / "sweep_report.csv").string();
  {
    std::ostringstream ss;
    tapkit::sweep_to_csv(sweep, ss);
    write_text(report_path, ss.str());
  }
  const std::string long_path = (fs::path(out_dir) / "metrics_long.csv").string();
  {
    std::ostringstream ss;
    tapkit::metric_rows_to_csv(tapkit::sweep_metric_rows(sweep), ss);
    write_text(long_path, ss.str());
  }
  const std::string json_path = (fs::path(out_dir) / "sweep.json").string();
  write_text(json_path, tapkit::sweep_to_json(sweep).dump(2) + "\n");
  manifest.output(report_path);
  manifest.output(long_path);
  manifest.output(json_path);

  for (const auto& cell : sweep.cells) {
    if (cell.failed) continue;
    const std::string scores_path =
        (fs::path(out_dir) /
         ("scores_" + level_tag(cell.level_deg) + "deg_" + (cell.gated ? "energy" : "none") + ".csv"))
            .string();
    std::ostringstream ss;
    tapkit::scores_to_csv(cell.test_scores, cell.test_labels, ss);
    write_text(scores_path, ss.str());
    manifest.output(scores_path);
  }
  manifest.save(out_dir, "sweep.manifest.json");

  bool any_failed = false;
  for (const auto& cell : sweep.cells) {
    std::cout << cell.level_deg << " deg, " << (cell.gated ? "energy method" : "w/o energy method")
              << ":\n";
    if (cell.failed) {
      std::cout << "  FAILED: " << cell.error << "\n";
      any_failed = true;
      continue;
    }
    print_metrics(std::cout, cell.eval);
  }
  std::cout << "wrote " << report_path << ", " << long_path << ", " << json_path << "\n";
  return any_failed ? kExitData : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acoustic tap-testing toolkit: synthetic sessions, energy gating, "
               "segmentation, training and scoring"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "pipeline config file (key = value sections)");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--out-dir", out_dir, "output directory");

  auto* synth = app.add_subcommand("synth", "generate sessions for every sweep vibration level");

  auto* gate = app.add_subcommand("gate", "derive band and amplitude thresholds from a recording");
  std::string gate_wav, gate_out = "gate_report.json";
  bool gate_fallback = false;
  gate->add_option("wav", gate_wav, "input recording (16-bit PCM mono WAV)")->required();
  gate->add_option("--out", gate_out, "gate report path");
  gate->add_flag("--fallback-full-band", gate_fallback,
                 "fall back to the full band when no band qualifies");

  auto* segment = app.add_subcommand("segment", "detect, bound and cut tap segments");
  std::string seg_wav, seg_gate, seg_truth, seg_out = "segments";
  bool seg_no_gate = false;
  segment->add_option("wav", seg_wav, "input recording")->required();
  segment->add_option("--gate", seg_gate, "gate report from the gate stage");
  segment->add_flag("--no-gate", seg_no_gate, "use fixed naive amplitude bounds instead of a gate report");
  segment->add_option("--truth", seg_truth, "ground-truth CSV used to label segments");
  segment->add_option("--out", seg_out, "output basename (.csv and .tapx are appended)");

  auto* train = app.add_subcommand("train", "split, decompose and fit the classifiers");
  std::string train_segments, train_out = "model_bundle.json";
  train->add_option("segments", train_segments, "segments file (.tapx or .csv)")->required();
  train->add_option("--out", train_out, "model bundle path");

  auto* evaluate = app.add_subcommand("evaluate", "score a segments file against a model bundle");
  std::string eval_segments, eval_bundle;
  evaluate->add_option("segments", eval_segments, "segments file (.tapx or .csv)")->required();
  evaluate->add_option("bundle", eval_bundle, "model bundle from train")->required();

  auto* sweep = app.add_subcommand("sweep",
                                   "full factorial: vibration levels x {energy method, none}");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    tapkit::PipelineConfig config = load_effective_config(config_path, seed_override);
    if (*gate && gate_fallback) config.gate_fallback_full_band = true;

    if (*synth) return cmd_synth(config, out_dir);
    if (*gate) return cmd_gate(config, gate_wav, gate_out);
    if (*segment) {
      if (seg_no_gate ? !seg_gate.empty() : seg_gate.empty()) {
        std::cerr << "error: segment needs exactly one of --gate <report> or --no-gate\n";
        return kExitUsage;
      }
      return cmd_segment(config, seg_wav, seg_gate, seg_no_gate, seg_truth, seg_out);
    }
    if (*train) return cmd_train(config, train_segments, train_out);
    if (*evaluate) return cmd_evaluate(config, eval_segments, eval_bundle, out_dir);
    if (*sweep) return cmd_sweep(config, out_dir);
  } catch (const tapkit::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const tapkit::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
