#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/synth.hpp"

namespace tapkit {

// Every tunable of the pipeline, with the library defaults. Serializes to a
// sectioned key=value file; parsing rejects unknown sections and keys so a
// typo never silently falls back to a default.
struct PipelineConfig {
  // session / generator
  std::uint64_t seed{42};
  int sample_rate{44100};
  std::size_t taps_healthy{96};
  std::size_t taps_unhealthy{97};
  double tap_interval_s{0.713};
  double lead_in_s{2.0};
  double session_duration_s{150.0};
  double noise_floor_db{-52.0};
  double noise_mod_depth{0.75};
  double noise_mod_hz{0.3};
  double ambient_rms{0.003};
  double ambient_low_hz{25.0};
  double ambient_high_hz{220.0};
  double ambient_mod_depth{0.8};
  double ambient_mod_hz{0.17};
  double rumble_per_deg{0.011};
  double rattle_rate_per_deg_hz{0.25};
  double rattle_amp_per_deg{0.25};
  double rattle_amp_cap{0.85};
  double rattle_low_hz{40.0};
  double rattle_high_hz{90.0};
  double coupling_per_deg{0.12};
  double gain_floor{0.2};

  // vibration profile
  double vibration_frequency_hz{0.5};
  double vibration_phase_deg[3]{0.0, 0.0, 0.0};

  // tap templates
  TapTemplate healthy{healthy_template()};
  TapTemplate unhealthy{unhealthy_template()};

  // short-time energy
  std::size_t ste_window_len{2048};
  std::size_t ste_hop{512};

  // spectral estimation
  std::size_t welch_seg_len{1024};
  double welch_overlap{0.5};

  // energy gate
  double gate_low_pct{25.0};
  double gate_high_pct{75.0};
  double gate_drop_db{20.0};
  double gate_slope_eps_db_per_bin{0.01};
  double gate_low_freq_search_max_hz{500.0};
  std::size_t gate_smooth_bins{9};
  double gate_k_low{3.0};
  double gate_k_high{12.0};
  double gate_p_ref{1.0};
  double gate_min_margin_db{6.0};
  bool gate_fallback_full_band{false};

  // segmentation
  double segment_delta_s{0.5};
  std::size_t segment_len{4096};
  double segment_pre_fraction{0.1};
  double segment_label_match_tol_s{0.25};
  double naive_lambda_min{0.01};
  double naive_lambda_max{1e9};

  // split / models
  double train_fraction{0.6};
  bool stratified{true};
  double pca_variance_target{0.9};
  std::size_t kmeans_clusters{2};
  std::size_t kmeans_restarts{16};
  double kmeans_tol{1e-6};
  std::size_t kmeans_max_iter{300};
  std::size_t tree_max_depth{4};
  std::size_t tree_min_leaf{2};

  // sweep
  std::vector<double> sweep_levels_deg{0.0, 1.0, 3.0, 5.0};
};

namespace detail {

// Wrapper types keep the variant alternatives distinct even on platforms
// where size_t and uint64_t are the same underlying type.
struct SizeField { std::size_t* p; };
struct IntField { int* p; };
struct SeedField { std::uint64_t* p; };

using ConfigValue = std::variant<double*, SizeField, IntField, SeedField, bool*,
                                 std::vector<double>*>;

struct ConfigEntry {
  std::string section;
  std::string key;
  ConfigValue value;
};

inline std::vector<ConfigEntry> config_entries(PipelineConfig& c) {
  return {
      {"session", "seed", SeedField{&c.seed}},
      {"session", "sample_rate", IntField{&c.sample_rate}},
      {"session", "taps_healthy", SizeField{&c.taps_healthy}},
      {"session", "taps_unhealthy", SizeField{&c.taps_unhealthy}},
      {"session", "tap_interval_s", &c.tap_interval_s},
      {"session", "lead_in_s", &c.lead_in_s},
      {"session", "duration_s", &c.session_duration_s},
      {"session", "noise_floor_db", &c.noise_floor_db},
      {"session", "noise_mod_depth", &c.noise_mod_depth},
      {"session", "noise_mod_hz", &c.noise_mod_hz},
      {"session", "ambient_rms", &c.ambient_rms},
      {"session", "ambient_low_hz", &c.ambient_low_hz},
      {"session", "ambient_high_hz", &c.ambient_high_hz},
      {"session", "ambient_mod_depth", &c.ambient_mod_depth},
      {"session", "ambient_mod_hz", &c.ambient_mod_hz},
      {"session", "rumble_per_deg", &c.rumble_per_deg},
      {"session", "rattle_rate_per_deg_hz", &c.rattle_rate_per_deg_hz},
      {"session", "rattle_amp_per_deg", &c.rattle_amp_per_deg},
      {"session", "rattle_amp_cap", &c.rattle_amp_cap},
      {"session", "rattle_low_hz", &c.rattle_low_hz},
      {"session", "rattle_high_hz", &c.rattle_high_hz},
      {"session", "coupling_per_deg", &c.coupling_per_deg},
      {"session", "gain_floor", &c.gain_floor},
      {"vibration", "frequency_hz", &c.vibration_frequency_hz},
      {"vibration", "phase_roll_deg", &c.vibration_phase_deg[0]},
      {"vibration", "phase_pitch_deg", &c.vibration_phase_deg[1]},
      {"vibration", "phase_yaw_deg", &c.vibration_phase_deg[2]},
      {"template.healthy", "modal_freqs_hz", &c.healthy.modal_freqs_hz},
      {"template.healthy", "modal_damping", &c.healthy.modal_damping},
      {"template.healthy", "modal_phases_rad", &c.healthy.modal_phases_rad},
      {"template.healthy", "base_amplitude", &c.healthy.base_amplitude},
      {"template.healthy", "duration_s", &c.healthy.duration_s},
      {"template.healthy", "jitter", &c.healthy.jitter},
      {"template.unhealthy", "modal_freqs_hz", &c.unhealthy.modal_freqs_hz},
      {"template.unhealthy", "modal_damping", &c.unhealthy.modal_damping},
      {"template.unhealthy", "modal_phases_rad", &c.unhealthy.modal_phases_rad},
      {"template.unhealthy", "base_amplitude", &c.unhealthy.base_amplitude},
      {"template.unhealthy", "duration_s", &c.unhealthy.duration_s},
      {"template.unhealthy", "jitter", &c.unhealthy.jitter},
      {"ste", "window_len", SizeField{&c.ste_window_len}},
      {"ste", "hop", SizeField{&c.ste_hop}},
      {"welch", "seg_len", SizeField{&c.welch_seg_len}},
      {"welch", "overlap", &c.welch_overlap},
      {"gate", "low_pct", &c.gate_low_pct},
      {"gate", "high_pct", &c.gate_high_pct},
      {"gate", "drop_db", &c.gate_drop_db},
      {"gate", "slope_eps_db_per_bin", &c.gate_slope_eps_db_per_bin},
      {"gate", "low_freq_search_max_hz", &c.gate_low_freq_search_max_hz},
      {"gate", "smooth_bins", SizeField{&c.gate_smooth_bins}},
      {"gate", "k_low", &c.gate_k_low},
      {"gate", "k_high", &c.gate_k_high},
      {"gate", "p_ref", &c.gate_p_ref},
      {"gate", "min_margin_db", &c.gate_min_margin_db},
      {"gate", "fallback_full_band", &c.gate_fallback_full_band},
      {"segment", "delta_s", &c.segment_delta_s},
      {"segment", "length", SizeField{&c.segment_len}},
      {"segment", "pre_fraction", &c.segment_pre_fraction},
      {"segment", "label_match_tol_s", &c.segment_label_match_tol_s},
      {"segment", "naive_lambda_min", &c.naive_lambda_min},
      {"segment", "naive_lambda_max", &c.naive_lambda_max},
      {"split", "train_fraction", &c.train_fraction},
      {"split", "stratified", &c.stratified},
      {"pca", "variance_target", &c.pca_variance_target},
      {"kmeans", "clusters", SizeField{&c.kmeans_clusters}},
      {"kmeans", "restarts", SizeField{&c.kmeans_restarts}},
      {"kmeans", "tol", &c.kmeans_tol},
      {"kmeans", "max_iter", SizeField{&c.kmeans_max_iter}},
      {"tree", "max_depth", SizeField{&c.tree_max_depth}},
      {"tree", "min_leaf", SizeField{&c.tree_min_leaf}},
      {"sweep", "levels_deg", &c.sweep_levels_deg},
  };
}

inline std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

inline void write_value(std::ostream& os, const ConfigValue& v) {
  std::visit(
      [&os](auto&& field) {
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, bool*>) {
          os << (*field ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::vector<double>*>) {
          os << '[';
          for (std::size_t i = 0; i < field->size(); ++i) {
            if (i) os << ", ";
            os << (*field)[i];
          }
          os << ']';
        } else if constexpr (std::is_same_v<T, double*>) {
          os << *field;
        } else {
          os << *field.p;
        }
      },
      v);
}

inline void parse_value(const std::string& raw, const ConfigValue& v, const std::string& where) {
  try {
    std::visit(
        [&](auto&& field) {
          using T = std::decay_t<decltype(field)>;
          if constexpr (std::is_same_v<T, bool*>) {
            if (raw == "true")
              *field = true;
            else if (raw == "false")
              *field = false;
            else
              throw std::invalid_argument("expected true/false");
          } else if constexpr (std::is_same_v<T, std::vector<double>*>) {
            if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
              throw std::invalid_argument("expected [a, b, ...]");
            field->clear();
            std::stringstream ss(raw.substr(1, raw.size() - 2));
            std::string cell;
            while (std::getline(ss, cell, ',')) {
              cell = trim(cell);
              if (!cell.empty()) field->push_back(std::stod(cell));
            }
          } else if constexpr (std::is_same_v<T, double*>) {
            *field = std::stod(raw);
          } else if constexpr (std::is_same_v<T, SizeField>) {
            *field.p = static_cast<std::size_t>(std::stoull(raw));
          } else if constexpr (std::is_same_v<T, IntField>) {
            *field.p = std::stoi(raw);
          } else {
            *field.p = std::stoull(raw);
          }
        },
        v);
  } catch (const std::exception&) {
    throw IoError("config: bad value for " + where + ": '" + raw + "'");
  }
}

}  // namespace detail

inline void config_to_stream(const PipelineConfig& config, std::ostream& os) {
  PipelineConfig copy = config;
  const auto entries = detail::config_entries(copy);
  os.precision(std::numeric_limits<double>::max_digits10);
  std::string current;
  for (const auto& e : entries) {
    if (e.section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << e.section << "]\n";
      current = e.section;
    }
    os << e.key << " = ";
    detail::write_value(os, e.value);
    os << '\n';
  }
}

inline PipelineConfig config_from_stream(std::istream& is) {
  PipelineConfig config;
  auto entries = detail::config_entries(config);

  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw IoError("config: malformed section at line " + std::to_string(line_no));
      section = detail::trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& e : entries)
        if (e.section == section) known = true;
      if (!known) throw IoError("config: unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config: expected key = value at line " + std::to_string(line_no));
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string raw = detail::trim(line.substr(eq + 1));

    bool found = false;
    for (auto& e : entries) {
      if (e.section == section && e.key == key) {
        detail::parse_value(raw, e.value, "[" + section + "] " + key);
        found = true;
        break;
      }
    }
    if (!found) throw IoError("config: unknown key '" + key + "' in section [" + section + "]");
  }
  return config;
}

inline void save_config(const PipelineConfig& config, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("config: cannot open for writing: " + path);
  config_to_stream(config, os);
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open: " + path);
  return config_from_stream(is);
}

// Builders for the pieces other modules consume.

inline VibrationProfile make_vibration(const PipelineConfig& c, double level_deg) {
  VibrationProfile p;
  p.amplitude_deg[0] = p.amplitude_deg[1] = p.amplitude_deg[2] = level_deg;
  p.frequency_hz = c.vibration_frequency_hz;
  p.duration_s = c.session_duration_s;
  for (int a = 0; a < 3; ++a) p.phase_deg[a] = c.vibration_phase_deg[a];
  return p;
}

inline SessionSpec make_session_spec(const PipelineConfig& c, double level_deg) {
  SessionSpec s;
  s.taps_healthy = c.taps_healthy;
  s.taps_unhealthy = c.taps_unhealthy;
  s.tap_interval_s = c.tap_interval_s;
  s.lead_in_s = c.lead_in_s;
  s.noise_floor_db = c.noise_floor_db;
  s.noise_mod_depth = c.noise_mod_depth;
  s.noise_mod_hz = c.noise_mod_hz;
  s.ambient_rms = c.ambient_rms;
  s.ambient_low_hz = c.ambient_low_hz;
  s.ambient_high_hz = c.ambient_high_hz;
  s.ambient_mod_depth = c.ambient_mod_depth;
  s.ambient_mod_hz = c.ambient_mod_hz;
  s.rumble_per_deg = c.rumble_per_deg;
  s.rattle_rate_per_deg_hz = c.rattle_rate_per_deg_hz;
  s.rattle_amp_per_deg = c.rattle_amp_per_deg;
  s.rattle_amp_cap = c.rattle_amp_cap;
  s.rattle_low_hz = c.rattle_low_hz;
  s.rattle_high_hz = c.rattle_high_hz;
  s.coupling_per_deg = c.coupling_per_deg;
  s.gain_floor = c.gain_floor;
  s.sample_rate = c.sample_rate;
  s.seed = mix_seed(c.seed, static_cast<std::uint64_t>(level_deg * 1000.0) + 7);
  s.vibration = make_vibration(c, level_deg);
  return s;
}

}  // namespace tapkit
