#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tapkit/config.hpp"
#include "tapkit/segmenter.hpp"
#include "tapkit/wav.hpp"

using namespace tapkit;
using Catch::Approx;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("tapkit_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

SegmentMatrix random_segments(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SegmentMatrix out;
  out.data = Matrix(m, n);
  for (auto& v : out.data.data) v = static_cast<double>(rng() % 20000) / 10000.0 - 1.0;
  for (std::size_t r = 0; r < m; ++r) {
    out.labels.push_back(rng() % 2 ? Condition::healthy : Condition::unhealthy);
    out.source_ids.push_back("w@" + std::to_string(rng() % 100000));
  }
  return out;
}

}  // namespace

TEST_CASE("wav round trip") {
  TempDir dir;
  AudioSignal sig;
  sig.sample_rate = 44100;
  std::mt19937_64 rng(6);
  sig.samples.resize(5000);
  for (auto& v : sig.samples) v = static_cast<double>(rng() % 20000) / 10000.0 - 1.0;

  const std::string path = dir.file("a.wav");
  write_wav(path, sig);
  const AudioSignal back = read_wav(path);
  REQUIRE(back.sample_rate == 44100);
  REQUIRE(back.samples.size() == sig.samples.size());
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    REQUIRE(back.samples[i] == Approx(sig.samples[i]).margin(1.0 / 32767.0));

  SECTION("writes are byte-stable") {
    const std::string path2 = dir.file("b.wav");
    write_wav(path2, sig);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    REQUIRE(s1.str() == s2.str());
  }

  SECTION("header arithmetic: 44 byte header + 2 bytes per sample") {
    REQUIRE(std::filesystem::file_size(path) == 44 + 2 * sig.samples.size());
  }
}

TEST_CASE("wav rejects anything but 16-bit PCM mono") {
  TempDir dir;

  auto write_header = [&](std::uint16_t format, std::uint16_t channels, std::uint16_t bits) {
    const std::string path = dir.file("bad.wav");
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
    os.write("RIFF", 4);
    u32(36);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(44100);
    u32(44100 * 2);
    u16(2);
    u16(bits);
    os.write("data", 4);
    u32(0);
    return path;
  };

  REQUIRE_THROWS_AS(read_wav(write_header(3, 1, 16)), IoError);   // float format
  REQUIRE_THROWS_AS(read_wav(write_header(1, 2, 16)), IoError);   // stereo
  REQUIRE_THROWS_AS(read_wav(write_header(1, 1, 8)), IoError);    // 8-bit
  REQUIRE_THROWS_AS(read_wav(dir.file("missing.wav")), IoError);  // no such file
}

TEST_CASE("segment matrix serialization") {
  const SegmentMatrix m = random_segments(7, 12, 99);

  SECTION("csv round trip") {
    std::stringstream ss;
    segments_to_csv(m, ss);
    const SegmentMatrix back = segments_from_csv(ss);
    REQUIRE(back.row_count() == m.row_count());
    REQUIRE(back.labels == m.labels);
    REQUIRE(back.source_ids == m.source_ids);
    for (std::size_t i = 0; i < m.data.data.size(); ++i)
      REQUIRE(back.data.data[i] == Approx(m.data.data[i]).margin(1e-15));
  }

  SECTION("binary round trip holds float32 precision") {
    std::stringstream ss;
    segments_to_binary(m, ss);
    const SegmentMatrix back = segments_from_binary(ss);
    REQUIRE(back.row_count() == m.row_count());
    REQUIRE(back.labels == m.labels);
    REQUIRE(back.source_ids == m.source_ids);
    for (std::size_t i = 0; i < m.data.data.size(); ++i)
      REQUIRE(back.data.data[i] == Approx(m.data.data[i]).margin(1e-6));
  }

  SECTION("binary header carries the magic") {
    std::stringstream ss;
    segments_to_binary(m, ss);
    REQUIRE(ss.str().substr(0, 4) == "TAPX");
  }

  SECTION("bad magic is rejected") {
    std::stringstream ss("XXXXgarbage");
    REQUIRE_THROWS_AS(segments_from_binary(ss), IoError);
  }
}

TEST_CASE("config round trips losslessly") {
  PipelineConfig config;
  config.seed = 777;
  config.gate_k_high = 11.5;
  config.sweep_levels_deg = {0.0, 2.5};
  config.healthy.modal_freqs_hz = {1812.5, 3401.0};
  config.gate_fallback_full_band = true;

  std::stringstream ss;
  config_to_stream(config, ss);
  const PipelineConfig back = config_from_stream(ss);

  std::stringstream again;
  config_to_stream(back, again);
  std::stringstream original;
  config_to_stream(config, original);
  REQUIRE(again.str() == original.str());
  REQUIRE(back.seed == 777);
  REQUIRE(back.gate_k_high == 11.5);
  REQUIRE(back.sweep_levels_deg == std::vector<double>{0.0, 2.5});
  REQUIRE(back.healthy.modal_freqs_hz == std::vector<double>{1812.5, 3401.0});
  REQUIRE(back.gate_fallback_full_band == true);
}

TEST_CASE("config parsing rejects unknown keys and sections") {
  SECTION("unknown key") {
    std::stringstream ss("[session]\nseeed = 4\n");
    REQUIRE_THROWS_AS(config_from_stream(ss), IoError);
  }
  SECTION("unknown section") {
    std::stringstream ss("[sessionx]\nseed = 4\n");
    REQUIRE_THROWS_AS(config_from_stream(ss), IoError);
  }
  SECTION("bad value") {
    std::stringstream ss("[session]\nseed = banana\n");
    REQUIRE_THROWS_AS(config_from_stream(ss), IoError);
  }
  SECTION("comments and blank lines are fine") {
    std::stringstream ss("# header\n\n[session]\nseed = 9  # trailing\n");
    REQUIRE(config_from_stream(ss).seed == 9);
  }
}

TEST_CASE("config file helpers") {
  TempDir dir;
  PipelineConfig config;
  config.seed = 31337;
  const std::string path = dir.file("pipeline.conf");
  save_config(config, path);
  REQUIRE(load_config(path).seed == 31337);
  REQUIRE_THROWS_AS(load_config(dir.file("nope.conf")), IoError);
}
