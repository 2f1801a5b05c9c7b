// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "oppradar/config.hpp"

using namespace oppradar;
using namespace oppradar::io;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "oppradar_test_io";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("grid step parsing") {
  CHECK(parse_grid_step("1") == 1.0);
  CHECK(parse_grid_step("1/8") == 0.125);
  CHECK(parse_grid_step("0.125") == 0.125);
  CHECK(parse_grid_step("0.25") == 0.25);
  CHECK_THROWS_AS(parse_grid_step("0.3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid_step("2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid_step("1/0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid_step("abc"), std::invalid_argument);
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"(
waveform:
  window: f
  chips: 23168
search:
  range_min_m: 5
  range_max_m: 30
  grid_step_T: 1/8
detector:
  kind: std
  refine: true
calibration:
  pfa: 0.001
  trials: 5000
campaign:
  kind: resolution
  ranges_m: [10, 20]
  separations_m: [0.1, 0.2]
targets:
  - {range_m: 10, rcs_m2: 0.1}
  - {range_m: 12.5, rcs_m2: 0.05, velocity_mps: 1}
)");
  CHECK(c.system.window == 'f');
  CHECK(c.system.range_max_m == 30.0);
  CHECK(c.grid_step_T == 0.125);
  CHECK(c.detector.kind == bench::DetectorKind::standard);
  CHECK(c.detector.refine);
  CHECK(c.calibration.pfa == 0.001);
  CHECK(c.campaign.kind == CampaignKind::resolution);
  CHECK(c.campaign.separations_m == std::vector<double>{0.1, 0.2});
  REQUIRE(c.targets.size() == 2);
  CHECK(c.targets[1].velocity_mps == 1.0);
  CHECK_NOTHROW(validate(c));

  const auto j = nlohmann::json::parse(config_json(c));
  CHECK(j.contains("search"));
  CHECK(fnv1a(config_json(c)) == fnv1a(config_json(parse_config(config_json(c)))));
}

TEST_CASE("config errors carry line numbers") {
  try {
    parse_config("search:\n  range_min_m: 5\n  bogus: 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  try {
    parse_config("waveform:\n  chips: lots\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_config("search: [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("detector:\n  kind: magic\n"), ConfigError);

  CHECK_THROWS_AS(parse_config("search:\n  range_min_m: 30\n  range_max_m: 10\n"), ConfigError);
}

TEST_CASE("threshold cache") {
  const auto path = temp_file("cache.json");
  bench::Threshold t;
  t.gamma = 15.2;
  t.pfa = 1e-4;
  t.trials = 20000;
  {
    ThresholdCache cache(path);
    CHECK_FALSE(cache.find(1.0, 'f', 513, 1e-4, "abc"));
    cache.store(1.0, 'f', 513, 1e-4, "abc", t);
    cache.save();
  }
  ThresholdCache again(path);
  const auto hit = again.find(1.0, 'f', 513, 1e-4, "abc");
  REQUIRE(hit);
  CHECK(hit->gamma == 15.2);
  CHECK(hit->trials == 20000);
  CHECK_FALSE(again.find(0.125, 'f', 513, 1e-4, "abc"));
  CHECK_FALSE(again.find(1.0, 'f', 513, 1e-4, "other"));

  bench::SystemConfig a, b;
  b.waveform_seed = 2;
  CHECK(waveform_fingerprint(a) == waveform_fingerprint(a));
  CHECK(waveform_fingerprint(a) != waveform_fingerprint(b));
}

TEST_CASE("manifest") {
  const auto path = temp_file("manifest.json");
  Manifest m;
  m.command = "simulate";
  m.arguments = {"--trials", "10"};
  m.config_json = config_json(RunConfig{});
  m.seeds = {{"campaign", 1}};
  m.outputs = {"records.csv"};
  write_manifest(path, m);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("command") == "simulate");
  CHECK(j.contains("config_hash"));
  CHECK(j.at("config").contains("waveform"));
}
