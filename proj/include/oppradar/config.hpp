// SPDX-License-Identifier: Apache-2.0
//
// Run configuration (YAML), run manifests and the threshold cache.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oppradar/bench.hpp"

namespace oppradar::io {

/// Schema or value error in a configuration file. `line` is 1-based, 0 when
/// the error is not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0);
  int line() const { return line_; }

 private:
  int line_;
};

struct CalibrationSettings {
  double pfa = 1e-4;
  std::size_t trials = 20000;
  std::uint64_t seed = 7;
  bench::CalibrationMethod method = bench::CalibrationMethod::automatic;
  double tail_fraction = 0.05;
  std::string cache;  // path, empty: no cache
};

enum class CampaignKind { range_sweep, resolution, scene, fd0 };

std::string to_string(CampaignKind kind);
CampaignKind parse_campaign_kind(const std::string& name);

struct CampaignSettings {
  CampaignKind kind = CampaignKind::range_sweep;
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::vector<double> ranges_m{5, 7.5, 10, 12.5, 15, 17.5, 20, 22.5, 25, 27.5, 30, 32.5, 35, 37.5, 40};
  std::vector<double> separations_m;
  std::vector<double> grid_steps_T{1.0, 0.125};
  double range_m = 20.0;
  double rcs_m2 = 0.1;
  int extra_targets = 7;
  double jitter_T = 1.0;
  double association_tolerance_T = 1.0;
  bool genie = true;
  int random_targets = 8;
  std::vector<double> fd0_pfas{0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
};

struct RunConfig {
  bench::SystemConfig system;
  bench::DetectorSettings detector;
  double grid_step_T = 1.0;
  CalibrationSettings calibration;
  CampaignSettings campaign;
  scene::SceneSpec scene;
  std::vector<scene::Target> targets;
};

/// "1", "1/8", "0.125". The step must be T/n for a positive integer n.
double parse_grid_step(const std::string& text);

RunConfig parse_config(const std::string& yaml_text);
RunConfig load_config(const std::filesystem::path& path);
/// Cross-field checks; throws ConfigError.
void validate(const RunConfig& config);

/// Canonical JSON echo of the effective configuration.
std::string config_json(const RunConfig& config);
std::uint64_t fnv1a(std::string_view data);

struct Manifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_json;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Thresholds keyed by (grid step, window, sample count, Pfa); entries also
/// carry the waveform fingerprint and are ignored when it differs.
class ThresholdCache {
 public:
  explicit ThresholdCache(std::filesystem::path path);

  std::optional<bench::Threshold> find(double grid_step_T, char window, int samples, double pfa,
                                       const std::string& fingerprint) const;
  void store(double grid_step_T, char window, int samples, double pfa, const std::string& fingerprint,
             const bench::Threshold& threshold);
  void save() const;

 private:
  std::filesystem::path path_;
  struct Entry {
    double grid_step_T;
    char window;
    int samples;
    double pfa;
    std::string fingerprint;
    bench::Threshold threshold;
  };
  std::vector<Entry> entries_;
};

/// Waveform/search settings that change the null distribution.
std::string waveform_fingerprint(const bench::SystemConfig& system);

}  // namespace oppradar::io
