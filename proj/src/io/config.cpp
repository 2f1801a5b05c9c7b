// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "oppradar/config.hpp"

namespace oppradar::io {

using nlohmann::json;

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

std::string to_string(CampaignKind kind) {
  switch (kind) {
    case CampaignKind::range_sweep: return "range_sweep";
    case CampaignKind::resolution: return "resolution";
    case CampaignKind::scene: return "scene";
    case CampaignKind::fd0: return "fd0";
  }
  return "?";
}

CampaignKind parse_campaign_kind(const std::string& name) {
  if (name == "range_sweep") return CampaignKind::range_sweep;
  if (name == "resolution") return CampaignKind::resolution;
  if (name == "scene") return CampaignKind::scene;
  if (name == "fd0") return CampaignKind::fd0;
  throw std::invalid_argument("unknown campaign kind '" + name + "' (expected range_sweep, resolution, scene or fd0)");
}

double parse_grid_step(const std::string& text) {
  double value = 0.0;
  try {
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } else {
      const double num = std::stod(text.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument(text);
      const std::string den_text = text.substr(slash + 1);
      const double den = std::stod(den_text, &used);
      if (used != den_text.size() || den == 0.0) throw std::invalid_argument(text);
      value = num / den;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("grid step '" + text + "' is not a number or fraction");
  }
  const double n = 1.0 / value;
  if (!(value > 0.0) || std::abs(n - std::round(n)) > 1e-9 * n) {
    throw std::invalid_argument("grid step '" + text + "' must be T/n for a positive integer n");
  }
  return 1.0 / std::round(n);
}

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' has the wrong type", line_of(n));
  }
}

using Handler = std::function<void(const YAML::Node&)>;

void section(const YAML::Node& node, const std::string& name, const std::map<std::string, Handler>& fields) {
  if (!node.IsMap()) throw ConfigError("section '" + name + "' must be a mapping", line_of(node));
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown key '" + name + "." + key + "'", line_of(kv.first));
    try {
      it->second(kv.second);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(name + "." + key + ": " + e.what(), line_of(kv.second));
    }
  }
}

template <class T>
Handler set(T& field, const std::string& key) {
  return [&field, key](const YAML::Node& n) { field = as<T>(n, key); };
}

Handler set_list(std::vector<double>& field, const std::string& key) {
  return [&field, key](const YAML::Node& n) {
    if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list", line_of(n));
    field.clear();
    for (const auto& v : n) field.push_back(as<double>(v, key));
  };
}

Handler set_steps(std::vector<double>& field) {
  return [&field](const YAML::Node& n) {
    if (!n.IsSequence()) throw ConfigError("'grid_steps_T' must be a list", line_of(n));
    field.clear();
    for (const auto& v : n) field.push_back(parse_grid_step(as<std::string>(v, "grid_steps_T")));
  };
}

bench::CalibrationMethod parse_method(const std::string& s) {
  if (s == "auto") return bench::CalibrationMethod::automatic;
  if (s == "direct") return bench::CalibrationMethod::direct;
  if (s == "evt") return bench::CalibrationMethod::evt;
  throw std::invalid_argument("unknown calibration method '" + s + "' (expected auto, direct or evt)");
}

std::string method_name(bench::CalibrationMethod m) {
  switch (m) {
    case bench::CalibrationMethod::automatic: return "auto";
    case bench::CalibrationMethod::direct: return "direct";
    case bench::CalibrationMethod::evt: return "evt";
  }
  return "?";
}

detect::LambdaMode parse_lambda_mode(const std::string& s) {
  if (s == "metric") return detect::LambdaMode::metric;
  if (s == "threshold") return detect::LambdaMode::threshold;
  throw std::invalid_argument("unknown lambda mode '" + s + "' (expected metric or threshold)");
}

void parse_targets(const YAML::Node& node, std::vector<scene::Target>& targets) {
  if (!node.IsSequence()) throw ConfigError("'targets' must be a list", line_of(node));
  targets.clear();
  for (const auto& item : node) {
    scene::Target t;
    bool has_range = false;
    section(item, "targets[]",
            {{"range_m", [&](const YAML::Node& n) { t.range_m = as<double>(n, "range_m"); has_range = true; }},
             {"velocity_mps", set(t.velocity_mps, "velocity_mps")},
             {"rcs_m2", set(t.rcs_m2, "rcs_m2")}});
    if (!has_range) throw ConfigError("target without 'range_m'", line_of(item));
    if (!(t.rcs_m2 > 0.0)) throw ConfigError("target 'rcs_m2' must be positive", line_of(item));
    targets.push_back(t);
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("YAML syntax error: " + e.msg, e.mark.line + 1);
  }
  RunConfig c;
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("top level must be a mapping", line_of(root));

  auto& sys = c.system;
  auto& radio = sys.radio;
  auto& det = c.detector;
  auto& cal = c.calibration;
  auto& cam = c.campaign;
  std::string window = std::string(1, sys.window);
  std::map<std::string, Handler> top{
      {"constants",
       [&](const YAML::Node& n) {
         section(n, "constants", {{"speed_of_light_mps", set(sys.constants.speed_of_light, "speed_of_light_mps")},
                                  {"carrier_hz", set(sys.constants.carrier_hz, "carrier_hz")},
                                  {"symbol_rate_hz", set(sys.constants.symbol_rate_hz, "symbol_rate_hz")}});
       }},
      {"radio",
       [&](const YAML::Node& n) {
         section(n, "radio", {{"transmit_power_w", set(radio.transmit_power_w, "transmit_power_w")},
                              {"antenna_gain_db", set(radio.antenna_gain_db, "antenna_gain_db")},
                              {"noise_psd_dbm_hz", set(radio.noise_psd_dbm_hz, "noise_psd_dbm_hz")},
                              {"noise_figure_db", set(radio.noise_figure_db, "noise_figure_db")},
                              {"shadowing_db", set(radio.shadowing_db, "shadowing_db")},
                              {"rice_k_db", set(radio.rice_k_db, "rice_k_db")},
                              {"shadowing", set(radio.shadowing, "shadowing")},
                              {"fading", set(radio.fading, "fading")},
                              {"processing_gain", set(radio.processing_gain, "processing_gain")}});
       }},
      {"waveform",
       [&](const YAML::Node& n) {
         section(n, "waveform", {{"chips", set(sys.chips, "chips")},
                                 {"seed", set(sys.waveform_seed, "seed")},
                                 {"window", set(window, "window")},
                                 {"sample_step_T", set(sys.sample_step_T, "sample_step_T")}});
       }},
      {"search",
       [&](const YAML::Node& n) {
         section(n, "search",
                 {{"range_min_m", set(sys.range_min_m, "range_min_m")},
                  {"range_max_m", set(sys.range_max_m, "range_max_m")},
                  {"velocity_max_mps", set(sys.velocity_max_mps, "velocity_max_mps")},
                  {"doppler_step_hz", set(sys.doppler_step_hz, "doppler_step_hz")},
                  {"grid_step_T", [&](const YAML::Node& v) {
                     c.grid_step_T = parse_grid_step(as<std::string>(v, "grid_step_T"));
                   }}});
       }},
      {"detector",
       [&](const YAML::Node& n) {
         section(n, "detector",
                 {{"kind", [&](const YAML::Node& v) { det.kind = bench::parse_detector(as<std::string>(v, "kind")); }},
                  {"max_targets", set(det.max_targets, "max_targets")},
                  {"lambda_mode",
                   [&](const YAML::Node& v) { det.lambda_mode = parse_lambda_mode(as<std::string>(v, "lambda_mode")); }},
                  {"lambda_divisor", set(det.lambda_divisor, "lambda_divisor")},
                  {"quadrature_nodes", set(det.quadrature.nodes, "quadrature_nodes")},
                  {"rank_tolerance", set(det.quadrature.rank_tolerance, "rank_tolerance")},
                  {"peak_radius", set(det.peak_radius, "peak_radius")},
                  {"refine", set(det.refine, "refine")},
                  {"refine_step_T", [&](const YAML::Node& v) {
                     det.refine_step_T = parse_grid_step(as<std::string>(v, "refine_step_T"));
                   }}});
       }},
      {"calibration",
       [&](const YAML::Node& n) {
         section(n, "calibration",
                 {{"pfa", set(cal.pfa, "pfa")},
                  {"trials", set(cal.trials, "trials")},
                  {"seed", set(cal.seed, "seed")},
                  {"method", [&](const YAML::Node& v) { cal.method = parse_method(as<std::string>(v, "method")); }},
                  {"tail_fraction", set(cal.tail_fraction, "tail_fraction")},
                  {"cache", set(cal.cache, "cache")}});
       }},
      {"campaign",
       [&](const YAML::Node& n) {
         section(n, "campaign",
                 {{"kind", [&](const YAML::Node& v) { cam.kind = parse_campaign_kind(as<std::string>(v, "kind")); }},
                  {"trials", set(cam.trials, "trials")},
                  {"seed", set(cam.seed, "seed")},
                  {"workers", set(cam.workers, "workers")},
                  {"ranges_m", set_list(cam.ranges_m, "ranges_m")},
                  {"separations_m", set_list(cam.separations_m, "separations_m")},
                  {"grid_steps_T", set_steps(cam.grid_steps_T)},
                  {"range_m", set(cam.range_m, "range_m")},
                  {"rcs_m2", set(cam.rcs_m2, "rcs_m2")},
                  {"extra_targets", set(cam.extra_targets, "extra_targets")},
                  {"jitter_T", set(cam.jitter_T, "jitter_T")},
                  {"association_tolerance_T", set(cam.association_tolerance_T, "association_tolerance_T")},
                  {"genie", set(cam.genie, "genie")},
                  {"random_targets", set(cam.random_targets, "random_targets")},
                  {"fd0_pfas", set_list(cam.fd0_pfas, "fd0_pfas")}});
       }},
      {"scene",
       [&](const YAML::Node& n) {
         auto& s = c.scene;
         section(n, "scene", {{"range_min_m", set(s.range_min_m, "range_min_m")},
                              {"range_max_m", set(s.range_max_m, "range_max_m")},
                              {"rcs_min_m2", set(s.rcs_min_m2, "rcs_min_m2")},
                              {"rcs_max_m2", set(s.rcs_max_m2, "rcs_max_m2")},
                              {"min_spacing_m", set(s.min_spacing_m, "min_spacing_m")},
                              {"velocity_max_mps", set(s.velocity_max_mps, "velocity_max_mps")}});
       }},
      {"targets", [&](const YAML::Node& n) { parse_targets(n, c.targets); }},
  };
  section(root, "config", top);
  if (window.size() != 1) throw ConfigError("waveform.window must be a single letter a-f");
  sys.window = window[0];
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const RunConfig& c) {
  const auto& s = c.system;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(s.window >= 'a' && s.window <= 'f', "waveform.window must be one of a-f");
  require(s.chips >= waveform::kMinChips && s.chips <= waveform::kMaxChips, "waveform.chips out of range");
  require(s.sample_step_T > 0.0, "waveform.sample_step_T must be positive");
  require(s.range_min_m > 0.0 && s.range_max_m > s.range_min_m, "search range must satisfy 0 < min < max");
  require(s.velocity_max_mps >= 0.0 && s.doppler_step_hz >= 0.0, "search velocity/doppler settings must be >= 0");
  require(s.constants.speed_of_light > 0.0 && s.constants.carrier_hz > 0.0 && s.constants.symbol_rate_hz > 0.0,
          "constants must be positive");
  const double span_T = (s.range_max_m - s.range_min_m) * 2.0 / s.constants.speed_of_light * s.constants.symbol_rate_hz;
  require(c.grid_step_T <= span_T, "search.grid_step_T larger than the searched delay span");
  require(c.detector.lambda_divisor > 0.0, "detector.lambda_divisor must be positive");
  require(c.detector.quadrature.nodes >= 1, "detector.quadrature_nodes must be >= 1");
  require(c.detector.quadrature.rank_tolerance > 0.0 && c.detector.quadrature.rank_tolerance < 1.0,
          "detector.rank_tolerance must lie in (0, 1)");
  require(c.detector.max_targets >= 0 && c.detector.peak_radius >= 0, "detector counts must be >= 0");
  require(c.calibration.pfa > 0.0 && c.calibration.pfa < 1.0, "calibration.pfa must lie in (0, 1)");
  require(c.calibration.trials >= 1, "calibration.trials must be >= 1");
  require(c.calibration.tail_fraction > 0.0 && c.calibration.tail_fraction <= 1.0,
          "calibration.tail_fraction must lie in (0, 1]");
  require(c.campaign.trials >= 1, "campaign.trials must be >= 1");
  for (double p : c.campaign.fd0_pfas) require(p > 0.0 && p < 1.0, "campaign.fd0_pfas entries must lie in (0, 1)");
  for (double r : c.campaign.ranges_m) {
    require(r >= s.range_min_m && r <= s.range_max_m, "campaign.ranges_m entry outside the search range");
  }
  for (double d : c.campaign.separations_m) require(d > 0.0, "campaign.separations_m entries must be positive");
  for (const auto& t : c.targets) {
    require(t.range_m >= s.range_min_m && t.range_m <= s.range_max_m, "target range outside the search range");
  }
  require(c.campaign.association_tolerance_T > 0.0, "campaign.association_tolerance_T must be positive");
  try {
    s.radio.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("radio: ") + e.what());
  }
}

std::string config_json(const RunConfig& c) {
  const auto& s = c.system;
  const auto& r = s.radio;
  const auto& d = c.detector;
  const auto& cal = c.calibration;
  const auto& cam = c.campaign;
  json targets = json::array();
  for (const auto& t : c.targets) {
    targets.push_back({{"range_m", t.range_m}, {"velocity_mps", t.velocity_mps}, {"rcs_m2", t.rcs_m2}});
  }
  const json j = {
      {"constants",
       {{"speed_of_light_mps", s.constants.speed_of_light},
        {"carrier_hz", s.constants.carrier_hz},
        {"symbol_rate_hz", s.constants.symbol_rate_hz}}},
      {"radio",
       {{"transmit_power_w", r.transmit_power_w},
        {"antenna_gain_db", r.antenna_gain_db},
        {"noise_psd_dbm_hz", r.noise_psd_dbm_hz},
        {"noise_figure_db", r.noise_figure_db},
        {"shadowing_db", r.shadowing_db},
        {"rice_k_db", r.rice_k_db},
        {"shadowing", r.shadowing},
        {"fading", r.fading},
        {"processing_gain", r.processing_gain}}},
      {"waveform",
       {{"chips", s.chips}, {"seed", s.waveform_seed}, {"window", std::string(1, s.window)},
        {"sample_step_T", s.sample_step_T}}},
      {"search",
       {{"range_min_m", s.range_min_m},
        {"range_max_m", s.range_max_m},
        {"velocity_max_mps", s.velocity_max_mps},
        {"doppler_step_hz", s.doppler_step_hz},
        {"grid_step_T", c.grid_step_T}}},
      {"detector",
       {{"kind", bench::to_string(d.kind)},
        {"max_targets", d.max_targets},
        {"lambda_mode", d.lambda_mode == detect::LambdaMode::metric ? "metric" : "threshold"},
        {"lambda_divisor", d.lambda_divisor},
        {"quadrature_nodes", d.quadrature.nodes},
        {"rank_tolerance", d.quadrature.rank_tolerance},
        {"peak_radius", d.peak_radius},
        {"refine", d.refine},
        {"refine_step_T", d.refine_step_T}}},
      {"calibration",
       {{"pfa", cal.pfa},
        {"trials", cal.trials},
        {"seed", cal.seed},
        {"method", method_name(cal.method)},
        {"tail_fraction", cal.tail_fraction},
        {"cache", cal.cache}}},
      {"campaign",
       {{"kind", to_string(cam.kind)},
        {"trials", cam.trials},
        {"seed", cam.seed},
        {"workers", cam.workers},
        {"ranges_m", cam.ranges_m},
        {"separations_m", cam.separations_m},
        {"grid_steps_T", cam.grid_steps_T},
        {"range_m", cam.range_m},
        {"rcs_m2", cam.rcs_m2},
        {"extra_targets", cam.extra_targets},
        {"jitter_T", cam.jitter_T},
        {"association_tolerance_T", cam.association_tolerance_T},
        {"genie", cam.genie},
        {"random_targets", cam.random_targets},
        {"fd0_pfas", cam.fd0_pfas}}},
      {"scene",
       {{"range_min_m", c.scene.range_min_m},
        {"range_max_m", c.scene.range_max_m},
        {"rcs_min_m2", c.scene.rcs_min_m2},
        {"rcs_max_m2", c.scene.rcs_max_m2},
        {"min_spacing_m", c.scene.min_spacing_m},
        {"velocity_max_mps", c.scene.velocity_max_mps}}},
      {"targets", targets},
  };
  return j.dump(2);
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  json seeds = json::object();
  for (const auto& [name, value] : m.seeds) seeds[name] = value;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(m.config_json)));
  const json j = {{"command", m.command},
                  {"arguments", m.arguments},
                  {"config_hash", hash},
                  {"config", json::parse(m.config_json)},
                  {"seeds", seeds},
                  {"outputs", m.outputs},
                  {"notes", m.notes}};
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

std::string waveform_fingerprint(const bench::SystemConfig& s) {
  std::ostringstream os;
  os.precision(17);
  os << "chips=" << s.chips << ";seed=" << s.waveform_seed << ";step=" << s.sample_step_T
     << ";range=" << s.range_min_m << '-' << s.range_max_m << ";vmax=" << s.velocity_max_mps
     << ";dstep=" << s.doppler_step_hz << ";rate=" << s.constants.symbol_rate_hz << ";fc=" << s.constants.carrier_hz
     << ";c=" << s.constants.speed_of_light;
  return os.str();
}

ThresholdCache::ThresholdCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("threshold cache '" + path_.string() + "' is not valid JSON: " + e.what());
  }
  for (const auto& e : j.value("entries", json::array())) {
    Entry x;
    x.grid_step_T = e.at("grid_step_T").get<double>();
    x.window = e.at("window").get<std::string>().at(0);
    x.samples = e.at("samples").get<int>();
    x.pfa = e.at("pfa").get<double>();
    x.fingerprint = e.at("fingerprint").get<std::string>();
    auto& t = x.threshold;
    t.gamma = e.at("gamma").get<double>();
    t.pfa = e.value("pfa_measured", 0.0);
    t.trials = e.value("trials", std::size_t{0});
    t.gamma_low = e.value("gamma_low", 0.0);
    t.gamma_high = e.value("gamma_high", 0.0);
    t.unreliable = e.value("unreliable", false);
    t.evt = e.value("evt", false);
    t.refused = e.value("refused", false);
    t.ks_statistic = e.value("ks_statistic", 0.0);
    t.note = e.value("note", std::string());
    entries_.push_back(std::move(x));
  }
}

namespace {
bool same(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); }
}  // namespace

std::optional<bench::Threshold> ThresholdCache::find(double grid_step_T, char window, int samples, double pfa,
                                                     const std::string& fingerprint) const {
  for (const auto& e : entries_) {
    if (same(e.grid_step_T, grid_step_T) && e.window == window && e.samples == samples && same(e.pfa, pfa) &&
        e.fingerprint == fingerprint) {
      return e.threshold;
    }
  }
  return std::nullopt;
}

void ThresholdCache::store(double grid_step_T, char window, int samples, double pfa, const std::string& fingerprint,
                           const bench::Threshold& threshold) {
  for (auto& e : entries_) {
    if (same(e.grid_step_T, grid_step_T) && e.window == window && e.samples == samples && same(e.pfa, pfa) &&
        e.fingerprint == fingerprint) {
      e.threshold = threshold;
      return;
    }
  }
  entries_.push_back({grid_step_T, window, samples, pfa, fingerprint, threshold});
}

void ThresholdCache::save() const {
  json entries = json::array();
  for (const auto& e : entries_) {
    const auto& t = e.threshold;
    entries.push_back({{"grid_step_T", e.grid_step_T},
                       {"window", std::string(1, e.window)},
                       {"samples", e.samples},
                       {"pfa", e.pfa},
                       {"fingerprint", e.fingerprint},
                       {"gamma", t.gamma},
                       {"pfa_measured", t.pfa},
                       {"trials", t.trials},
                       {"gamma_low", t.gamma_low},
                       {"gamma_high", t.gamma_high},
                       {"unreliable", t.unreliable},
                       {"evt", t.evt},
                       {"refused", t.refused},
                       {"ks_statistic", t.ks_statistic},
                       {"note", t.note}});
  }
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_);
  if (!out) throw std::ios_base::failure("cannot write threshold cache '" + path_.string() + "'");
  out << json{{"entries", entries}}.dump(2) << '\n';
}

}  // namespace oppradar::io
