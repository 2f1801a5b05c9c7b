// SPDX-License-Identifier: Apache-2.0
//
// oppradar: correlate | calibrate | simulate | detect
//
// Exit codes: 0 ok, 2 usage, 3 config/schema, 4 io, 5 numerical. Errors go
// to stderr as "error[<category>]: <message>".

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oppradar/bench.hpp"
#include "oppradar/config.hpp"
#include "oppradar/corranalysis.hpp"
#include "oppradar/detect.hpp"
#include "oppradar/scene.hpp"

namespace fs = std::filesystem;
using namespace oppradar;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kConfig = 3, kIo = 4, kNumerical = 5 };

struct Failure : std::runtime_error {
  Failure(Exit code, const std::string& msg) : std::runtime_error(msg), code(code) {}
  Exit code;
};

const char* category(Exit code) {
  switch (code) {
    case kUsage: return "usage";
    case kConfig: return "config";
    case kIo: return "io";
    case kNumerical: return "numerical";
    default: return "internal";
  }
}

struct Options {
  std::string config;
  std::string out = "out";
  std::string window;
  std::string grid_step;
  double pfa = 0.0;
  std::size_t trials = 0;
  std::size_t null_trials = 0;
  bool calibrating = false;  // --trials counts null trials
  long long seed = -1;
  int workers = -1;
  std::string detector;
  bool refine = false;
  std::string cache;
  bool no_cache = false;
  std::string method;
  // correlate
  std::vector<double> tau_bar_T{30, 165, 300};
  double span_T = 512;
  std::string step = "1/8";
  bool map = false;
  // simulate
  std::string campaign;
  // detect
  std::string snapshot;
  double threshold = 0.0;
  bool dump_metrics = false;
  bool json_out = false;
};

std::vector<std::string> g_args;

io::RunConfig effective_config(const Options& o) {
  io::RunConfig c = o.config.empty() ? io::RunConfig{} : io::load_config(o.config);
  try {
    if (!o.window.empty()) {
      if (o.window.size() != 1 || o.window[0] < 'a' || o.window[0] > 'f') {
        throw Failure(kUsage, "--window must be one of a-f");
      }
      c.system.window = o.window[0];
    }
    if (!o.grid_step.empty()) c.grid_step_T = io::parse_grid_step(o.grid_step);
    if (o.pfa > 0.0) c.calibration.pfa = o.pfa;
    if (o.trials > 0) (o.calibrating ? c.calibration.trials : c.campaign.trials) = o.trials;
    if (o.null_trials > 0) c.calibration.trials = o.null_trials;
    if (o.seed >= 0) {
      c.campaign.seed = static_cast<std::uint64_t>(o.seed);
      c.calibration.seed = static_cast<std::uint64_t>(o.seed) ^ 0x5eedULL;
    }
    if (o.workers >= 0) c.campaign.workers = static_cast<unsigned>(o.workers);
    if (!o.detector.empty()) c.detector.kind = bench::parse_detector(o.detector);
    if (o.refine) c.detector.refine = true;
    if (!o.cache.empty()) c.calibration.cache = o.cache;
    if (o.no_cache) c.calibration.cache.clear();
    if (!o.method.empty()) {
      if (o.method == "auto") c.calibration.method = bench::CalibrationMethod::automatic;
      else if (o.method == "direct") c.calibration.method = bench::CalibrationMethod::direct;
      else if (o.method == "evt") c.calibration.method = bench::CalibrationMethod::evt;
      else throw Failure(kUsage, "--method must be auto, direct or evt");
    }
    if (!o.campaign.empty()) c.campaign.kind = io::parse_campaign_kind(o.campaign);
  } catch (const std::invalid_argument& e) {
    throw Failure(kUsage, e.what());
  }
  io::validate(c);
  return c;
}

fs::path prepare_out(const Options& o) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec || !fs::is_directory(o.out)) throw Failure(kIo, "cannot create output directory '" + o.out + "'");
  return fs::path(o.out);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw Failure(kIo, "cannot write '" + path.string() + "'");
  f.precision(12);
  return f;
}

void close_out(std::ofstream& f, const fs::path& path, io::Manifest& m) {
  f.close();
  if (!f) throw Failure(kIo, "write failed for '" + path.string() + "'");
  m.outputs.push_back(path.string());
}

io::Manifest manifest(const std::string& command, const io::RunConfig& c) {
  io::Manifest m;
  m.command = command;
  m.arguments = g_args;
  m.config_json = io::config_json(c);
  m.seeds = {{"waveform", c.system.waveform_seed},
             {"calibration", c.calibration.seed},
             {"campaign", c.campaign.seed}};
  return m;
}

void finish(const fs::path& out, io::Manifest& m) {
  const fs::path p = out / "manifest.json";
  io::write_manifest(p, m);
}

// Threshold from the cache when an entry with at least as many null trials exists,
// otherwise calibrated and stored.
bench::Threshold threshold_for(const bench::System& sys, const io::RunConfig& c, double grid_step_T,
                               io::Manifest& m, bool force = false) {
  const auto ctx = sys.context(grid_step_T);
  const std::string fp = io::waveform_fingerprint(c.system);
  std::unique_ptr<io::ThresholdCache> cache;
  if (!c.calibration.cache.empty()) {
    cache = std::make_unique<io::ThresholdCache>(c.calibration.cache);
    if (!force) {
      auto hit = cache->find(grid_step_T, c.system.window, ctx->samples(), c.calibration.pfa, fp);
      if (hit && hit->trials >= c.calibration.trials) {
        m.notes.push_back("threshold cache hit for grid step " + std::to_string(grid_step_T) + " T");
        return *hit;
      }
    }
  }
  bench::Threshold t = bench::calibrate(*ctx, c.calibration.pfa, c.calibration.trials, c.calibration.seed,
                                        c.calibration.method, c.calibration.tail_fraction, c.campaign.workers);
  if (!t.note.empty()) {
    std::cerr << "warning: " << t.note << '\n';
    m.notes.push_back(t.note);
  }
  if (cache) {
    cache->store(grid_step_T, c.system.window, ctx->samples(), c.calibration.pfa, fp, t);
    cache->save();
  }
  return t;
}

json threshold_json(const bench::Threshold& t) {
  return {{"gamma", t.gamma},       {"pfa", t.pfa},       {"trials", t.trials},
          {"gamma_low", t.gamma_low}, {"gamma_high", t.gamma_high}, {"unreliable", t.unreliable},
          {"evt", t.evt},           {"refused", t.refused}, {"ks_statistic", t.ks_statistic},
          {"note", t.note}};
}

// ------------------------------------------------------------------ commands

int cmd_correlate(const Options& o) {
  const io::RunConfig c = effective_config(o);
  const fs::path out = prepare_out(o);
  io::Manifest m = manifest("correlate", c);
  const bench::System sys(c.system);
  const double T = sys.symbol_period();
  const double step = io::parse_grid_step(o.step) * T;
  const corranalysis::CorrelationEngine engine(sys.probe());
  const auto& pc = sys.constants();

  std::vector<double> refs;
  for (std::size_t k = 0; k < o.tau_bar_T.size(); ++k) {
    const double tau_bar = o.tau_bar_T[k] * T;
    refs.push_back(tau_bar);
    const auto profile = corranalysis::correlation_profile(engine, tau_bar, sys.window(),
                                                           tau_bar - o.span_T * T, tau_bar + o.span_T * T, step);
    const auto mags = profile.magnitudes();
    const std::size_t peak = profile.peak_index();
    std::vector<double> axis;
    for (const auto& s : profile.samples) axis.push_back(s.delay);
    std::cout << "tau_bar=" << o.tau_bar_T[k] << "T peak=" << mags[peak]
              << " fwhm_T=" << corranalysis::full_width_half_max(axis, mags, peak) / T
              << " sidelobe_ratio=" << corranalysis::sidelobe_ratio(mags, peak) << '\n';
    const fs::path p = out / ("profile_" + std::string(1, c.system.window) + "_" + std::to_string(k) + ".csv");
    auto f = open_out(p);
    corranalysis::write_profile_csv(f, profile, pc);
    close_out(f, p, m);
  }
  if (o.map) {
    std::vector<double> delays;
    for (double t = sys.space().delay_min; t <= sys.space().delay_max; t += T) delays.push_back(std::round(t / T) * T);
    const auto map = corranalysis::correlation_map(engine, sys.window(), delays, delays);
    const fs::path p = out / ("map_" + std::string(1, c.system.window) + ".csv");
    auto f = open_out(p);
    corranalysis::write_map_csv(f, map, pc);
    close_out(f, p, m);
  }
  finish(out, m);
  return kOk;
}

int cmd_calibrate(const Options& o) {
  const io::RunConfig c = effective_config(o);
  const fs::path out = prepare_out(o);
  io::Manifest m = manifest("calibrate", c);
  const bench::System sys(c.system);
  const bench::Threshold t = threshold_for(sys, c, c.grid_step_T, m, true);
  const json j = threshold_json(t);
  std::cout << j.dump(2) << '\n';
  const fs::path p = out / "threshold.json";
  auto f = open_out(p);
  f << j.dump(2) << '\n';
  close_out(f, p, m);
  finish(out, m);
  return kOk;
}

int cmd_simulate(const Options& o) {
  const io::RunConfig c = effective_config(o);
  const fs::path out = prepare_out(o);
  io::Manifest m = manifest("simulate", c);
  const bench::System sys(c.system);
  std::map<double, double> gammas;
  const bench::ThresholdFn thr = [&](const detect::DetectorContext& ctx) {
    const double step_T = ctx.grid().delay_step / sys.symbol_period();
    auto it = gammas.find(step_T);
    if (it == gammas.end()) it = gammas.emplace(step_T, threshold_for(sys, c, step_T, m).gamma).first;
    return it->second;
  };
  const auto& cam = c.campaign;
  auto write_records = [&](const bench::CampaignResult& r) {
    const fs::path p = out / "records.csv";
    auto f = open_out(p);
    bench::write_records_csv(f, r);
    close_out(f, p, m);
  };

  switch (cam.kind) {
    case io::CampaignKind::range_sweep: {
      bench::RangeSweepConfig rc;
      rc.detector = c.detector;
      rc.grid_step_T = c.grid_step_T;
      rc.ranges_m = cam.ranges_m;
      rc.trials = cam.trials;
      rc.seed = cam.seed;
      rc.workers = cam.workers;
      rc.reference_rcs_m2 = cam.rcs_m2;
      rc.extra_targets = cam.extra_targets;
      rc.scene = c.scene;
      rc.jitter_T = cam.jitter_T;
      rc.association_tolerance_T = cam.association_tolerance_T;
      const auto result = bench::run_range_sweep(sys, rc, thr);
      write_records(result);
      const auto rows = bench::pd_rmse_report(sys, result);
      const fs::path p = out / ("pd_rmse_" + bench::to_string(c.detector.kind) + ".csv");
      auto f = open_out(p);
      bench::write_range_report_csv(f, rows);
      close_out(f, p, m);
      bench::write_range_report_csv(std::cout, rows);
      break;
    }
    case io::CampaignKind::resolution: {
      if (cam.separations_m.empty()) throw Failure(kConfig, "campaign.separations_m is empty");
      bench::ResolutionConfig rc;
      rc.detector = c.detector;
      rc.grid_steps_T = cam.grid_steps_T;
      rc.separations_m = cam.separations_m;
      rc.trials = cam.trials;
      rc.seed = cam.seed;
      rc.workers = cam.workers;
      rc.range_m = cam.range_m;
      rc.rcs_m2 = cam.rcs_m2;
      rc.jitter_T = cam.jitter_T;
      rc.genie = cam.genie;
      rc.association_tolerance_T = cam.association_tolerance_T;
      const auto result = bench::run_resolution(sys, rc, thr);
      write_records(result);
      const auto rows = bench::resolution_report(result);
      const fs::path p = out / "resolution.csv";
      auto f = open_out(p);
      bench::write_resolution_report_csv(f, rows);
      close_out(f, p, m);
      bench::write_resolution_report_csv(std::cout, rows);
      break;
    }
    case io::CampaignKind::scene: {
      bench::SceneConfig sc;
      sc.detector = c.detector;
      sc.grid_step_T = c.grid_step_T;
      sc.trials = cam.trials;
      sc.seed = cam.seed;
      sc.workers = cam.workers;
      sc.targets = c.targets;
      sc.random_targets = cam.random_targets;
      sc.scene = c.scene;
      sc.association_tolerance_T = cam.association_tolerance_T;
      const auto trials = bench::run_scene(sys, sc, thr);
      bench::CampaignResult r;
      r.kind = "scene";
      r.points.push_back({0.0, c.grid_step_T, bench::to_string(c.detector.kind), thr(*sys.context(c.grid_step_T)),
                          std::numeric_limits<double>::quiet_NaN()});
      for (const auto& t : trials) r.records.push_back(t.record);
      write_records(r);
      if (!trials.empty()) {
        const auto ctx = sys.context(c.grid_step_T);
        for (std::size_t p = 0; p < trials[0].traces.size(); ++p) {
          const fs::path path = out / ("metric_iter_" + std::to_string(p + 1) + ".csv");
          auto f = open_out(path);
          f << "range_m,metric\n";
          const auto& tr = trials[0].traces[p];
          for (Eigen::Index g = 0; g < tr.size(); ++g) {
            f << sys.constants().range_from_delay(ctx->grid().delay(ctx->grid().delay_index(g))) << ',' << tr[g]
              << '\n';
          }
          close_out(f, path, m);
        }
      }
      std::size_t hits = 0, falses = 0;
      for (const auto& rec : r.records) {
        for (const auto& d : rec.detections) (d.truth >= 0 ? hits : falses)++;
      }
      std::cout << "trials=" << r.records.size() << " true_detections=" << hits << " false_detections=" << falses
                << '\n';
      break;
    }
    case io::CampaignKind::fd0: {
      const auto ctx = sys.context(c.grid_step_T);
      const auto rows = bench::fd0_curve(sys, *ctx, c.detector, cam.fd0_pfas, cam.trials, cam.seed, cam.workers);
      const fs::path p = out / ("fd0_" + bench::to_string(c.detector.kind) + ".csv");
      auto f = open_out(p);
      bench::write_fd0_csv(f, rows);
      close_out(f, p, m);
      bench::write_fd0_csv(std::cout, rows);
      break;
    }
  }
  finish(out, m);
  return kOk;
}

int cmd_detect(const Options& o) {
  const io::RunConfig c = effective_config(o);
  const fs::path out = prepare_out(o);
  io::Manifest m = manifest("detect", c);
  const bench::System sys(c.system);
  std::ifstream in(o.snapshot);
  if (!in) throw Failure(kIo, "cannot open snapshot '" + o.snapshot + "'");
  scene::Snapshot snap;
  try {
    snap = scene::read_snapshot_csv(in, sys.constants());
  } catch (const std::exception& e) {
    throw Failure(kConfig, std::string("snapshot: ") + e.what());
  }
  if (snap.r.size() == 0) throw Failure(kConfig, "snapshot '" + o.snapshot + "' holds no samples");
  const auto ctx = sys.context(c.grid_step_T);
  if (snap.r.size() != ctx->samples()) {
    throw Failure(kConfig, "snapshot has " + std::to_string(snap.r.size()) + " samples, window '" +
                               std::string(1, c.system.window) + "' needs " + std::to_string(ctx->samples()));
  }
  bench::DetectorSettings s = c.detector;
  s.threshold = o.threshold > 0.0 ? o.threshold : threshold_for(sys, c, c.grid_step_T, m).gamma;
  detect::IicResult iic;
  const auto ds = bench::run_detector(sys, *ctx, snap.r, s, o.dump_metrics ? &iic : nullptr);

  if (o.dump_metrics) {
    std::vector<Eigen::VectorXd> traces = iic.traces;
    if (s.kind != bench::DetectorKind::iic) traces = {detect::glrt_metrics(*ctx, ctx->whiten(snap.r))};
    for (std::size_t p = 0; p < traces.size(); ++p) {
      const fs::path path = out / ("metric_iter_" + std::to_string(p + 1) + ".csv");
      auto f = open_out(path);
      f << "range_m,metric\n";
      for (Eigen::Index g = 0; g < traces[p].size(); ++g) {
        f << sys.constants().range_from_delay(ctx->grid().delay(ctx->grid().delay_index(g))) << ','
          << traces[p][g] << '\n';
      }
      close_out(f, path, m);
    }
  }

  const auto& pc = sys.constants();
  json list = json::array();
  for (const auto& d : ds) {
    json e = {{"iteration", d.iteration},
              {"range_m", pc.range_from_delay(d.delay)},
              {"velocity_mps", pc.velocity_from_doppler(d.doppler)},
              {"metric", d.metric},
              {"amplitude", {d.amplitude.real(), d.amplitude.imag()}}};
    if (d.refined) {
      e["refined_range_m"] = pc.range_from_delay(d.refined->delay);
      e["refined_amplitude"] = {d.refined->amplitude.real(), d.refined->amplitude.imag()};
    }
    list.push_back(e);
  }
  const json result = {{"threshold", s.threshold}, {"detector", bench::to_string(s.kind)}, {"detections", list}};
  if (o.json_out) {
    std::cout << result.dump(2) << '\n';
  } else {
    std::cout << "iteration,range_m,refined_range_m,metric,abs_amplitude\n";
    for (const auto& d : ds) {
      std::cout << d.iteration << ',' << pc.range_from_delay(d.delay) << ','
                << (d.refined ? pc.range_from_delay(d.refined->delay) : std::numeric_limits<double>::quiet_NaN())
                << ',' << d.metric << ',' << std::abs(d.amplitude) << '\n';
    }
  }
  const fs::path p = out / "detections.json";
  auto f = open_out(p);
  f << result.dump(2) << '\n';
  close_out(f, p, m);
  finish(out, m);
  return kOk;
}

void common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "YAML run configuration");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--window", o.window, "processing window preset a-f");
  sub->add_option("--grid-step", o.grid_step, "delay grid step in units of T (1, 1/2, 1/4, 1/8)");
  sub->add_option("--pfa", o.pfa, "target probability of false alarm");
  sub->add_option("--trials", o.trials, "Monte Carlo trials of this command");
  sub->add_option("--null-trials", o.null_trials, "noise-only trials for threshold calibration");
  sub->add_option("--seed", o.seed, "campaign seed");
  sub->add_option("--workers", o.workers, "worker threads (0: all cores)");
  sub->add_option("--cache", o.cache, "threshold cache file");
  sub->add_flag("--no-cache", o.no_cache, "neither read nor write the threshold cache");
}

void detector_flags(CLI::App* sub, Options& o) {
  sub->add_option("--detector", o.detector, "std | mfpd | iic-amfd");
  sub->add_flag("--refine", o.refine, "run the refinement stage");
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) g_args.emplace_back(argv[i]);
  CLI::App app{"Opportunistic 802.11ad radar: correlation analysis, calibration, simulation and detection"};
  app.require_subcommand(1);
  Options o;

  auto* correlate = app.add_subcommand("correlate", "windowed correlation profiles and maps");
  common(correlate, o);
  correlate->add_option("--tau-bar", o.tau_bar_T, "reference delays in units of T")->capture_default_str();
  correlate->add_option("--span", o.span_T, "half span of each profile in units of T")->capture_default_str();
  correlate->add_option("--step", o.step, "profile delay step in units of T")->capture_default_str();
  correlate->add_flag("--map", o.map, "also write the range x reference-range map");

  auto* calibrate = app.add_subcommand("calibrate", "threshold for a target Pfa");
  common(calibrate, o);
  calibrate->add_option("--method", o.method, "auto | direct | evt");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo campaign");
  common(simulate, o);
  detector_flags(simulate, o);
  simulate->add_option("--campaign", o.campaign, "range_sweep | resolution | scene | fd0");

  auto* detect_cmd = app.add_subcommand("detect", "run a detector on one snapshot CSV");
  common(detect_cmd, o);
  detector_flags(detect_cmd, o);
  detect_cmd->add_option("snapshot", o.snapshot, "snapshot CSV")->required();
  detect_cmd->add_option("--threshold", o.threshold, "detection threshold (default: calibrated)");
  detect_cmd->add_flag("--dump-metrics", o.dump_metrics, "write the metric over the grid per iteration");
  detect_cmd->add_flag("--json", o.json_out, "print detections as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*correlate) return cmd_correlate(o);
    if (*calibrate) {
      o.calibrating = true;
      return cmd_calibrate(o);
    }
    if (*simulate) return cmd_simulate(o);
    if (*detect_cmd) return cmd_detect(o);
  } catch (const Failure& e) {
    std::cerr << "error[" << category(e.code) << "]: " << e.what() << '\n';
    return e.code;
  } catch (const io::ConfigError& e) {
    std::cerr << "error[config]: " << e.what() << '\n';
    return kConfig;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error[numerical]: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
