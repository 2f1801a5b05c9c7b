// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "oppradar/bench.hpp"
#include "oppradar/parallel.hpp"
#include "oppradar/random.hpp"

namespace oppradar::bench {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sub-streams of one trial. Reference, other targets and noise are drawn
// independently so that detectors seeing different target lists still share
// the reference echo and the noise realization.
enum Stream : std::uint64_t { kReference = 1, kOthers = 2, kNoise = 3 };

struct DrawnTarget {
  scene::Target target;
  scene::Echo echo;
};

DrawnTarget draw_target(const scene::Target& t, const System& sys, Rng& rng) {
  const auto& pc = sys.constants();
  return {t, {t.delay(pc), t.doppler(pc), scene::draw_amplitude(t, sys.radio(), pc, rng)}};
}

// Nominal range plus a uniform offset in +-jitter_T cT/4, reflected back into
// the searched interval so that points on its edge stay detectable.
double jittered_range(double range_m, double jitter_T, const System& sys, Rng& rng) {
  const double half = jitter_T * sys.constants().speed_of_light * sys.symbol_period() / 4.0;
  if (!(half > 0.0)) return range_m;
  double r = range_m + std::uniform_real_distribution<double>(-half, half)(rng);
  const double lo = sys.config().range_min_m, hi = sys.config().range_max_m;
  if (r < lo) r = std::min(2.0 * lo - r, hi);
  if (r > hi) r = std::max(2.0 * hi - r, lo);
  return r;
}

CVector synthesize(const System& sys, std::span<const DrawnTarget> targets, std::uint64_t seed) {
  std::vector<scene::Echo> echoes;
  for (const auto& t : targets) echoes.push_back(t.echo);
  Rng noise = make_stream(seed, kNoise);
  return scene::synthesize(echoes, sys.probe(), sys.window(), sys.noise(), sys.amplitude_scale(), noise);
}

TruthRecord truth_record(const DrawnTarget& t) {
  return {t.target.range_m, t.echo.amplitude, kNaN, kNaN};
}

DetectionRecord detection_record(const detect::Detection& d, int truth, const PhysicalConstants& pc) {
  DetectionRecord rec;
  rec.iteration = d.iteration;
  rec.range_m = pc.range_from_delay(d.delay);
  rec.amplitude = d.amplitude;
  rec.metric = d.metric;
  rec.truth = truth;
  if (d.refined) {
    rec.refined_range_m = pc.range_from_delay(d.refined->delay);
    rec.refined_amplitude = d.refined->amplitude;
  } else {
    rec.refined_range_m = kNaN;
    rec.refined_amplitude = {kNaN, kNaN};
  }
  return rec;
}

void add_detections(TrialRecord& rec, std::span<const detect::Detection> ds, const PhysicalConstants& pc,
                    double tolerance_m) {
  std::vector<double> ranges;
  for (const auto& t : rec.truth) ranges.push_back(t.range_m);
  const auto assoc = associate(ds, ranges, tolerance_m, pc);
  for (std::size_t i = 0; i < ds.size(); ++i) rec.detections.push_back(detection_record(ds[i], assoc[i], pc));
}

double tolerance_m(double tol_T, const System& sys) {
  return tol_T * sys.constants().speed_of_light * sys.symbol_period() / 2.0;
}

}  // namespace

std::vector<int> associate(std::span<const detect::Detection> detections,
                           std::span<const double> truth_ranges_m, double tolerance_m,
                           const PhysicalConstants& pc) {
  std::vector<int> out(detections.size(), -1);
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].metric > detections[b].metric; });
  std::vector<char> taken(truth_ranges_m.size(), 0);
  for (std::size_t i : order) {
    const double r = pc.range_from_delay(detections[i].delay);
    int best = -1;
    double best_err = tolerance_m;
    for (std::size_t k = 0; k < truth_ranges_m.size(); ++k) {
      const double err = std::abs(r - truth_ranges_m[k]);
      if (!taken[k] && err <= best_err) {
        best = static_cast<int>(k);
        best_err = err;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      out[i] = best;
    }
  }
  return out;
}

CampaignResult run_range_sweep(const System& sys, const RangeSweepConfig& cfg, const ThresholdFn& threshold) {
  const auto ctx = sys.context(cfg.grid_step_T);
  const auto& pc = sys.constants();
  DetectorSettings settings = cfg.detector;
  settings.threshold = threshold(*ctx);
  const bool single = settings.kind == DetectorKind::standard;

  CampaignResult result;
  result.kind = "range_sweep";
  for (double range : cfg.ranges_m) {
    const scene::Target ref{range, 0.0, cfg.reference_rcs_m2};
    const double snr = scene::mean_snr(scene::expected_amplitude_power(ref, sys.radio(), pc), sys.radio(), pc);
    result.points.push_back({range, cfg.grid_step_T, to_string(settings.kind), settings.threshold, linear_to_db(snr)});
  }

  const std::size_t n_points = cfg.ranges_m.size();
  result.records.resize(n_points * cfg.trials);
  const double tol = tolerance_m(cfg.association_tolerance_T, sys);
  parallel_for(result.records.size(), cfg.workers, [&](std::size_t g) {
    const std::size_t p = g / cfg.trials;
    const std::uint64_t seed = stream_seed(cfg.seed, g);
    Rng ref_rng = make_stream(seed, kReference);
    scene::Target ref{cfg.ranges_m[p], 0.0, cfg.reference_rcs_m2};
    ref.range_m = jittered_range(ref.range_m, cfg.jitter_T, sys, ref_rng);
    std::vector<DrawnTarget> targets{draw_target(ref, sys, ref_rng)};
    if (!single && cfg.extra_targets > 0) {
      Rng other_rng = make_stream(seed, kOthers);
      const scene::Target occupied[] = {ref};
      for (const auto& t : scene::place_random_scene(cfg.extra_targets, cfg.scene, other_rng, occupied)) {
        targets.push_back(draw_target(t, sys, other_rng));
      }
    }
    const CVector r = synthesize(sys, targets, seed);

    TrialRecord& rec = result.records[g];
    rec.point = p;
    rec.trial = g % cfg.trials;
    rec.seed = seed;
    for (const auto& t : targets) rec.truth.push_back(truth_record(t));
    const Crb bound = crb(*ctx, pc, targets[0].echo.delay, targets[0].echo.doppler, targets[0].echo.amplitude);
    rec.truth[0].crb_range_var = bound.valid ? bound.range_var : kNaN;
    rec.truth[0].crb_amplitude_var = bound.valid ? bound.amplitude_var : kNaN;

    const auto ds = run_detector(sys, *ctx, r, settings);
    add_detections(rec, ds, pc, tol);
  });
  return result;
}

CampaignResult run_resolution(const System& sys, const ResolutionConfig& cfg, const ThresholdFn& threshold) {
  const auto& pc = sys.constants();
  const double tol = tolerance_m(cfg.association_tolerance_T, sys);
  const std::size_t n_sep = cfg.separations_m.size();

  struct Block {
    std::shared_ptr<const detect::DetectorContext> ctx;
    DetectorSettings settings;
    bool genie;
    double grid_step_T;
  };
  std::vector<Block> blocks;
  for (bool genie : {false, true}) {
    if (genie && !cfg.genie) continue;
    for (double step : cfg.grid_steps_T) {
      Block b{sys.context(step), cfg.detector, genie, step};
      if (genie) b.settings.kind = DetectorKind::standard;
      b.settings.threshold = threshold(*b.ctx);
      b.settings.refine = true;
      blocks.push_back(b);
    }
  }

  CampaignResult result;
  result.kind = "resolution";
  for (const auto& b : blocks) {
    for (double sep : cfg.separations_m) {
      result.points.push_back({sep, b.grid_step_T, b.genie ? "genie" : to_string(b.settings.kind),
                               b.settings.threshold, kNaN});
    }
  }

  const std::size_t per_block = n_sep * cfg.trials;
  result.records.resize(blocks.size() * per_block);
  parallel_for(result.records.size(), cfg.workers, [&](std::size_t idx) {
    const Block& b = blocks[idx / per_block];
    const std::size_t g = idx % per_block;  // shared across blocks: common random numbers
    const std::size_t s = g / cfg.trials;
    const std::uint64_t seed = stream_seed(cfg.seed, g);
    Rng ref_rng = make_stream(seed, kReference);
    const double base = jittered_range(cfg.range_m, cfg.jitter_T, sys, ref_rng);
    std::vector<DrawnTarget> targets;
    targets.push_back(draw_target({base, 0.0, cfg.rcs_m2}, sys, ref_rng));
    Rng other_rng = make_stream(seed, kOthers);
    targets.push_back(draw_target({base + cfg.separations_m[s], 0.0, cfg.rcs_m2}, sys, other_rng));
    const CVector r = synthesize(sys, targets, seed);

    TrialRecord& rec = result.records[idx];
    rec.point = (idx / per_block) * n_sep + s;
    rec.trial = g % cfg.trials;
    rec.seed = seed;
    for (const auto& t : targets) rec.truth.push_back(truth_record(t));

    if (!b.genie) {
      add_detections(rec, run_detector(sys, *b.ctx, r, b.settings), pc, tol);
      return;
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      CVector clean = r;
      for (std::size_t j = 0; j < targets.size(); ++j) {
        if (j == k) continue;
        CVector x(r.size());
        waveform::sample_signature(sys.probe(), sys.window(), targets[j].echo.delay, targets[j].echo.doppler,
                                   as_span(x));
        clean -= (targets[j].echo.amplitude * sys.amplitude_scale()) * x;
      }
      for (auto d : run_detector(sys, *b.ctx, clean, b.settings)) {
        d.iteration = static_cast<int>(k) + 1;
        const double err = std::abs(pc.range_from_delay(d.delay) - targets[k].target.range_m);
        rec.detections.push_back(detection_record(d, err <= tol ? static_cast<int>(k) : -1, pc));
      }
    }
  });
  return result;
}

std::vector<SceneTrial> run_scene(const System& sys, const SceneConfig& cfg, const ThresholdFn& threshold) {
  const auto ctx = sys.context(cfg.grid_step_T);
  const auto& pc = sys.constants();
  DetectorSettings settings = cfg.detector;
  settings.threshold = threshold(*ctx);
  const double tol = tolerance_m(cfg.association_tolerance_T, sys);

  std::vector<SceneTrial> out(cfg.trials);
  parallel_for(cfg.trials, cfg.workers, [&](std::size_t t) {
    const std::uint64_t seed = stream_seed(cfg.seed, t);
    Rng rng = make_stream(seed, kOthers);
    const std::vector<scene::Target> placed =
        cfg.targets.empty() ? scene::place_random_scene(cfg.random_targets, cfg.scene, rng) : cfg.targets;
    std::vector<DrawnTarget> targets;
    for (const auto& target : placed) targets.push_back(draw_target(target, sys, rng));
    const CVector r = synthesize(sys, targets, seed);

    SceneTrial& st = out[t];
    st.record.trial = t;
    st.record.seed = seed;
    for (const auto& d : targets) st.record.truth.push_back(truth_record(d));
    detect::IicResult iic;
    const bool traces = t == 0 && settings.kind == DetectorKind::iic;
    const auto ds = run_detector(sys, *ctx, r, settings, traces ? &iic : nullptr);
    add_detections(st.record, ds, pc, tol);
    if (traces) st.traces = std::move(iic.traces);
  });
  return out;
}

}  // namespace oppradar::bench
