// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "oppradar/bench.hpp"

namespace oppradar::bench {

namespace {

waveform::ProbeSignal make_probe(const SystemConfig& c, const waveform::PulseShape& pulse) {
  const auto sym = waveform::SymbolSequence::build(c.chips, c.waveform_seed);
  return waveform::ProbeSignal(sym.chips(), waveform::CompositePulse(pulse, pulse));
}

}  // namespace

System::System(SystemConfig config)
    : config_(std::move(config)),
      pulse_(config_.constants.symbol_period()),
      probe_(make_probe(config_, pulse_)),
      window_(waveform::ProcessingWindow::preset(config_.window, config_.chips, symbol_period(),
                                                 config_.sample_step_T * symbol_period())),
      space_(waveform::SearchSpace::from_ranges(config_.range_min_m, config_.range_max_m,
                                                config_.velocity_max_mps, config_.constants)),
      noise_(scene::NoiseModel::build(window_, config_.radio, pulse_)) {
  config_.radio.validate();
}

int System::default_max_targets() const {
  return std::max(1, static_cast<int>(std::floor((space_.delay_max - space_.delay_min) / symbol_period())));
}

std::shared_ptr<const detect::DetectorContext> System::context(double grid_step_T) const {
  if (!(grid_step_T > 0.0)) throw std::invalid_argument("grid step must be positive");
  std::lock_guard lock(mutex_);
  auto it = contexts_.find(grid_step_T);
  if (it != contexts_.end()) return it->second;
  const auto grid = detect::SearchGrid::build(space_, grid_step_T * symbol_period(), config_.doppler_step_hz);
  auto ctx = std::make_shared<const detect::DetectorContext>(probe_, window_, space_, grid, noise_,
                                                             amplitude_scale(),
                                                             config_.constants.bandwidth());
  contexts_.emplace(grid_step_T, ctx);
  return ctx;
}

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::standard: return "std";
    case DetectorKind::mfpd: return "mfpd";
    case DetectorKind::iic: return "iic-amfd";
  }
  return "?";
}

DetectorKind parse_detector(const std::string& name) {
  if (name == "std") return DetectorKind::standard;
  if (name == "mfpd") return DetectorKind::mfpd;
  if (name == "iic-amfd") return DetectorKind::iic;
  throw std::invalid_argument("unknown detector '" + name + "' (expected std, mfpd or iic-amfd)");
}

std::vector<detect::Detection> run_detector(const System& system, const detect::DetectorContext& ctx,
                                            const CVector& r, const DetectorSettings& s,
                                            detect::IicResult* iic_out) {
  const detect::RefineOptions refine{s.refine_step_T * system.symbol_period()};
  switch (s.kind) {
    case DetectorKind::standard: {
      auto d = detect::std_detect(ctx, r, s.threshold);
      if (!d) return {};
      if (s.refine) detect::refine_single(ctx, r, *d, refine);
      return {*d};
    }
    case DetectorKind::mfpd: {
      auto ds = detect::mf_pd_detect(ctx, r, s.threshold, s.peak_radius);
      if (s.refine) {
        for (auto& d : ds) detect::refine_single(ctx, r, d, refine);
      }
      return ds;
    }
    case DetectorKind::iic: {
      detect::IicConfig cfg;
      cfg.threshold = s.threshold;
      cfg.max_targets = s.max_targets > 0 ? s.max_targets : system.default_max_targets();
      cfg.lambda_mode = s.lambda_mode;
      cfg.lambda_divisor = s.lambda_divisor;
      cfg.quadrature = s.quadrature;
      cfg.keep_traces = iic_out != nullptr;
      detect::IicResult res = detect::iic_amfd(ctx, r, cfg);
      if (s.refine) detect::refine(ctx, r, res, refine);
      auto out = res.detections;
      if (iic_out) *iic_out = std::move(res);
      return out;
    }
  }
  return {};
}

}  // namespace oppradar::bench
