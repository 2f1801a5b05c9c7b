// SPDX-License-Identifier: Apache-2.0
//
// Threshold calibration, Monte Carlo campaigns and their performance
// figures: Pfa, FD0, Pd, range/amplitude RMSE, CRB/EMCB and resolution.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oppradar/detect.hpp"
#include "oppradar/scene.hpp"
#include "oppradar/waveform.hpp"

namespace oppradar::bench {

/// Waveform, window, noise and search-space settings shared by every
/// experiment of a run.
struct SystemConfig {
  PhysicalConstants constants;
  scene::RadioParams radio;
  int chips = waveform::kMinChips;
  std::uint64_t waveform_seed = 1;
  char window = 'f';
  double sample_step_T = 1.0;
  double range_min_m = 5.0;
  double range_max_m = 40.0;
  double velocity_max_mps = 5.0;
  double doppler_step_hz = 0.0;
};

class System {
 public:
  explicit System(SystemConfig config);

  const SystemConfig& config() const { return config_; }
  const PhysicalConstants& constants() const { return config_.constants; }
  const scene::RadioParams& radio() const { return config_.radio; }
  double symbol_period() const { return config_.constants.symbol_period(); }
  const waveform::ProbeSignal& probe() const { return probe_; }
  const waveform::ProcessingWindow& window() const { return window_; }
  const waveform::SearchSpace& space() const { return space_; }
  const scene::NoiseModel& noise() const { return noise_; }
  const waveform::PulseShape& pulse() const { return pulse_; }
  double amplitude_scale() const { return config_.radio.amplitude_scale(symbol_period()); }
  /// floor((tau_max - tau_min) / T).
  int default_max_targets() const;

  /// Detector context for a delay grid step given in units of T; built once
  /// per step and shared.
  std::shared_ptr<const detect::DetectorContext> context(double grid_step_T) const;

 private:
  SystemConfig config_;
  waveform::PulseShape pulse_;
  waveform::ProbeSignal probe_;
  waveform::ProcessingWindow window_;
  waveform::SearchSpace space_;
  scene::NoiseModel noise_;
  mutable std::mutex mutex_;
  mutable std::map<double, std::shared_ptr<const detect::DetectorContext>> contexts_;
};

enum class DetectorKind { standard, mfpd, iic };

std::string to_string(DetectorKind kind);
/// Accepts "std", "mfpd", "iic-amfd". Throws std::invalid_argument otherwise.
DetectorKind parse_detector(const std::string& name);

struct DetectorSettings {
  DetectorKind kind = DetectorKind::iic;
  double threshold = 0.0;
  int max_targets = 0;  // 0: system default
  detect::LambdaMode lambda_mode = detect::LambdaMode::metric;
  double lambda_divisor = 16.0;
  detect::QuadratureOptions quadrature;
  int peak_radius = 1;
  bool refine = false;
  double refine_step_T = 1.0 / 512.0;
};

/// Runs the selected detector (and the refinement stage when requested).
std::vector<detect::Detection> run_detector(const System& system, const detect::DetectorContext& ctx,
                                            const CVector& r, const DetectorSettings& settings,
                                            detect::IicResult* iic_out = nullptr);

// ---------------------------------------------------------------- thresholds

struct BinomialInterval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson 95% interval for k successes out of n.
BinomialInterval binomial_ci(std::size_t k, std::size_t n);

/// Max-over-grid GLRT metric for `trials` independent noise-only snapshots.
std::vector<double> null_maxima(const detect::DetectorContext& ctx, std::size_t trials,
                                std::uint64_t seed, unsigned workers = 0);

/// Fraction of values strictly above gamma.
double empirical_pfa(std::span<const double> values, double gamma);

enum class CalibrationMethod { automatic, direct, evt };

struct Threshold {
  double gamma = 0.0;
  double pfa = 0.0;
  std::size_t trials = 0;
  double gamma_low = 0.0;
  double gamma_high = 0.0;
  /// Relative half-width of the Pfa interval at this trial count exceeds 50%.
  bool unreliable = false;
  bool evt = false;
  /// Tail fit rejected by the KS test; gamma is the direct quantile.
  bool refused = false;
  double ks_statistic = 0.0;
  std::string note;
};

/// Empirical (1 - pfa) quantile of the null maxima with an order-statistic
/// 95% interval.
Threshold calibrate_threshold(std::vector<double> maxima, double pfa);

/// Exponential-tail extrapolation: with u the (1 - f) quantile and beta the
/// mean excess of the top f n maxima, gamma = u + beta ln(f / pfa).
Threshold calibrate_threshold_evt(std::vector<double> maxima, double pfa, double tail_fraction = 0.05);

/// Direct quantile unless the trial count is too small for `pfa`, in which
/// case the EVT path is taken (or forced by `method`).
Threshold calibrate(const detect::DetectorContext& ctx, double pfa, std::size_t trials,
                    std::uint64_t seed, CalibrationMethod method = CalibrationMethod::automatic,
                    double tail_fraction = 0.05, unsigned workers = 0);

// ---------------------------------------------------------------------- FD0

struct Fd0Point {
  double pfa_target = 0.0;
  double gamma = 0.0;
  double pfa = 0.0;  // measured on the same trials
  double fd0 = 0.0;
};

/// Pfa and FD0 under H0 for a list of target Pfa values; thresholds are the
/// direct quantiles of the same null trials.
std::vector<Fd0Point> fd0_curve(const System& system, const detect::DetectorContext& ctx,
                                const DetectorSettings& settings, std::span<const double> pfas,
                                std::size_t trials, std::uint64_t seed, unsigned workers = 0);

// ---------------------------------------------------------------------- CRB

struct Crb {
  double delay_var = 0.0;      // s^2
  double range_var = 0.0;      // m^2
  double amplitude_var = 0.0;  // |alpha| variance
  bool valid = false;
};

/// d x / d tau by central differences of the sampled signature.
CVector signature_delay_derivative(const detect::DetectorContext& ctx, double delay, double doppler,
                                   double step = 0.0);

/// Fisher information of (tau, Re alpha, Im alpha) for
/// mu = alpha sqrt(P T) x_tau in CN(mu, C_w), inverted.
Crb crb(const detect::DetectorContext& ctx, const PhysicalConstants& pc, double delay,
        double doppler, cdouble amplitude);

// ---------------------------------------------------------------- campaigns

/// Detection with its association to the truth list (-1: false detection).
struct DetectionRecord {
  int iteration = 0;
  double range_m = 0.0;
  double refined_range_m = 0.0;  // NaN when not refined
  cdouble amplitude;
  cdouble refined_amplitude;
  double metric = 0.0;
  int truth = -1;
};

struct TruthRecord {
  double range_m = 0.0;
  cdouble amplitude;
  double crb_range_var = 0.0;
  double crb_amplitude_var = 0.0;
};

struct TrialRecord {
  std::size_t point = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<TruthRecord> truth;  // truth[0] is the reference target
  std::vector<DetectionRecord> detections;
};

struct PointInfo {
  double x = 0.0;  // reference range or separation, m
  double grid_step_T = 1.0;
  std::string detector;
  double threshold = 0.0;
  double snr_db = 0.0;  // average SNR of the reference target, NaN if unused
};

struct CampaignResult {
  std::string kind;
  std::vector<PointInfo> points;
  std::vector<TrialRecord> records;
};

/// Greedy one-to-one association in decreasing metric order; each detection
/// takes the nearest free truth within `tolerance_m`.
std::vector<int> associate(std::span<const detect::Detection> detections,
                           std::span<const double> truth_ranges_m, double tolerance_m,
                           const PhysicalConstants& pc);

using ThresholdFn = std::function<double(const detect::DetectorContext&)>;

struct RangeSweepConfig {
  DetectorSettings detector;
  double grid_step_T = 1.0;
  std::vector<double> ranges_m;
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  double reference_rcs_m2 = 0.1;
  /// Additional random targets per snapshot (ignored by the single-target
  /// detector, which sees the reference alone).
  int extra_targets = 7;
  scene::SceneSpec scene;
  /// Reference range is drawn uniformly in +-jitter_T * cT/4 around the
  /// nominal range.
  double jitter_T = 1.0;
  double association_tolerance_T = 1.0;
};

CampaignResult run_range_sweep(const System& system, const RangeSweepConfig& config,
                               const ThresholdFn& threshold);

struct ResolutionConfig {
  DetectorSettings detector;
  std::vector<double> grid_steps_T{1.0, 0.125};
  std::vector<double> separations_m;
  std::size_t trials = 200;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  double range_m = 20.0;
  double rcs_m2 = 0.1;
  double jitter_T = 1.0;
  bool genie = true;
  double association_tolerance_T = 1.0;
};

/// Two targets at range_m and range_m + separation. Points are ordered
/// (detector, grid step, separation); the genie baseline uses the STD on the
/// snapshot with the other echo removed exactly.
CampaignResult run_resolution(const System& system, const ResolutionConfig& config,
                              const ThresholdFn& threshold);

struct SceneConfig {
  DetectorSettings detector;
  double grid_step_T = 1.0;
  std::size_t trials = 25;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  /// Fixed targets; when empty, `random_targets` are placed per snapshot.
  std::vector<scene::Target> targets;
  int random_targets = 8;
  scene::SceneSpec scene;
  double association_tolerance_T = 1.0;
};

struct SceneTrial {
  TrialRecord record;
  std::vector<Eigen::VectorXd> traces;  // kept for the first trial only
};

std::vector<SceneTrial> run_scene(const System& system, const SceneConfig& config,
                                  const ThresholdFn& threshold);

// -------------------------------------------------------------- aggregation

struct RangePointSummary {
  double range_m = 0.0;
  std::string detector;
  std::size_t trials = 0;
  std::size_t hits = 0;
  double pd = 0.0;
  BinomialInterval pd_ci;
  double coarse_rmse_m = 0.0;   // NaN when no hit
  double refined_rmse_m = 0.0;  // NaN when no hit or not refined
  double amplitude_nrmse = 0.0;
  double emcb_m = 0.0;
  double crb_amplitude_rel = 0.0;
  double false_per_trial = 0.0;
  double mean_snr_db = 0.0;
};

std::vector<RangePointSummary> pd_rmse_report(const System& system, const CampaignResult& result);

struct ResolutionSummary {
  std::string detector;
  double grid_step_T = 1.0;
  double separation_m = 0.0;
  double mean_detections = 0.0;
  double refined_rmse_m = 0.0;
};

std::vector<ResolutionSummary> resolution_report(const CampaignResult& result);

/// Largest x at which y crosses `level` from above when scanning from the
/// largest x downwards, by linear interpolation; NaN when never below.
double crossing_from_right(std::span<const double> x, std::span<const double> y, double level);

// ----------------------------------------------------------------- records

void write_records_csv(std::ostream& os, const CampaignResult& result);
CampaignResult read_records_csv(std::istream& is);

void write_range_report_csv(std::ostream& os, std::span<const RangePointSummary> rows);
void write_resolution_report_csv(std::ostream& os, std::span<const ResolutionSummary> rows);
void write_fd0_csv(std::ostream& os, std::span<const Fd0Point> rows);

}  // namespace oppradar::bench
