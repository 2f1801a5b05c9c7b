// SPDX-License-Identifier: Apache-2.0
//
// Grid-search detectors over a delay/Doppler grid: the whitened matched
// filter (GLRT) metric, the single-target detector, the matched-filter peak
// detector and the iterative interference-cancelling adaptive matched-filter
// detector with its refinement stage.
//
// Everything runs in noise-whitened coordinates: with C_w = L L^H, a vector
// v is carried as L^{-1} v. The adaptive inverse (I + sum |a|^2 Q~)^{-1} is
// kept as I - Z Z^H and grown one low-rank block per detection.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "oppradar/scene.hpp"
#include "oppradar/types.hpp"
#include "oppradar/waveform.hpp"

namespace oppradar::detect {

/// tau_j = j * delay_step for j in [j_min, j_max], nu_n = n * doppler_step
/// for |n| <= n_doppler. Points are indexed delay-major.
struct SearchGrid {
  double delay_step = 0.0;
  double doppler_step = 0.0;
  long j_min = 0;
  long j_max = -1;
  int n_doppler = 0;

  static SearchGrid build(const waveform::SearchSpace& space, double delay_step,
                          double doppler_step = 0.0);

  long delay_count() const { return j_max - j_min + 1; }
  int doppler_count() const { return 2 * n_doppler + 1; }
  std::size_t size() const { return static_cast<std::size_t>(delay_count()) * doppler_count(); }
  double delay(long jd) const { return static_cast<double>(j_min + jd) * delay_step; }
  double doppler(int nd) const { return (nd - n_doppler) * doppler_step; }
  std::size_t index(long jd, int nd) const {
    return static_cast<std::size_t>(jd) * doppler_count() + nd;
  }
  long delay_index(std::size_t g) const { return static_cast<long>(g / doppler_count()); }
  int doppler_index(std::size_t g) const { return static_cast<int>(g % doppler_count()); }
};

struct RefinedEstimate {
  cdouble amplitude;
  double delay = 0.0;
  double doppler = 0.0;
  double metric = 0.0;
};

struct Detection {
  cdouble amplitude;
  double delay = 0.0;
  double doppler = 0.0;
  double metric = 0.0;
  int iteration = 1;
  std::size_t grid_index = 0;
  double delay_extent = 0.0;
  double doppler_extent = 0.0;
  std::optional<RefinedEstimate> refined;
};

/// Q ~= U diag(lambda) U^H with orthonormal U.
struct LowRankPsd {
  CMatrix u;
  Eigen::VectorXd lambda;

  int rank() const { return static_cast<int>(lambda.size()); }
  CMatrix dense() const;
};

/// Precomputed whitened signature bank and the geometry it was built for.
/// Immutable after construction and shared by all trials of a campaign.
class DetectorContext {
 public:
  DetectorContext(waveform::ProbeSignal probe, waveform::ProcessingWindow window,
                  waveform::SearchSpace space, SearchGrid grid, scene::NoiseModel noise,
                  double amplitude_scale, double bandwidth);

  const waveform::ProbeSignal& probe() const { return probe_; }
  const waveform::ProcessingWindow& window() const { return window_; }
  const waveform::SearchSpace& space() const { return space_; }
  const SearchGrid& grid() const { return grid_; }
  const scene::NoiseModel& noise() const { return noise_; }
  double amplitude_scale() const { return amplitude_scale_; }
  double bandwidth() const { return bandwidth_; }
  int samples() const { return window_.sample_count(); }

  /// Whitened, amplitude-scaled signatures, one column per grid point.
  const CMatrix& bank() const { return bank_; }
  const Eigen::VectorXd& bank_energy() const { return energy_; }

  /// L^{-1} sqrt(P T) x_{tau,nu} at an arbitrary point (no S check).
  CVector whitened_signature(double delay, double doppler) const;
  CVector whiten(const CVector& r) const { return noise_.whitened(r); }

 private:
  waveform::ProbeSignal probe_;
  waveform::ProcessingWindow window_;
  waveform::SearchSpace space_;
  SearchGrid grid_;
  scene::NoiseModel noise_;
  double amplitude_scale_;
  double bandwidth_;
  CMatrix bank_;
  Eigen::VectorXd energy_;
};

/// |x^H C^{-1} r|^2 / (x^H C^{-1} x) with C^{-1} applied by `noise`;
/// zero when x has no energy.
double mf_metric(const CVector& r, const CVector& x, const scene::NoiseModel& noise);

/// Same metric with whitened inputs.
double whitened_metric(cdouble xr, double xx);

/// GLRT metric at every grid point for a whitened snapshot.
Eigen::VectorXd glrt_metrics(const DetectorContext& ctx, const CVector& r_white);

/// Index of the largest entry among `active` points; the first index wins ties.
std::optional<std::size_t> argmax_active(const Eigen::VectorXd& metric,
                                         const std::vector<char>& active);

std::optional<Detection> std_detect(const DetectorContext& ctx, const CVector& r, double threshold);

/// Threshold crossings that are local maxima within +-peak_radius delay
/// bins (and +-1 Doppler bin). peak_radius = 0 keeps every crossing.
std::vector<Detection> mf_pd_detect(const DetectorContext& ctx, const CVector& r, double threshold,
                                    int peak_radius);

enum class LambdaMode { metric, threshold };

struct Extents {
  double delay = 0.0;
  double doppler = 0.0;
};

/// E = max{dg, lambda^{-1/2} / (2 pi W)} / 2 and
/// Theta = max{Og, lambda^{-1/2} / (Tw2 - max(Tw1, tau_max))} / 2.
Extents uncertainty_extents(double lambda, const SearchGrid& grid,
                            const waveform::ProcessingWindow& window, double tau_max,
                            double bandwidth);

struct QuadratureOptions {
  int nodes = 33;
  double rank_tolerance = 1e-6;
};

/// Average of x x^H over the rectangle (tau +- E) x (nu +- Theta) clipped to
/// S, by Gauss-Legendre in each non-degenerate dimension. `whitened` selects
/// L^{-1} x instead of x. Doppler uses one node when `doppler_search` is off.
LowRankPsd build_q(const DetectorContext& ctx, double delay, double doppler, Extents extents,
                   bool doppler_search, bool whitened = true, QuadratureOptions options = {});

struct InverseUpdate {
  CMatrix inverse;
  bool fallback = false;
};

/// (C + amp2 U diag(lambda) U^H)^{-1} from C^{-1} by the matrix inversion
/// lemma; refactorizes C directly when the inner system is ill-conditioned.
InverseUpdate update_inverse(const CMatrix& inverse, const LowRankPsd& q, double amp2);

/// K = (I + sum_n amp2_n Q~_n)^{-1} = I - Z Z^H in whitened coordinates.
class InterferenceWhitener {
 public:
  explicit InterferenceWhitener(int size);

  /// Adds amp2 * Q~ and returns the new block of Z (possibly empty). When
  /// the inner solve is ill-conditioned Z is rebuilt from scratch and
  /// `rebuilt()` reports it; callers tracking projections must then refresh.
  CMatrix add(const LowRankPsd& q, double amp2);

  const CMatrix& z() const { return z_; }
  bool rebuilt() const { return rebuilt_; }
  int fallbacks() const { return fallbacks_; }
  CVector apply(const CVector& x) const;
  CMatrix dense() const;

 private:
  CMatrix z_;
  CMatrix basis_;  // columns sqrt(amp2 lambda) u for every term so far
  bool rebuilt_ = false;
  int fallbacks_ = 0;
};

struct IicConfig {
  double threshold = 0.0;
  int max_targets = 1;
  LambdaMode lambda_mode = LambdaMode::metric;
  double lambda_divisor = 16.0;
  QuadratureOptions quadrature;
  bool keep_traces = false;
};

struct IicResult {
  std::vector<Detection> detections;
  std::vector<LowRankPsd> interference;  // whitened Q_n per detection
  std::vector<Eigen::VectorXd> traces;   // metric over the grid per iteration
  int whitener_fallbacks = 0;
};

IicResult iic_amfd(const DetectorContext& ctx, const CVector& r, const IicConfig& config);

struct RefineOptions {
  /// Final delay step; the search first scans B_p at 16x this step and
  /// then the neighbourhood of the best point at the final step.
  double delay_step = 0.0;
  int doppler_points = 9;
};

/// Fine-grid maximization of the leave-one-out metric in B_p for every
/// detection; fills Detection::refined.
void refine(const DetectorContext& ctx, const CVector& r, IicResult& result,
            const RefineOptions& options);

/// Refinement of a single-target detection (empty exclusion set).
void refine_single(const DetectorContext& ctx, const CVector& r, Detection& detection,
                   const RefineOptions& options);

}  // namespace oppradar::detect
