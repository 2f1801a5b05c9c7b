// SPDX-License-Identifier: Apache-2.0
//
// Windowed correlation of two delayed copies of the probe,
//
//   Phi(tau, tau_bar) = 1/||chi||^2 * int_{Tw1}^{Tw2} s*(t - tau) s(t - tau_bar) dt,
//
// evaluated by the trapezoidal rule on a grid of `oversampling` points per
// symbol, plus the range/Doppler resolution diagnostics built on it.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "oppradar/types.hpp"
#include "oppradar/waveform.hpp"

namespace oppradar::corranalysis {

inline constexpr int kDefaultOversampling = 8;

/// Direct evaluation; works for any delays.
cdouble windowed_correlation(const waveform::ProbeSignal& probe, double delay,
                             double reference_delay, const waveform::ProcessingWindow& window,
                             int oversampling = kDefaultOversampling);

/// Caches s(t) on the quadrature grid so that correlations at delays which
/// are multiples of the grid step reduce to shifted inner products.
class CorrelationEngine {
 public:
  explicit CorrelationEngine(const waveform::ProbeSignal& probe,
                             int oversampling = kDefaultOversampling);

  double step() const { return step_; }
  double normalization() const { return normalization_; }
  /// True when t is a multiple of the grid step (to 1e-9 of a step).
  bool on_grid(double t) const;

  /// Same quantity as windowed_correlation(); delays and window edges must
  /// be on the grid (std::invalid_argument otherwise).
  cdouble correlate(double delay, double reference_delay,
                    const waveform::ProcessingWindow& window) const;

 private:
  long grid_index(double t) const;
  cdouble correlate_lags(long lag, long reference_lag, long first, long last) const;

  std::vector<cdouble> samples_;
  double step_;
  double normalization_;
};

struct CorrelationPoint {
  double delay = 0.0;
  cdouble phi;
};

struct CorrelationProfile {
  double reference_delay = 0.0;
  waveform::ProcessingWindow window;
  double normalization = 0.0;
  std::vector<CorrelationPoint> samples;

  std::vector<double> magnitudes() const;
  std::size_t peak_index() const;
};

CorrelationProfile correlation_profile(const waveform::ProbeSignal& probe, double reference_delay,
                                       const waveform::ProcessingWindow& window, double delay_lo,
                                       double delay_hi, double step,
                                       int oversampling = kDefaultOversampling);

/// Same as above but reusing a prepared engine (fast path only).
CorrelationProfile correlation_profile(const CorrelationEngine& engine, double reference_delay,
                                       const waveform::ProcessingWindow& window, double delay_lo,
                                       double delay_hi, double step);

/// |Phi| over a delay x reference-delay grid, normalized by its global maximum.
struct CorrelationMap {
  std::vector<double> delays;
  std::vector<double> reference_delays;
  Eigen::MatrixXd values;  // rows: reference delay, columns: delay
};

CorrelationMap correlation_map(const CorrelationEngine& engine,
                               const waveform::ProcessingWindow& window,
                               std::span<const double> delays,
                               std::span<const double> reference_delays);

/// Indices [left, right] of the main lobe around `peak`: the lobe extends to
/// the first local minimum of the magnitude on each side.
struct LobeBounds {
  std::size_t left = 0;
  std::size_t right = 0;
};
LobeBounds main_lobe(std::span<const double> magnitudes, std::size_t peak);

/// Largest magnitude outside the main lobe, relative to the peak.
double sidelobe_ratio(std::span<const double> magnitudes, std::size_t peak);

/// Strict local maxima (greater than both neighbours).
std::vector<std::size_t> local_maxima(std::span<const double> magnitudes);

/// Full width at half maximum of the lobe at `peak`, in the units of `axis`.
double full_width_half_max(std::span<const double> axis, std::span<const double> magnitudes,
                           std::size_t peak);

struct DopplerResolution {
  double hz = 0.0;
  double mps = 0.0;
};

/// Two echoes at delay `delay` are Doppler-resolvable only beyond this
/// spacing: 1 / (Tw2 - max(Tw1, delay)).
DopplerResolution doppler_resolution(const waveform::ProcessingWindow& window, double delay,
                                     const PhysicalConstants& pc);

/// CSV "range_m,abs_phi,re_phi,im_phi".
void write_profile_csv(std::ostream& os, const CorrelationProfile& profile,
                       const PhysicalConstants& pc);

/// Dense CSV; first row holds range_m of the delay axis, first column the
/// reference range.
void write_map_csv(std::ostream& os, const CorrelationMap& map, const PhysicalConstants& pc);

}  // namespace oppradar::corranalysis
