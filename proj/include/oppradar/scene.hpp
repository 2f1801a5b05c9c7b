// SPDX-License-Identifier: Apache-2.0
//
// Point-target scenes, radar-equation amplitudes with shadowing and Rice
// fading, the colored receiver noise and the received snapshot
//
//   r = sum_p alpha_p sqrt(P T) x_{tau_p, nu_p} + w,   w ~ CN(0, C_w).

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oppradar/random.hpp"
#include "oppradar/types.hpp"
#include "oppradar/waveform.hpp"

namespace oppradar::scene {

struct RadioParams {
  double transmit_power_w = 10e-3;
  double antenna_gain_db = 46.0;  // two-way
  double noise_psd_dbm_hz = -177.0;
  double noise_figure_db = 7.0;
  double shadowing_db = 3.0;
  double rice_k_db = 15.0;
  bool shadowing = true;
  bool fading = true;
  /// Coherent processing gain used in the average-SNR axis.
  double processing_gain = 512.0;

  double antenna_gain() const { return db_to_linear(antenna_gain_db); }
  double noise_figure() const { return db_to_linear(noise_figure_db); }
  /// sigma_u^2 in W/Hz.
  double noise_psd() const { return db_to_linear(noise_psd_dbm_hz - 30.0); }
  /// F_u sigma_u^2, the white-noise level seen at the receive filter input.
  double noise_level() const { return noise_figure() * noise_psd(); }
  /// sqrt(P T): scale from unit-power signatures to received echoes.
  double amplitude_scale(double symbol_period) const;
  void validate() const;
};

struct Target {
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double rcs_m2 = 0.0;

  double delay(const PhysicalConstants& pc) const { return pc.delay_from_range(range_m); }
  double doppler(const PhysicalConstants& pc) const { return pc.doppler_from_velocity(velocity_mps); }
};

/// One echo as it enters the signal model.
struct Echo {
  double delay = 0.0;
  double doppler = 0.0;
  cdouble amplitude;
};

/// Two-way loss (4 pi)^3 lambda^-2 (c tau / 2)^4.
double path_loss(double delay, const PhysicalConstants& pc);

/// sqrt(G A_slow A_fast zeta / L) e^{-i phi}.
cdouble draw_amplitude(const Target& target, const RadioParams& params,
                       const PhysicalConstants& pc, Rng& rng);

/// E[|alpha|^2] under the shadowing/fading model.
double expected_amplitude_power(const Target& target, const RadioParams& params,
                                const PhysicalConstants& pc);

/// processing_gain * P E[|alpha|^2] / (2 W F_u sigma_u^2).
double mean_snr(double amplitude_power, const RadioParams& params, const PhysicalConstants& pc);

/// Deterministic autocorrelation of a real pulse at lag z.
double pulse_autocorrelation(const waveform::PulseShape& pulse, double lag);

/// Real symmetric banded Toeplitz covariance with its banded Cholesky factor
/// C = L L^T. The receive-filtered white noise has finite correlation length,
/// so the band is short and whitening costs O(M b).
class NoiseModel {
 public:
  /// `autocorrelation[k]` is the covariance at lag k samples; the band ends
  /// where it is given. Throws std::domain_error if the matrix is not PD.
  NoiseModel(std::vector<double> autocorrelation, int size);

  static NoiseModel build(const waveform::ProcessingWindow& window, const RadioParams& params,
                          const waveform::PulseShape& rx);

  int size() const { return size_; }
  int bandwidth() const { return static_cast<int>(lags_.size()) - 1; }
  double variance() const { return lags_[0]; }
  std::span<const double> lags() const { return lags_; }
  double entry(int i, int j) const;
  Eigen::MatrixXd covariance() const;
  Eigen::MatrixXd cholesky_factor() const;

  /// out = L z.
  void color(std::span<const cdouble> z, std::span<cdouble> out) const;
  /// x <- L^{-1} x.
  void whiten(std::span<cdouble> x) const;
  /// x <- L^{-T} x.
  void whiten_adjoint(std::span<cdouble> x) const;
  /// x <- C^{-1} x.
  void apply_inverse(std::span<cdouble> x) const;

  CVector whitened(const CVector& x) const;
  /// A draw of w ~ CN(0, C).
  CVector sample(Rng& rng) const;

 private:
  double& l(int i, int j) { return band_[static_cast<std::size_t>(i) * (bandwidth() + 1) + (i - j)]; }
  double l(int i, int j) const { return band_[static_cast<std::size_t>(i) * (bandwidth() + 1) + (i - j)]; }

  std::vector<double> lags_;
  int size_;
  std::vector<double> band_;
};

struct Snapshot {
  CVector r;
  std::vector<Target> truth;
  std::vector<Echo> echoes;
  std::uint64_t seed = 0;

  bool null_hypothesis() const { return echoes.empty(); }
};

struct SynthesisOptions {
  bool add_noise = true;
};

/// Noise is drawn first from `rng`, so the same seed gives the same noise
/// regardless of the echo list.
CVector synthesize(std::span<const Echo> echoes, const waveform::ProbeSignal& probe,
                   const waveform::ProcessingWindow& window, const NoiseModel& noise,
                   double amplitude_scale, Rng& rng, SynthesisOptions options = {});

/// Draws amplitudes for `targets` and synthesizes the snapshot.
Snapshot synthesize_scene(std::span<const Target> targets, const waveform::ProbeSignal& probe,
                          const waveform::ProcessingWindow& window, const NoiseModel& noise,
                          const RadioParams& params, const PhysicalConstants& pc,
                          std::uint64_t seed, SynthesisOptions options = {});

struct SceneSpec {
  double range_min_m = 5.0;
  double range_max_m = 40.0;
  double rcs_min_m2 = 0.05;
  double rcs_max_m2 = 0.2;
  double min_spacing_m = 0.4;
  double velocity_max_mps = 0.0;
};

/// `count` targets uniform in range and RCS with pairwise range separation
/// of at least min_spacing_m from each other and from `occupied`. Throws
/// std::invalid_argument when the spacing cannot fit.
std::vector<Target> place_random_scene(int count, const SceneSpec& spec, Rng& rng,
                                       std::span<const Target> occupied = {});

/// "re,im" per sample, preceded by "# key: value" metadata lines.
void write_snapshot_csv(std::ostream& os, const Snapshot& snap, const PhysicalConstants& pc);
/// Reads the samples written above; truth lines are parsed back when present.
Snapshot read_snapshot_csv(std::istream& is, const PhysicalConstants& pc);

}  // namespace oppradar::scene
