// SPDX-License-Identifier: Apache-2.0
//
// Control-PHY probing waveform: Golay pairs, the chip stream of one packet,
// the transmit/receive pulse pair and the sampled echo signatures.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "oppradar/types.hpp"

namespace oppradar::waveform {

inline constexpr int kGolayLength = 128;
inline constexpr int kSpreadingLength = 32;
inline constexpr int kPreambleChips = 7552;
inline constexpr int kMinChips = 23168;
inline constexpr int kMaxChips = 539520;

using Chips = std::vector<std::int8_t>;

struct GolayPair {
  Chips a;
  Chips b;
};

/// 802.11ad Ga/Gb pair built from the standard's delay/weight recursion.
/// Supported lengths: 32, 64, 128. Throws std::invalid_argument otherwise.
GolayPair golay_pair(int length);

/// Aperiodic autocorrelation for lags 0..n-1, exact integers.
std::vector<long> aperiodic_autocorrelation(std::span<const std::int8_t> seq);

/// STF (48 Gb, -Gb, -Ga) followed by CEF (Gu512, Gv512, Gv128).
Chips control_preamble();

/// +-1 chip stream b(k) of one control-PHY packet.
class SymbolSequence {
 public:
  /// Preamble plus a pseudo-random body: i.i.d. bits, differentially
  /// encoded and spread by Ga32. Throws std::out_of_range for K outside
  /// [kMinChips, kMaxChips].
  static SymbolSequence build(int chip_count, std::uint64_t seed);

  /// Arbitrary chip stream; used for unit tests and custom probes.
  static SymbolSequence from_chips(Chips chips);

  std::span<const std::int8_t> chips() const { return chips_; }
  int size() const { return static_cast<int>(chips_.size()); }
  int preamble_length() const { return preamble_length_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Chips chips_;
  int preamble_length_ = 0;
  std::uint64_t seed_ = 0;
};

/// Truncated raised-cosine pulse with support [0, span_symbols * T],
/// scaled to unit energy.
class PulseShape {
 public:
  PulseShape(double symbol_period, double roll_off = 0.3, int span_symbols = 2);

  double value(double t) const;
  double derivative(double t) const;
  double support_end() const { return span_ * period_; }
  double symbol_period() const { return period_; }
  double roll_off() const { return roll_off_; }

 private:
  double raw(double x) const;
  double raw_derivative(double x) const;

  double period_;
  double roll_off_;
  int span_;
  double scale_ = 1.0;
};

/// chi = psi_tx * psi_rx tabulated at `oversampling` points per symbol with
/// value and slope, interpolated by cubic Hermite segments.
class CompositePulse {
 public:
  CompositePulse(const PulseShape& tx, const PulseShape& rx, int oversampling = 64);

  double value(double t) const;
  double derivative(double t) const;
  double support_end() const { return support_; }
  double step() const { return step_; }
  double symbol_period() const { return period_; }
  int oversampling() const { return oversampling_; }
  /// Integral of chi^2 over its support (the correlation normalizer).
  double energy() const { return energy_; }
  /// Integral of chi over its support (zero-frequency response).
  double integral() const;
  std::span<const double> table() const { return values_; }

 private:
  double period_;
  double support_;
  double step_;
  int oversampling_;
  std::vector<double> values_;
  std::vector<double> slopes_;
  double energy_ = 0.0;
};

/// Noiseless matched-filter output s(t) for unit transmit power:
/// s(t) = sum_k b(k) i^k chi(t - kT).
class ProbeSignal {
 public:
  ProbeSignal(std::span<const std::int8_t> chips, CompositePulse pulse);

  cdouble value(double t) const;
  cdouble derivative(double t) const;

  const CompositePulse& pulse() const { return pulse_; }
  double symbol_period() const { return period_; }
  int chip_count() const { return static_cast<int>(rotated_.size()); }
  /// Packet duration T_g, taken as K*T.
  double packet_duration() const { return period_ * chip_count(); }

 private:
  std::vector<cdouble> rotated_;
  CompositePulse pulse_;
  double period_;
};

/// Sampled interval [t_start, t_end] of the received signal.
struct ProcessingWindow {
  double t_start = 0.0;
  double t_end = 0.0;
  double t_sample = 0.0;

  int sample_count() const;
  double sample_time(int m) const { return t_start + m * t_sample; }
  double duration() const { return t_end - t_start; }

  /// Throws std::invalid_argument unless 0 <= t_start < t_end <= packet_duration
  /// and t_sample > 0.
  void validate(double packet_duration) const;

  /// Presets 'a'..'f' for a packet of `chip_count` chips.
  static ProcessingWindow preset(char name, int chip_count, double symbol_period,
                                 double sample_period);
};

/// Feasible delay/Doppler set S.
struct SearchSpace {
  double delay_min = 0.0;
  double delay_max = 0.0;
  double doppler_max = 0.0;

  bool contains(double delay, double doppler) const;
  static SearchSpace from_ranges(double range_min_m, double range_max_m,
                                 double velocity_max_mps, const PhysicalConstants& pc);
};

struct Signature {
  CVector samples;
  double delay = 0.0;
  double doppler = 0.0;
};

/// x = d_nu (.) s_tau for a point in S. Throws std::out_of_range otherwise.
Signature signature(const ProbeSignal& probe, const ProcessingWindow& window,
                    double delay, double doppler, const SearchSpace& space);

/// Unchecked fill of a signature into `out` (length = window sample count).
void sample_signature(const ProbeSignal& probe, const ProcessingWindow& window,
                      double delay, double doppler, std::span<cdouble> out);

/// d x / d tau from the analytic slope of the tabulated pulse.
void sample_signature_delay_derivative(const ProbeSignal& probe,
                                       const ProcessingWindow& window, double delay,
                                       double doppler, std::span<cdouble> out);

void write_chips_csv(std::ostream& os, std::span<const std::int8_t> chips);
void write_pulse_csv(std::ostream& os, const CompositePulse& pulse);

}  // namespace oppradar::waveform
