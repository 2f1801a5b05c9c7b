// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "oppradar/waveform.hpp"

namespace oppradar::waveform {

namespace {

constexpr std::array<cdouble, 4> kQuarterTurns{cdouble{1, 0}, cdouble{0, 1}, cdouble{-1, 0},
                                                cdouble{0, -1}};

}  // namespace

ProbeSignal::ProbeSignal(std::span<const std::int8_t> chips, CompositePulse pulse)
    : pulse_(std::move(pulse)), period_(pulse_.symbol_period()) {
  rotated_.resize(chips.size());
  // pi/2-BPSK: chip k is rotated by i^k.
  for (std::size_t k = 0; k < chips.size(); ++k) rotated_[k] = double(chips[k]) * kQuarterTurns[k % 4];
}

cdouble ProbeSignal::value(double t) const {
  const double span = pulse_.support_end();
  if (t <= 0.0 || t >= period_ * chip_count() + span) return {};
  const long k_lo = std::max(0L, static_cast<long>(std::ceil((t - span) / period_)));
  const long k_hi = std::min(static_cast<long>(rotated_.size()) - 1,
                             static_cast<long>(std::floor(t / period_)));
  cdouble acc{};
  for (long k = k_lo; k <= k_hi; ++k) acc += rotated_[k] * pulse_.value(t - k * period_);
  return acc;
}

cdouble ProbeSignal::derivative(double t) const {
  const double span = pulse_.support_end();
  if (t <= 0.0 || t >= period_ * chip_count() + span) return {};
  const long k_lo = std::max(0L, static_cast<long>(std::ceil((t - span) / period_)));
  const long k_hi = std::min(static_cast<long>(rotated_.size()) - 1,
                             static_cast<long>(std::floor(t / period_)));
  cdouble acc{};
  for (long k = k_lo; k <= k_hi; ++k) acc += rotated_[k] * pulse_.derivative(t - k * period_);
  return acc;
}

int ProcessingWindow::sample_count() const {
  // Guard against (t_end - t_start)/t_sample landing just below an integer.
  return static_cast<int>(std::floor(duration() / t_sample + 1e-9)) + 1;
}

void ProcessingWindow::validate(double packet_duration) const {
  if (!(t_sample > 0.0)) throw std::invalid_argument("ProcessingWindow: sampling interval must be positive");
  if (!(t_start >= 0.0 && t_start < t_end)) {
    throw std::invalid_argument("ProcessingWindow: need 0 <= t_start < t_end");
  }
  if (t_end > packet_duration * (1.0 + 1e-12)) {
    throw std::invalid_argument("ProcessingWindow: window ends after the packet");
  }
}

ProcessingWindow ProcessingWindow::preset(char name, int chip_count, double symbol_period,
                                          double sample_period) {
  const double T = symbol_period;
  const double Kg = kGolayLength;
  ProcessingWindow w;
  w.t_sample = sample_period;
  switch (name) {
    case 'a':
      w.t_start = 0.0;
      w.t_end = chip_count * T;
      break;
    case 'b':
      w.t_start = 0.0;
      w.t_end = kPreambleChips * T;
      break;
    case 'c':
      w.t_start = kPreambleChips * T;
      w.t_end = chip_count * T;
      break;
    case 'd':
      w.t_start = 15744 * T;
      w.t_end = 16256 * T;
      break;
    case 'e':
      w.t_start = 8 * Kg * T;
      w.t_end = 12 * Kg * T;
      break;
    case 'f':
      w.t_start = 51 * Kg * T;
      w.t_end = 55 * Kg * T;
      break;
    default:
      throw std::invalid_argument(std::string("ProcessingWindow: unknown preset '") + name + "'");
  }
  w.validate(chip_count * T);
  return w;
}

bool SearchSpace::contains(double delay, double doppler) const {
  // Relative slack absorbs rounding in range <-> delay conversions.
  const double eps = 1e-12 * std::max(std::abs(delay_max), 1e-300);
  return delay >= delay_min - eps && delay <= delay_max + eps &&
         std::abs(doppler) <= doppler_max * (1.0 + 1e-12) + 1e-300;
}

SearchSpace SearchSpace::from_ranges(double range_min_m, double range_max_m,
                                     double velocity_max_mps, const PhysicalConstants& pc) {
  if (!(range_min_m >= 0.0 && range_max_m > range_min_m && velocity_max_mps >= 0.0)) {
    throw std::invalid_argument("SearchSpace: need 0 <= r_min < r_max and v_max >= 0");
  }
  return {pc.delay_from_range(range_min_m), pc.delay_from_range(range_max_m),
          pc.doppler_from_velocity(velocity_max_mps)};
}

void sample_signature(const ProbeSignal& probe, const ProcessingWindow& window, double delay,
                      double doppler, std::span<cdouble> out) {
  const int m_count = window.sample_count();
  if (static_cast<int>(out.size()) != m_count) throw std::invalid_argument("sample_signature: bad output length");
  for (int m = 0; m < m_count; ++m) {
    const double t = window.sample_time(m);
    cdouble v = probe.value(t - delay);
    if (doppler != 0.0) v *= std::polar(1.0, 2.0 * std::numbers::pi * doppler * t);
    out[m] = v;
  }
}

void sample_signature_delay_derivative(const ProbeSignal& probe, const ProcessingWindow& window,
                                       double delay, double doppler, std::span<cdouble> out) {
  const int m_count = window.sample_count();
  if (static_cast<int>(out.size()) != m_count) {
    throw std::invalid_argument("sample_signature_delay_derivative: bad output length");
  }
  for (int m = 0; m < m_count; ++m) {
    const double t = window.sample_time(m);
    cdouble v = -probe.derivative(t - delay);
    if (doppler != 0.0) v *= std::polar(1.0, 2.0 * std::numbers::pi * doppler * t);
    out[m] = v;
  }
}

Signature signature(const ProbeSignal& probe, const ProcessingWindow& window, double delay,
                    double doppler, const SearchSpace& space) {
  if (!space.contains(delay, doppler)) {
    throw std::out_of_range("signature: (delay, doppler) outside the search space");
  }
  Signature sig;
  sig.delay = delay;
  sig.doppler = doppler;
  sig.samples.resize(window.sample_count());
  sample_signature(probe, window, delay, doppler, {sig.samples.data(), static_cast<std::size_t>(sig.samples.size())});
  return sig;
}

void write_chips_csv(std::ostream& os, std::span<const std::int8_t> chips) {
  os << "index,value\n";
  for (std::size_t i = 0; i < chips.size(); ++i) os << i << ',' << int{chips[i]} << '\n';
}

void write_pulse_csv(std::ostream& os, const CompositePulse& pulse) {
  const auto prev = os.precision(17);
  os << "index,time_s,value\n";
  const auto table = pulse.table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    os << i << ',' << i * pulse.step() << ',' << table[i] << '\n';
  }
  os.precision(prev);
}

}  // namespace oppradar::waveform
