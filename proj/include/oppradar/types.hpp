// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <numbers>
#include <span>

#include <Eigen/Dense>

namespace oppradar {

using cdouble = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// Physical constants of the 802.11ad link. Every module takes timing and
/// carrier values from here so a config file can override them in one place.
struct PhysicalConstants {
  double speed_of_light = 299792458.0;  // m/s
  double carrier_hz = 60.0e9;
  double symbol_rate_hz = 1.76e9;

  double symbol_period() const { return 1.0 / symbol_rate_hz; }
  /// One-sided effective bandwidth W = 1/(2T).
  double bandwidth() const { return 0.5 * symbol_rate_hz; }
  double wavelength() const { return speed_of_light / carrier_hz; }

  double delay_from_range(double range_m) const { return 2.0 * range_m / speed_of_light; }
  double range_from_delay(double delay_s) const { return 0.5 * speed_of_light * delay_s; }
  double doppler_from_velocity(double v_mps) const {
    return 2.0 * v_mps * carrier_hz / speed_of_light;
  }
  double velocity_from_doppler(double nu_hz) const {
    return nu_hz * speed_of_light / (2.0 * carrier_hz);
  }
};

inline std::span<cdouble> as_span(CVector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<const cdouble> as_span(const CVector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace oppradar
