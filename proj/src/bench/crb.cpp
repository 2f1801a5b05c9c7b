// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "oppradar/bench.hpp"

namespace oppradar::bench {

CVector signature_delay_derivative(const detect::DetectorContext& ctx, double delay, double doppler,
                                   double step) {
  const double h = step > 0.0 ? step : ctx.probe().symbol_period() / 1024.0;
  const int m = ctx.samples();
  CVector plus(m), minus(m);
  waveform::sample_signature(ctx.probe(), ctx.window(), delay + h, doppler, as_span(plus));
  waveform::sample_signature(ctx.probe(), ctx.window(), delay - h, doppler, as_span(minus));
  return (plus - minus) * (ctx.amplitude_scale() / (2.0 * h));
}

Crb crb(const detect::DetectorContext& ctx, const PhysicalConstants& pc, double delay,
        double doppler, cdouble amplitude) {
  const CVector x = ctx.whitened_signature(delay, doppler);
  const CVector d = ctx.whiten(signature_delay_derivative(ctx, delay, doppler));
  CMatrix j(x.size(), 3);
  j.col(0) = amplitude * d;
  j.col(1) = x;
  j.col(2) = cdouble(0.0, 1.0) * x;
  const Eigen::Matrix3d fim = 2.0 * (j.adjoint() * j).real();

  Crb out;
  Eigen::LDLT<Eigen::Matrix3d> ldlt(fim);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14) return out;
  const Eigen::Matrix3d inv = ldlt.solve(Eigen::Matrix3d::Identity());
  out.delay_var = inv(0, 0);
  const double half_c = 0.5 * pc.speed_of_light;
  out.range_var = half_c * half_c * out.delay_var;
  const double mag = std::abs(amplitude);
  if (mag > 0.0) {
    const Eigen::Vector3d g(0.0, amplitude.real() / mag, amplitude.imag() / mag);
    out.amplitude_var = g.dot(inv * g);
  } else {
    out.amplitude_var = inv(1, 1) + inv(2, 2);
  }
  out.valid = out.delay_var > 0.0;
  return out;
}

}  // namespace oppradar::bench
