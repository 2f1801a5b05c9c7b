// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "oppradar/quadrature.hpp"
#include "oppradar/waveform.hpp"

namespace oppradar::waveform {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPulseQuadrature = 64;

double sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - kPi * kPi * x * x / 6.0;
  return std::sin(kPi * x) / (kPi * x);
}

double sinc_derivative(double x) {
  if (std::abs(x) < 1e-6) return -kPi * kPi * x / 3.0;
  return (kPi * x * std::cos(kPi * x) - std::sin(kPi * x)) / (kPi * x * x);
}

}  // namespace

PulseShape::PulseShape(double symbol_period, double roll_off, int span_symbols)
    : period_(symbol_period), roll_off_(roll_off), span_(span_symbols) {
  if (!(symbol_period > 0.0)) throw std::invalid_argument("PulseShape: symbol period must be positive");
  if (roll_off < 0.0 || roll_off > 1.0) throw std::invalid_argument("PulseShape: roll-off outside [0, 1]");
  if (span_symbols < 1) throw std::invalid_argument("PulseShape: span must be at least one symbol");
  // The raised-cosine denominator vanishes at |x| = 1/(2 beta); the
  // truncation must stay inside that.
  if (roll_off > 0.0 && 0.5 * span_symbols >= 0.5 / roll_off) {
    throw std::invalid_argument("PulseShape: truncation reaches the raised-cosine pole");
  }
  const QuadratureRule q = gauss_legendre(kPulseQuadrature, 0.0, support_end());
  double energy = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double v = raw((q.nodes[i] - 0.5 * support_end()) / period_);
    energy += q.weights[i] * v * v;
  }
  scale_ = 1.0 / std::sqrt(energy);
}

// Raised-cosine impulse response in symbol units, centered at x = 0.
double PulseShape::raw(double x) const {
  const double bx = 2.0 * roll_off_ * x;
  return sinc(x) * std::cos(kPi * roll_off_ * x) / (1.0 - bx * bx);
}

double PulseShape::raw_derivative(double x) const {
  const double b = roll_off_;
  const double den = 1.0 - 4.0 * b * b * x * x;
  const double g = std::cos(kPi * b * x) / den;
  const double dg =
      (-kPi * b * std::sin(kPi * b * x) * den + std::cos(kPi * b * x) * 8.0 * b * b * x) /
      (den * den);
  return sinc_derivative(x) * g + sinc(x) * dg;
}

double PulseShape::value(double t) const {
  if (t <= 0.0 || t >= support_end()) return 0.0;
  return scale_ * raw((t - 0.5 * support_end()) / period_);
}

double PulseShape::derivative(double t) const {
  if (t <= 0.0 || t >= support_end()) return 0.0;
  return scale_ * raw_derivative((t - 0.5 * support_end()) / period_) / period_;
}

CompositePulse::CompositePulse(const PulseShape& tx, const PulseShape& rx, int oversampling)
    : period_(tx.symbol_period()),
      support_(tx.support_end() + rx.support_end()),
      step_(tx.symbol_period() / oversampling),
      oversampling_(oversampling) {
  if (oversampling < 1) throw std::invalid_argument("CompositePulse: oversampling must be positive");
  const int n = static_cast<int>(std::lround(support_ / step_));
  values_.resize(n + 1);
  slopes_.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double t = i * step_;
    // chi(t) = int psi_rx(z) psi_tx(t - z) dz; the integrand is smooth on
    // the overlap, so Gauss-Legendre is exact to rounding.
    const double lo = std::max(0.0, t - tx.support_end());
    const double hi = std::min(rx.support_end(), t);
    double v = 0.0, d = 0.0;
    if (hi > lo) {
      const QuadratureRule q = gauss_legendre(kPulseQuadrature, lo, hi);
      for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        const double z = q.nodes[k];
        v += q.weights[k] * rx.value(z) * tx.value(t - z);
        d += q.weights[k] * rx.value(z) * tx.derivative(t - z);
      }
    }
    values_[i] = v;
    slopes_[i] = d;
  }
  // Energy of chi over the support, integrating chi^2 per Hermite segment.
  const QuadratureRule seg = gauss_legendre(8, 0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < seg.nodes.size(); ++k) {
      const double v = value((i + seg.nodes[k]) * step_);
      energy_ += seg.weights[k] * step_ * v * v;
    }
  }
}

double CompositePulse::value(double t) const {
  if (t <= 0.0 || t >= support_) return 0.0;
  const double u = t / step_;
  const auto i = static_cast<std::size_t>(u);
  if (i + 1 >= values_.size()) return values_.back();
  const double s = u - static_cast<double>(i);
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * values_[i] + h10 * step_ * slopes_[i] + h01 * values_[i + 1] +
         h11 * step_ * slopes_[i + 1];
}

double CompositePulse::derivative(double t) const {
  if (t <= 0.0 || t >= support_) return 0.0;
  const double u = t / step_;
  const auto i = static_cast<std::size_t>(u);
  if (i + 1 >= values_.size()) return slopes_.back();
  const double s = u - static_cast<double>(i);
  const double s2 = s * s;
  const double d00 = (6 * s2 - 6 * s) / step_;
  const double d10 = 3 * s2 - 4 * s + 1;
  const double d01 = (-6 * s2 + 6 * s) / step_;
  const double d11 = 3 * s2 - 2 * s;
  return d00 * values_[i] + d10 * slopes_[i] + d01 * values_[i + 1] + d11 * slopes_[i + 1];
}

double CompositePulse::integral() const {
  // Exact integral of the piecewise cubic Hermite interpolant.
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
    acc += 0.5 * step_ * (values_[i] + values_[i + 1]) +
           step_ * step_ * (slopes_[i] - slopes_[i + 1]) / 12.0;
  }
  return acc;
}

}  // namespace oppradar::waveform
