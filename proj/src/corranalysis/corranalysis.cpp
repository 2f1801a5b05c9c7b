// SPDX-License-Identifier: Apache-2.0

#include "oppradar/corranalysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "oppradar/simd/kernels.hpp"

namespace oppradar::corranalysis {

using waveform::ProbeSignal;
using waveform::ProcessingWindow;

cdouble windowed_correlation(const ProbeSignal& probe, double delay, double reference_delay,
                             const ProcessingWindow& window, int oversampling) {
  if (oversampling < 1) throw std::invalid_argument("windowed_correlation: oversampling must be positive");
  const double h = probe.symbol_period() / oversampling;
  const long n_full = static_cast<long>(std::floor(window.duration() / h + 1e-9));
  const double tail = window.duration() - n_full * h;

  auto term = [&](double t) { return std::conj(probe.value(t - delay)) * probe.value(t - reference_delay); };

  cdouble acc = 0.5 * (term(window.t_start) + term(window.t_start + n_full * h));
  for (long n = 1; n < n_full; ++n) acc += term(window.t_start + n * h);
  acc *= h;
  if (tail > 1e-9 * h) acc += 0.5 * tail * (term(window.t_start + n_full * h) + term(window.t_end));
  return acc / probe.pulse().energy();
}

CorrelationEngine::CorrelationEngine(const ProbeSignal& probe, int oversampling)
    : step_(probe.symbol_period() / oversampling), normalization_(probe.pulse().energy()) {
  if (oversampling < 1) throw std::invalid_argument("CorrelationEngine: oversampling must be positive");
  const double end = probe.packet_duration() + probe.pulse().support_end();
  const long count = static_cast<long>(std::ceil(end / step_)) + 1;
  samples_.resize(count);
  for (long j = 0; j < count; ++j) samples_[j] = probe.value(j * step_);
}

bool CorrelationEngine::on_grid(double t) const {
  const double u = t / step_;
  return std::abs(u - std::round(u)) < 1e-9 * std::max(1.0, std::abs(u)) + 1e-9;
}

long CorrelationEngine::grid_index(double t) const {
  if (!on_grid(t)) throw std::invalid_argument("CorrelationEngine: time is not on the quadrature grid");
  return std::lround(t / step_);
}

cdouble CorrelationEngine::correlate_lags(long lag, long reference_lag, long first, long last) const {
  const long top = static_cast<long>(samples_.size()) - 1;
  const long lo = std::max({first, lag, reference_lag});
  const long hi = std::min({last, top + lag, top + reference_lag});
  if (hi < lo) return {};
  const auto len = static_cast<std::size_t>(hi - lo + 1);
  const cdouble* a = samples_.data() + (lo - lag);
  const cdouble* b = samples_.data() + (lo - reference_lag);
  cdouble acc = simd::cdot({a, len}, {b, len});
  if (lo == first) acc -= 0.5 * std::conj(a[0]) * b[0];
  if (hi == last) acc -= 0.5 * std::conj(a[len - 1]) * b[len - 1];
  return acc;
}

cdouble CorrelationEngine::correlate(double delay, double reference_delay,
                                     const ProcessingWindow& window) const {
  const long first = grid_index(window.t_start);
  const long last = grid_index(window.t_end);
  return correlate_lags(grid_index(delay), grid_index(reference_delay), first, last) * step_ /
         normalization_;
}

std::vector<double> CorrelationProfile::magnitudes() const {
  std::vector<double> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(),
                 [](const CorrelationPoint& p) { return std::abs(p.phi); });
  return out;
}

std::size_t CorrelationProfile::peak_index() const {
  const auto mags = magnitudes();
  return static_cast<std::size_t>(std::max_element(mags.begin(), mags.end()) - mags.begin());
}

namespace {

std::vector<double> delay_axis(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("correlation_profile: bad delay range");
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> axis(n + 1);
  for (long i = 0; i <= n; ++i) axis[i] = lo + i * step;
  return axis;
}

}  // namespace

CorrelationProfile correlation_profile(const ProbeSignal& probe, double reference_delay,
                                       const ProcessingWindow& window, double delay_lo,
                                       double delay_hi, double step, int oversampling) {
  const CorrelationEngine engine(probe, oversampling);
  const bool fast = engine.on_grid(reference_delay) && engine.on_grid(delay_lo) &&
                    engine.on_grid(step) && engine.on_grid(window.t_start) &&
                    engine.on_grid(window.t_end);
  if (fast) return correlation_profile(engine, reference_delay, window, delay_lo, delay_hi, step);

  CorrelationProfile profile;
  profile.reference_delay = reference_delay;
  profile.window = window;
  profile.normalization = probe.pulse().energy();
  for (double d : delay_axis(delay_lo, delay_hi, step)) {
    profile.samples.push_back({d, windowed_correlation(probe, d, reference_delay, window, oversampling)});
  }
  return profile;
}

CorrelationProfile correlation_profile(const CorrelationEngine& engine, double reference_delay,
                                       const ProcessingWindow& window, double delay_lo,
                                       double delay_hi, double step) {
  CorrelationProfile profile;
  profile.reference_delay = reference_delay;
  profile.window = window;
  profile.normalization = engine.normalization();
  for (double d : delay_axis(delay_lo, delay_hi, step)) {
    profile.samples.push_back({d, engine.correlate(d, reference_delay, window)});
  }
  return profile;
}

CorrelationMap correlation_map(const CorrelationEngine& engine, const ProcessingWindow& window,
                               std::span<const double> delays,
                               std::span<const double> reference_delays) {
  CorrelationMap map;
  map.delays.assign(delays.begin(), delays.end());
  map.reference_delays.assign(reference_delays.begin(), reference_delays.end());
  map.values.resize(static_cast<Eigen::Index>(reference_delays.size()),
                    static_cast<Eigen::Index>(delays.size()));
  for (std::size_t r = 0; r < reference_delays.size(); ++r) {
    for (std::size_t c = 0; c < delays.size(); ++c) {
      map.values(r, c) = std::abs(engine.correlate(delays[c], reference_delays[r], window));
    }
  }
  const double peak = map.values.size() > 0 ? map.values.maxCoeff() : 0.0;
  if (peak > 0.0) map.values /= peak;
  return map;
}

LobeBounds main_lobe(std::span<const double> m, std::size_t peak) {
  if (peak >= m.size()) throw std::out_of_range("main_lobe: peak index out of range");
  LobeBounds b{peak, peak};
  while (b.left > 0 && m[b.left - 1] <= m[b.left]) --b.left;
  while (b.right + 1 < m.size() && m[b.right + 1] <= m[b.right]) ++b.right;
  return b;
}

double sidelobe_ratio(std::span<const double> m, std::size_t peak) {
  const LobeBounds lobe = main_lobe(m, peak);
  double side = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i < lobe.left || i > lobe.right) side = std::max(side, m[i]);
  }
  return m[peak] > 0.0 ? side / m[peak] : 0.0;
}

std::vector<std::size_t> local_maxima(std::span<const double> m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < m.size(); ++i) {
    if (m[i] > m[i - 1] && m[i] > m[i + 1]) out.push_back(i);
  }
  return out;
}

double full_width_half_max(std::span<const double> axis, std::span<const double> m,
                           std::size_t peak) {
  if (axis.size() != m.size() || peak >= m.size()) throw std::invalid_argument("full_width_half_max: bad input");
  const double half = 0.5 * m[peak];
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double f = (m[inside] - half) / (m[inside] - m[outside]);
    return axis[inside] + f * (axis[outside] - axis[inside]);
  };
  std::size_t l = peak;
  while (l > 0 && m[l - 1] > half) --l;
  std::size_t r = peak;
  while (r + 1 < m.size() && m[r + 1] > half) ++r;
  if (l == 0 || r + 1 == m.size()) throw std::runtime_error("full_width_half_max: lobe not contained in axis");
  return crossing(r, r + 1) - crossing(l, l - 1);
}

DopplerResolution doppler_resolution(const ProcessingWindow& window, double delay,
                                     const PhysicalConstants& pc) {
  const double span = window.t_end - std::max(window.t_start, delay);
  if (!(span > 0.0)) throw std::invalid_argument("doppler_resolution: echo falls outside the window");
  DopplerResolution r;
  r.hz = 1.0 / span;
  r.mps = pc.velocity_from_doppler(r.hz);
  return r;
}

void write_profile_csv(std::ostream& os, const CorrelationProfile& profile,
                       const PhysicalConstants& pc) {
  const auto prev = os.precision(12);
  os << "range_m,abs_phi,re_phi,im_phi\n";
  for (const auto& p : profile.samples) {
    os << pc.range_from_delay(p.delay) << ',' << std::abs(p.phi) << ',' << p.phi.real() << ','
       << p.phi.imag() << '\n';
  }
  os.precision(prev);
}

void write_map_csv(std::ostream& os, const CorrelationMap& map, const PhysicalConstants& pc) {
  const auto prev = os.precision(8);
  os << "reference_range_m\\range_m";
  for (double d : map.delays) os << ',' << pc.range_from_delay(d);
  os << '\n';
  for (std::size_t r = 0; r < map.reference_delays.size(); ++r) {
    os << pc.range_from_delay(map.reference_delays[r]);
    for (std::size_t c = 0; c < map.delays.size(); ++c) os << ',' << map.values(r, c);
    os << '\n';
  }
  os.precision(prev);
}

}  // namespace oppradar::corranalysis
