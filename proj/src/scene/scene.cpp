// SPDX-License-Identifier: Apache-2.0

#include "oppradar/scene.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "oppradar/quadrature.hpp"

namespace oppradar::scene {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

double RadioParams::amplitude_scale(double symbol_period) const {
  return std::sqrt(transmit_power_w * symbol_period);
}

void RadioParams::validate() const {
  if (!(transmit_power_w > 0.0)) throw std::invalid_argument("RadioParams: transmit power must be positive");
  if (!(shadowing_db >= 0.0)) throw std::invalid_argument("RadioParams: shadowing deviation must be non-negative");
  if (!(processing_gain > 0.0)) throw std::invalid_argument("RadioParams: processing gain must be positive");
}

double path_loss(double delay, const PhysicalConstants& pc) {
  const double r = pc.range_from_delay(delay);
  const double lambda = pc.wavelength();
  return std::pow(4.0 * kPi, 3) * std::pow(r, 4) / (lambda * lambda);
}

cdouble draw_amplitude(const Target& target, const RadioParams& params,
                       const PhysicalConstants& pc, Rng& rng) {
  double slow = 1.0;
  if (params.shadowing) {
    std::normal_distribution<double> shadow_db(0.0, params.shadowing_db);
    slow = db_to_linear(shadow_db(rng));
  }
  double fast = 1.0;
  if (params.fading) {
    // Unit-power Rice: specular part K/(K+1), diffuse part 1/(K+1).
    const double k = db_to_linear(params.rice_k_db);
    const cdouble h = std::sqrt(k / (k + 1.0)) + std::sqrt(1.0 / (k + 1.0)) * complex_normal(rng);
    fast = std::norm(h);
  }
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  const double phi = phase(rng);
  const double mag = std::sqrt(params.antenna_gain() * slow * fast * target.rcs_m2 /
                               path_loss(target.delay(pc), pc));
  return std::polar(mag, -phi);
}

double expected_amplitude_power(const Target& target, const RadioParams& params,
                                const PhysicalConstants& pc) {
  double slow = 1.0;
  if (params.shadowing) {
    const double s = params.shadowing_db * std::numbers::ln10 / 10.0;
    slow = std::exp(0.5 * s * s);
  }
  return params.antenna_gain() * slow * target.rcs_m2 / path_loss(target.delay(pc), pc);
}

double mean_snr(double amplitude_power, const RadioParams& params, const PhysicalConstants& pc) {
  return params.processing_gain * params.transmit_power_w * amplitude_power /
         (2.0 * pc.bandwidth() * params.noise_level());
}

double pulse_autocorrelation(const waveform::PulseShape& pulse, double lag) {
  const double z = std::abs(lag);
  const double end = pulse.support_end();
  if (z >= end) return 0.0;
  const QuadratureRule q = gauss_legendre(64, z, end);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    acc += q.weights[i] * pulse.value(q.nodes[i]) * pulse.value(q.nodes[i] - z);
  }
  return acc;
}

NoiseModel::NoiseModel(std::vector<double> autocorrelation, int size)
    : lags_(std::move(autocorrelation)), size_(size) {
  if (lags_.empty() || size < 1) throw std::invalid_argument("NoiseModel: empty covariance");
  if (static_cast<int>(lags_.size()) > size) lags_.resize(size);
  while (lags_.size() > 1 && lags_.back() == 0.0) lags_.pop_back();
  const int b = bandwidth();
  band_.assign(static_cast<std::size_t>(size) * (b + 1), 0.0);
  for (int i = 0; i < size; ++i) {
    const int lo = std::max(0, i - b);
    for (int j = lo; j <= i; ++j) {
      double s = lags_[i - j];
      for (int k = std::max(lo, j - b); k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0)) throw std::domain_error("NoiseModel: covariance is not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
}

NoiseModel NoiseModel::build(const waveform::ProcessingWindow& window, const RadioParams& params,
                             const waveform::PulseShape& rx) {
  const int m = window.sample_count();
  std::vector<double> lags;
  for (int k = 0; k < m; ++k) {
    const double z = k * window.t_sample;
    if (z >= rx.support_end()) break;
    lags.push_back(params.noise_level() * pulse_autocorrelation(rx, z));
  }
  return NoiseModel(std::move(lags), m);
}

double NoiseModel::entry(int i, int j) const {
  const int d = std::abs(i - j);
  return d <= bandwidth() ? lags_[d] : 0.0;
}

Eigen::MatrixXd NoiseModel::covariance() const {
  Eigen::MatrixXd c(size_, size_);
  for (int i = 0; i < size_; ++i)
    for (int j = 0; j < size_; ++j) c(i, j) = entry(i, j);
  return c;
}

Eigen::MatrixXd NoiseModel::cholesky_factor() const {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(size_, size_);
  for (int i = 0; i < size_; ++i)
    for (int j = std::max(0, i - bandwidth()); j <= i; ++j) f(i, j) = l(i, j);
  return f;
}

void NoiseModel::color(std::span<const cdouble> z, std::span<cdouble> out) const {
  if (static_cast<int>(z.size()) != size_ || out.size() != z.size()) {
    throw std::invalid_argument("NoiseModel::color: length mismatch");
  }
  for (int i = 0; i < size_; ++i) {
    cdouble acc{};
    for (int j = std::max(0, i - bandwidth()); j <= i; ++j) acc += l(i, j) * z[j];
    out[i] = acc;
  }
}

void NoiseModel::whiten(std::span<cdouble> x) const {
  if (static_cast<int>(x.size()) != size_) throw std::invalid_argument("NoiseModel::whiten: length mismatch");
  for (int i = 0; i < size_; ++i) {
    cdouble acc = x[i];
    for (int j = std::max(0, i - bandwidth()); j < i; ++j) acc -= l(i, j) * x[j];
    x[i] = acc / l(i, i);
  }
}

void NoiseModel::whiten_adjoint(std::span<cdouble> x) const {
  if (static_cast<int>(x.size()) != size_) throw std::invalid_argument("NoiseModel::whiten_adjoint: length mismatch");
  for (int i = size_ - 1; i >= 0; --i) {
    cdouble acc = x[i];
    for (int j = i + 1; j <= std::min(size_ - 1, i + bandwidth()); ++j) acc -= l(j, i) * x[j];
    x[i] = acc / l(i, i);
  }
}

void NoiseModel::apply_inverse(std::span<cdouble> x) const {
  whiten(x);
  whiten_adjoint(x);
}

CVector NoiseModel::whitened(const CVector& x) const {
  CVector y = x;
  whiten(as_span(y));
  return y;
}

CVector NoiseModel::sample(Rng& rng) const {
  CVector z(size_);
  for (int i = 0; i < size_; ++i) z[i] = complex_normal(rng);
  CVector w(size_);
  color(as_span(z), as_span(w));
  return w;
}

CVector synthesize(std::span<const Echo> echoes, const waveform::ProbeSignal& probe,
                   const waveform::ProcessingWindow& window, const NoiseModel& noise,
                   double amplitude_scale, Rng& rng, SynthesisOptions options) {
  const int m = window.sample_count();
  if (noise.size() != m) throw std::invalid_argument("synthesize: noise model size differs from the window");
  CVector r = options.add_noise ? noise.sample(rng) : CVector::Zero(m);
  CVector x(m);
  for (const Echo& e : echoes) {
    waveform::sample_signature(probe, window, e.delay, e.doppler, as_span(x));
    r += (e.amplitude * amplitude_scale) * x;
  }
  return r;
}

Snapshot synthesize_scene(std::span<const Target> targets, const waveform::ProbeSignal& probe,
                          const waveform::ProcessingWindow& window, const NoiseModel& noise,
                          const RadioParams& params, const PhysicalConstants& pc,
                          std::uint64_t seed, SynthesisOptions options) {
  Snapshot snap;
  snap.seed = seed;
  snap.truth.assign(targets.begin(), targets.end());
  Rng rng(seed);
  Rng amplitude_rng(splitmix64(seed));
  for (const Target& t : targets) {
    snap.echoes.push_back({t.delay(pc), t.doppler(pc), draw_amplitude(t, params, pc, amplitude_rng)});
  }
  snap.r = synthesize(snap.echoes, probe, window, noise, params.amplitude_scale(pc.symbol_period()),
                      rng, options);
  return snap;
}

std::vector<Target> place_random_scene(int count, const SceneSpec& spec, Rng& rng,
                                       std::span<const Target> occupied) {
  if (count < 0) throw std::invalid_argument("place_random_scene: negative target count");
  const double span = spec.range_max_m - spec.range_min_m;
  if (!(span > 0.0) || spec.rcs_min_m2 <= 0.0 || spec.rcs_max_m2 < spec.rcs_min_m2) {
    throw std::invalid_argument("place_random_scene: bad range or RCS interval");
  }
  // Random sequential placement jams near span/(0.75 * spacing) points;
  // stay well below that so rejection sampling terminates quickly.
  const double capacity = span / std::max(spec.min_spacing_m, 1e-12);
  if (count + static_cast<double>(occupied.size()) > 0.5 * capacity) {
    throw std::invalid_argument("place_random_scene: spacing too large for the requested count");
  }
  std::uniform_real_distribution<double> range(spec.range_min_m, spec.range_max_m);
  std::uniform_real_distribution<double> rcs(spec.rcs_min_m2, spec.rcs_max_m2);
  std::uniform_real_distribution<double> vel(-spec.velocity_max_mps, spec.velocity_max_mps);

  std::vector<Target> out;
  auto clear_of = [&](double r) {
    auto far = [&](const Target& t) { return std::abs(t.range_m - r) >= spec.min_spacing_m; };
    return std::all_of(out.begin(), out.end(), far) &&
           std::all_of(occupied.begin(), occupied.end(), far);
  };
  for (int p = 0; p < count; ++p) {
    double r = 0.0;
    int attempts = 0;
    do {
      if (++attempts > 100000) throw std::runtime_error("place_random_scene: placement did not converge");
      r = range(rng);
    } while (!clear_of(r));
    Target t;
    t.range_m = r;
    t.rcs_m2 = rcs(rng);
    t.velocity_mps = spec.velocity_max_mps > 0.0 ? vel(rng) : 0.0;
    out.push_back(t);
  }
  return out;
}

void write_snapshot_csv(std::ostream& os, const Snapshot& snap, const PhysicalConstants& pc) {
  const auto prev = os.precision(17);
  os << "# seed: " << snap.seed << '\n';
  os << "# samples: " << snap.r.size() << '\n';
  for (std::size_t p = 0; p < snap.echoes.size(); ++p) {
    const Echo& e = snap.echoes[p];
    os << "# echo: range_m=" << pc.range_from_delay(e.delay)
       << " velocity_mps=" << pc.velocity_from_doppler(e.doppler)
       << " re_alpha=" << e.amplitude.real() << " im_alpha=" << e.amplitude.imag();
    if (p < snap.truth.size()) os << " rcs_m2=" << snap.truth[p].rcs_m2;
    os << '\n';
  }
  os << "re,im\n";
  for (Eigen::Index m = 0; m < snap.r.size(); ++m) os << snap.r[m].real() << ',' << snap.r[m].imag() << '\n';
  os.precision(prev);
}

Snapshot read_snapshot_csv(std::istream& is, const PhysicalConstants& pc) {
  Snapshot snap;
  std::vector<cdouble> samples;
  std::string line;
  bool header = false;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key;
      meta >> key;
      if (key == "seed:") {
        meta >> snap.seed;
      } else if (key == "echo:") {
        Target t;
        Echo e;
        double re = 0.0, im = 0.0;
        std::string field;
        while (meta >> field) {
          const auto eq = field.find('=');
          if (eq == std::string::npos) continue;
          const std::string k = field.substr(0, eq);
          const double v = std::stod(field.substr(eq + 1));
          if (k == "range_m") t.range_m = v;
          else if (k == "velocity_mps") t.velocity_mps = v;
          else if (k == "re_alpha") re = v;
          else if (k == "im_alpha") im = v;
          else if (k == "rcs_m2") t.rcs_m2 = v;
        }
        e.delay = t.delay(pc);
        e.doppler = t.doppler(pc);
        e.amplitude = {re, im};
        snap.truth.push_back(t);
        snap.echoes.push_back(e);
      }
      continue;
    }
    if (!header) {
      if (line != "re,im") throw std::runtime_error("snapshot csv: expected header 're,im' at line " + std::to_string(line_no));
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("snapshot csv: malformed sample at line " + std::to_string(line_no));
    try {
      samples.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw std::runtime_error("snapshot csv: malformed sample at line " + std::to_string(line_no));
    }
  }
  if (samples.empty()) throw std::runtime_error("snapshot csv: no samples");
  snap.r = Eigen::Map<const CVector>(samples.data(), static_cast<Eigen::Index>(samples.size()));
  return snap;
}

}  // namespace oppradar::scene
