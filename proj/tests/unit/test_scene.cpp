// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "oppradar/quadrature.hpp"
#include "oppradar/scene.hpp"

using namespace oppradar;
using namespace oppradar::scene;

namespace {

constexpr double kT = 1.0 / 1.76e9;

struct Fixture {
  PhysicalConstants pc;
  RadioParams radio;
  waveform::PulseShape pulse{kT};
  waveform::SymbolSequence seq = waveform::SymbolSequence::build(waveform::kMinChips, 1);
  waveform::ProbeSignal probe{seq.chips(), waveform::CompositePulse(pulse, pulse)};
  waveform::ProcessingWindow window = waveform::ProcessingWindow::preset('f', seq.size(), kT, kT);
  NoiseModel noise = NoiseModel::build(window, radio, pulse);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

double autocorr_oracle(const waveform::PulseShape& p, double z) {
  const auto q = gauss_legendre(64, 0.0, 2.0 * kT - z);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * p.value(q.nodes[i]) * p.value(q.nodes[i] + z);
  return acc;
}

}  // namespace

TEST_CASE("path loss") {
  const PhysicalConstants pc;
  const double lambda = pc.speed_of_light / pc.carrier_hz;
  const double l5 = path_loss(pc.delay_from_range(5.0), pc);
  CHECK(l5 == doctest::Approx(std::pow(4 * std::numbers::pi, 3) * 625.0 / (lambda * lambda)));
  // About 107 dB at 5 m and 60 GHz.
  CHECK(linear_to_db(l5) == doctest::Approx(106.96).epsilon(1e-4));
  CHECK(path_loss(pc.delay_from_range(40.0), pc) / l5 == doctest::Approx(4096.0));
}

TEST_CASE("amplitude draws") {
  const PhysicalConstants pc;
  RadioParams p;
  const Target t{10.0, 0.0, 0.1};
  const double deterministic = std::sqrt(p.antenna_gain() * t.rcs_m2 / path_loss(t.delay(pc), pc));

  RadioParams flat = p;
  flat.shadowing = false;
  flat.fading = false;
  Rng rng(3);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(draw_amplitude(t, flat, pc, rng)) == doctest::Approx(deterministic));

  // Unit-power Rice fading: E[A_fast] = 1.
  RadioParams rice = p;
  rice.shadowing = false;
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += std::norm(draw_amplitude(t, rice, pc, rng));
  CHECK(acc / n / (deterministic * deterministic) == doctest::Approx(1.0).epsilon(0.01));

  // Log-normal shadowing mean, against the closed form.
  double acc2 = 0.0;
  for (int i = 0; i < n; ++i) acc2 += std::norm(draw_amplitude(t, p, pc, rng));
  CHECK(acc2 / n / expected_amplitude_power(t, p, pc) == doctest::Approx(1.0).epsilon(0.03));

  const double snr = mean_snr(1.0, p, pc);
  CHECK(snr == doctest::Approx(512.0 * p.transmit_power_w / (2.0 * pc.bandwidth() * p.noise_level())));
}

TEST_CASE("noise covariance") {
  const auto& f = fixture();
  CHECK(f.noise.size() == 513);
  CHECK(f.noise.bandwidth() == 1);
  CHECK(f.noise.entry(0, 0) == doctest::Approx(f.radio.noise_level()).epsilon(1e-9));
  CHECK(f.noise.entry(3, 4) == doctest::Approx(f.radio.noise_level() * autocorr_oracle(f.pulse, kT)).epsilon(1e-9));
  CHECK(f.noise.entry(5, 7) == 0.0);
  CHECK(pulse_autocorrelation(f.pulse, 0.37 * kT) == doctest::Approx(autocorr_oracle(f.pulse, 0.37 * kT)).epsilon(1e-9));

  const Eigen::MatrixXd l = f.noise.cholesky_factor();
  CHECK((l * l.transpose() - f.noise.covariance()).norm() < 1e-12 * f.noise.covariance().norm());

  Rng rng(17);
  CVector x(513);
  for (auto& v : x) v = complex_normal(rng);
  CVector y = x;
  f.noise.apply_inverse(as_span(y));
  const CVector back = f.noise.covariance().cast<cdouble>() * y;
  CHECK((back - x).norm() < 1e-9 * x.norm());

  // Monte Carlo: diagonals of the sample covariance.
  const int draws = 10000;
  double lag0 = 0.0, lag1 = 0.0, lag3 = 0.0;
  for (int d = 0; d < draws; ++d) {
    const CVector w = f.noise.sample(rng);
    lag0 += w.squaredNorm() / 513;
    cdouble a1, a3;
    for (int m = 0; m + 3 < 513; ++m) {
      a1 += w[m] * std::conj(w[m + 1]);
      a3 += w[m] * std::conj(w[m + 3]);
    }
    lag1 += a1.real() / 512;
    lag3 += a3.real() / 510;
  }
  CHECK(lag0 / draws == doctest::Approx(f.noise.entry(0, 0)).epsilon(0.05));
  CHECK(lag1 / draws == doctest::Approx(f.noise.entry(0, 1)).epsilon(0.05));
  CHECK(std::abs(lag3 / draws) < 0.05 * f.noise.entry(0, 0));
}

TEST_CASE("non positive definite covariance is rejected") {
  CHECK_THROWS_AS(NoiseModel({1.0, 0.9, 0.9}, 10), std::domain_error);
}

TEST_CASE("synthesis") {
  const auto& f = fixture();
  const Echo e{f.pc.delay_from_range(12.0), 0.0, {2e-5, -1e-5}};
  const double scale = f.radio.amplitude_scale(kT);
  Rng rng(1);
  const CVector clean = synthesize(std::span(&e, 1), f.probe, f.window, f.noise, scale, rng, {false});
  CVector x(513);
  waveform::sample_signature(f.probe, f.window, e.delay, e.doppler, as_span(x));
  CHECK((clean - e.amplitude * scale * x).norm() < 1e-15 * clean.norm() + 1e-30);

  Rng r1(9), r2(9), r3(9);
  const CVector w = synthesize({}, f.probe, f.window, f.noise, scale, r1);
  const CVector z = f.noise.sample(r2);
  CHECK((w - z).norm() == 0.0);
  const CVector both = synthesize(std::span(&e, 1), f.probe, f.window, f.noise, scale, r3);
  CHECK((both - w - clean).norm() < 1e-12 * both.norm());
}

TEST_CASE("random scenes respect spacing") {
  const PhysicalConstants pc;
  SceneSpec spec;
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Target occupied[] = {{20.0, 0.0, 0.1}};
    const auto ts = place_random_scene(8, spec, rng, occupied);
    REQUIRE(ts.size() == 8);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      CHECK(ts[i].range_m >= spec.range_min_m);
      CHECK(ts[i].range_m <= spec.range_max_m);
      CHECK(ts[i].rcs_m2 >= 0.05);
      CHECK(ts[i].rcs_m2 <= 0.2);
      CHECK(std::abs(ts[i].range_m - 20.0) >= 0.4);
      for (std::size_t j = 0; j < i; ++j) {
        CHECK(std::abs(ts[i].delay(pc) - ts[j].delay(pc)) >= 2 * 0.4 / pc.speed_of_light * (1 - 1e-12));
      }
    }
  }
  CHECK(place_random_scene(0, spec, rng).empty());
  SceneSpec tight = spec;
  tight.range_max_m = 6.0;
  CHECK_THROWS_AS(place_random_scene(8, tight, rng), std::invalid_argument);
}

TEST_CASE("snapshot csv round trip") {
  const auto& f = fixture();
  const std::vector<Target> ts{{7.5, 0.0, 0.1}, {18.25, 1.5, 0.05}};
  const auto snap = synthesize_scene(ts, f.probe, f.window, f.noise, f.radio, f.pc, 42);
  std::stringstream ss;
  write_snapshot_csv(ss, snap, f.pc);
  const auto back = read_snapshot_csv(ss, f.pc);
  CHECK(back.seed == 42);
  REQUIRE(back.r.size() == snap.r.size());
  CHECK((back.r - snap.r).norm() == 0.0);
  REQUIRE(back.echoes.size() == 2);
  REQUIRE(back.truth.size() == 2);
  CHECK(back.truth[1].range_m == doctest::Approx(18.25));
  CHECK(back.truth[1].velocity_mps == doctest::Approx(1.5));
  CHECK(back.echoes[0].amplitude == snap.echoes[0].amplitude);

  std::istringstream bad("re,im\n1,2\nx,3\n");
  CHECK_THROWS(read_snapshot_csv(bad, f.pc));
}
