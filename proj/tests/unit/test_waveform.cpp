// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "oppradar/quadrature.hpp"
#include "oppradar/waveform.hpp"

using namespace oppradar;
using namespace oppradar::waveform;

namespace {

constexpr double kT = 1.0 / 1.76e9;

// Direct O(n^2) aperiodic autocorrelation, independent of the library.
long autocorr_at(const Chips& s, int lag) {
  long acc = 0;
  for (std::size_t i = 0; i + lag < s.size(); ++i) acc += s[i] * s[i + lag];
  return acc;
}

// Composite-Gauss integral of f over [lo, hi] split into `pieces` panels.
template <class F>
double integrate(F f, double lo, double hi, int pieces = 256) {
  double acc = 0.0;
  const double h = (hi - lo) / pieces;
  for (int p = 0; p < pieces; ++p) {
    const auto q = gauss_legendre(8, lo + p * h, lo + (p + 1) * h);
    for (std::size_t i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * f(q.nodes[i]);
  }
  return acc;
}

}  // namespace

TEST_CASE("golay pairs are complementary at every lag") {
  for (int len : {32, 64, 128}) {
    const auto g = golay_pair(len);
    REQUIRE(g.a.size() == static_cast<std::size_t>(len));
    REQUIRE(g.b.size() == static_cast<std::size_t>(len));
    for (int lag = 0; lag < len; ++lag) {
      const long sum = autocorr_at(g.a, lag) + autocorr_at(g.b, lag);
      CHECK(sum == (lag == 0 ? 2L * len : 0L));
    }
    const auto ra = aperiodic_autocorrelation(g.a);
    for (int lag = 0; lag < len; ++lag) CHECK(ra[lag] == autocorr_at(g.a, lag));
  }
  CHECK_THROWS_AS(golay_pair(100), std::invalid_argument);
}

TEST_CASE("preamble starts with 48 repetitions of Gb and has 7552 chips") {
  const auto pre = control_preamble();
  REQUIRE(pre.size() == static_cast<std::size_t>(kPreambleChips));
  const auto g = golay_pair(128);
  for (int r = 0; r < 48; ++r) {
    for (int i = 0; i < 128; ++i) REQUIRE(pre[r * 128 + i] == g.b[i]);
  }
  // The 49th block is the sign-inverted terminator.
  for (int i = 0; i < 128; ++i) CHECK(pre[48 * 128 + i] == -g.b[i]);
}

TEST_CASE("symbol sequence build") {
  const auto s = SymbolSequence::build(kMinChips, 11);
  REQUIRE(s.size() == kMinChips);
  CHECK(s.preamble_length() == kPreambleChips);
  const auto pre = control_preamble();
  for (int i = 0; i < kPreambleChips; ++i) REQUIRE(s.chips()[i] == pre[i]);

  double mean = 0.0;
  for (int i = kPreambleChips; i < s.size(); ++i) mean += s.chips()[i];
  mean /= s.size() - kPreambleChips;
  CHECK(std::abs(mean) < 0.05);

  const auto again = SymbolSequence::build(kMinChips, 11);
  CHECK(std::equal(s.chips().begin(), s.chips().end(), again.chips().begin()));
  const auto other = SymbolSequence::build(kMinChips, 12);
  CHECK_FALSE(std::equal(s.chips().begin(), s.chips().end(), other.chips().begin()));

  CHECK_THROWS_AS(SymbolSequence::build(kMinChips - 1, 1), std::out_of_range);
  CHECK_THROWS_AS(SymbolSequence::build(kMaxChips + 1, 1), std::out_of_range);
  CHECK_THROWS_AS(SymbolSequence::from_chips({1, 0, -1}), std::invalid_argument);
}

TEST_CASE("body chips are Ga32-spread differential symbols") {
  const auto s = SymbolSequence::build(kMinChips, 3);
  const auto ga = golay_pair(32).a;
  for (int start = kPreambleChips; start + 32 <= s.size(); start += 32) {
    const int sign = s.chips()[start] * ga[0];
    for (int i = 0; i < 32; ++i) REQUIRE(s.chips()[start + i] == sign * ga[i]);
  }
}

TEST_CASE("pulse shape has unit energy and support [0, 2T]") {
  const PulseShape p(kT, 0.3, 2);
  const double e = integrate([&](double t) { return p.value(t) * p.value(t); }, 0.0, 2.0 * kT, 512);
  CHECK(e == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.value(-1e-15) == 0.0);
  CHECK(p.value(2.0 * kT + 1e-15) == 0.0);
  for (double x : {0.1, 0.37, 0.8}) CHECK(p.value(x * kT) == doctest::Approx(p.value((2.0 - x) * kT)));
  const double h = kT * 1e-6;
  for (double x : {0.3, 0.9, 1.4}) {
    const double fd = (p.value(x * kT + h) - p.value(x * kT - h)) / (2 * h);
    CHECK(p.derivative(x * kT) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("composite pulse") {
  const PulseShape p(kT);
  const CompositePulse chi(p, p, 64);
  CHECK(chi.support_end() == doctest::Approx(4.0 * kT));
  CHECK(chi.value(-1e-15) == 0.0);
  CHECK(chi.value(4.0 * kT + 1e-15) == 0.0);
  for (double x : {0.05, 0.5, 1.13, 1.9, 2.0}) {
    CHECK(std::abs(chi.value(x * kT) - chi.value((4.0 - x) * kT)) < 1e-9);
  }

  // Direct convolution at off-table points.
  for (double x : {0.713, 1.5551, 2.0, 3.3}) {
    const double t = x * kT;
    const double lo = std::max(0.0, t - 2.0 * kT), hi = std::min(2.0 * kT, t);
    const double ref = integrate([&](double u) { return p.value(u) * p.value(t - u); }, lo, hi, 128);
    CHECK(chi.value(t) == doctest::Approx(ref).epsilon(1e-7));
  }
  // chi(2T) is the pulse energy.
  CHECK(chi.value(2.0 * kT) == doctest::Approx(1.0).epsilon(1e-9));

  const double psi_int = integrate([&](double t) { return p.value(t); }, 0.0, 2.0 * kT);
  CHECK(chi.integral() == doctest::Approx(psi_int * psi_int).epsilon(1e-9));
  const double chi_energy = integrate([&](double t) { return chi.value(t) * chi.value(t); }, 0.0, 4.0 * kT);
  CHECK(chi.energy() == doctest::Approx(chi_energy).epsilon(1e-7));

  const double h = kT * 1e-5;
  for (double x : {0.61, 1.27, 2.9}) {
    const double fd = (chi.value(x * kT + h) - chi.value(x * kT - h)) / (2 * h);
    CHECK(chi.derivative(x * kT) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("probe signal") {
  const PulseShape p(kT);
  const CompositePulse chi(p, p);
  const Chips one{1};
  const ProbeSignal single(one, chi);
  CHECK(single.value(-kT) == cdouble{});
  CHECK(std::abs(single.value(2.0 * kT) - chi.value(2.0 * kT)) < 1e-15);

  const Chips two{1, -1};
  const ProbeSignal pair(two, chi);
  const double t = 2.7 * kT;
  const cdouble expect = chi.value(t) + cdouble(0, 1) * -1.0 * chi.value(t - kT);
  CHECK(std::abs(pair.value(t) - expect) < 1e-14);

  // Energy over the whole packet is close to K times the energy of chi.
  const auto seq = SymbolSequence::build(kMinChips, 5);
  const ProbeSignal probe(seq.chips(), chi);
  const double step = kT / 8;
  double e = 0.0;
  for (double u = 0.0; u < (seq.size() + 4) * kT; u += step) e += std::norm(probe.value(u)) * step;
  CHECK(std::abs(e / chi.energy() - seq.size()) / seq.size() < 0.02);

  const double tt = 1000.3 * kT, h = kT * 1e-5;
  const cdouble fd = (probe.value(tt + h) - probe.value(tt - h)) / (2 * h);
  CHECK(std::abs(probe.derivative(tt) - fd) / std::abs(fd) < 1e-4);
}

TEST_CASE("processing window presets") {
  const auto f = ProcessingWindow::preset('f', kMinChips, kT, kT);
  CHECK(f.sample_count() == 513);
  CHECK(f.t_start == doctest::Approx(51 * 128 * kT));
  CHECK(f.t_end == doctest::Approx(55 * 128 * kT));
  for (char w : {'a', 'b', 'c', 'd', 'e', 'f'}) {
    const auto win = ProcessingWindow::preset(w, kMinChips, kT, kT);
    CHECK_NOTHROW(win.validate(kMinChips * kT));
    CHECK(win.t_start < win.t_end);
  }
  CHECK_THROWS(ProcessingWindow::preset('g', kMinChips, kT, kT));
  ProcessingWindow bad{1.0, 0.5, kT};
  CHECK_THROWS_AS(bad.validate(1.0), std::invalid_argument);
}

TEST_CASE("signatures") {
  const PhysicalConstants pc;
  const auto seq = SymbolSequence::build(kMinChips, 1);
  const ProbeSignal probe(seq.chips(), CompositePulse(PulseShape(kT), PulseShape(kT)));
  const auto win = ProcessingWindow::preset('f', kMinChips, kT, kT);
  const auto space = SearchSpace::from_ranges(5.0, 40.0, 5.0, pc);

  const double tau = pc.delay_from_range(12.3);
  const double nu = pc.doppler_from_velocity(3.0);
  const auto x0 = signature(probe, win, tau, 0.0, space);
  const auto x1 = signature(probe, win, tau, nu, space);
  REQUIRE(x0.samples.size() == 513);
  for (int m = 0; m < 513; ++m) {
    const cdouble d = std::polar(1.0, 2.0 * std::numbers::pi * nu * win.sample_time(m));
    REQUIRE(std::abs(x1.samples[m] - d * x0.samples[m]) < 1e-12);
    REQUIRE(std::abs(x0.samples[m] - probe.value(win.sample_time(m) - tau)) < 1e-15);
  }
  CHECK_THROWS_AS(signature(probe, win, pc.delay_from_range(1.0), 0.0, space), std::out_of_range);
  CHECK_THROWS_AS(signature(probe, win, tau, pc.doppler_from_velocity(6.0), space), std::out_of_range);

  // A delay of t_start + 3.5 Tc leaves the first four samples empty.
  const SearchSpace wide{0.0, win.t_end, 0.0};
  const auto late = signature(probe, win, win.t_start + 3.5 * kT, 0.0, wide);
  for (int m = 0; m < 4; ++m) CHECK(late.samples[m] == cdouble{});
  CHECK(std::abs(late.samples[4]) > 0.0);

  // Window (f) lies in the preamble: signatures do not depend on the payload.
  const auto seq2 = SymbolSequence::build(kMinChips, 999);
  const ProbeSignal probe2(seq2.chips(), CompositePulse(PulseShape(kT), PulseShape(kT)));
  const auto y = signature(probe2, win, tau, nu, space);
  CHECK((y.samples - x1.samples).norm() == 0.0);

  // Past the window start, delays on the sampling lattice see a shrinking
  // prefix of the packet.
  double prev = 1e300;
  for (double d = win.t_start; d <= win.t_end; d += 16 * kT) {
    const double e = signature(probe, win, d, 0.0, wide).samples.squaredNorm();
    CHECK(e <= prev * (1 + 1e-12));
    prev = e;
  }

  CVector dx(513), xp(513), xm(513);
  const double h = kT * 1e-5;
  sample_signature_delay_derivative(probe, win, tau, nu, as_span(dx));
  sample_signature(probe, win, tau + h, nu, as_span(xp));
  sample_signature(probe, win, tau - h, nu, as_span(xm));
  const CVector fd = (xp - xm) / (2 * h);
  CHECK((dx - fd).norm() / fd.norm() < 1e-4);
}

TEST_CASE("csv export") {
  std::ostringstream os;
  write_chips_csv(os, golay_pair(32).a);
  CHECK(os.str().find('\n') != std::string::npos);
  std::ostringstream ps;
  write_pulse_csv(ps, CompositePulse(PulseShape(kT), PulseShape(kT)));
  CHECK(!ps.str().empty());
}
