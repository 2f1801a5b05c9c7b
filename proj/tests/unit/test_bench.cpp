// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oppradar/bench.hpp"

using namespace oppradar;
using namespace oppradar::bench;

namespace {

constexpr double kT = 1.0 / 1.76e9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const System& system_f() {
  static const System sys{SystemConfig{}};
  return sys;
}

// Maxima of 100 independent Exp(1) variables.
std::vector<double> synthetic_maxima(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> out(n);
  for (auto& v : out) {
    double m = 0.0;
    for (int k = 0; k < 100; ++k) m = std::max(m, e(rng));
    v = m;
  }
  return out;
}

double exact_max_quantile(double pfa) { return -std::log(1.0 - std::pow(1.0 - pfa, 0.01)); }

}  // namespace

TEST_CASE("wilson interval") {
  const auto ci = binomial_ci(5, 100);
  CHECK(ci.low == doctest::Approx(0.0215).epsilon(0.01));
  CHECK(ci.high == doctest::Approx(0.1118).epsilon(0.01));
  const auto zero = binomial_ci(0, 50);
  CHECK(zero.low < 1e-12);
  CHECK(zero.high > 0.0);
}

TEST_CASE("direct threshold") {
  std::vector<double> v(10000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto t = calibrate_threshold(v, 0.01);
  CHECK(t.gamma > 9899.0);
  CHECK(t.gamma < 9900.0);
  CHECK(empirical_pfa(v, t.gamma) == doctest::Approx(0.01));
  CHECK_FALSE(t.unreliable);
  CHECK(calibrate_threshold(v, 1e-4).unreliable);
}

TEST_CASE("tail extrapolation on maxima of exponentials") {
  const auto maxima = synthetic_maxima(20000, 3);
  for (double pfa : {1e-4, 1e-5}) {
    const auto t = calibrate_threshold_evt(maxima, pfa, 0.05);
    CHECK(t.evt);
    CHECK_FALSE(t.refused);
    CHECK(t.gamma == doctest::Approx(exact_max_quantile(pfa)).epsilon(0.03));
  }
  // A tail fraction of 1 with pfa above it gives the direct quantile.
  const auto direct = calibrate_threshold(maxima, 0.2);
  const auto whole = calibrate_threshold_evt(maxima, 0.2, 0.1);
  CHECK(whole.gamma == doctest::Approx(direct.gamma));
  CHECK_FALSE(whole.evt);

  // Uniform maxima have no exponential tail: the fit is refused.
  std::vector<double> u(5000);
  Rng rng(1);
  for (auto& x : u) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto bad = calibrate_threshold_evt(u, 1e-5, 0.2);
  CHECK(bad.refused);
  CHECK_FALSE(bad.note.empty());
}

TEST_CASE("null maxima are reproducible and worker-independent") {
  const auto ctx = system_f().context(1.0);
  const auto a = null_maxima(*ctx, 64, 9, 1);
  const auto b = null_maxima(*ctx, 64, 9, 4);
  CHECK(a == b);
  CHECK(*std::min_element(a.begin(), a.end()) > 0.0);
}

TEST_CASE("cramer-rao bound") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const double tau = sys.constants().delay_from_range(12.0);
  const auto c1 = crb(*ctx, sys.constants(), tau, 0.0, {2e-5, 1e-5});
  const auto c2 = crb(*ctx, sys.constants(), tau, 0.0, {4e-5, 2e-5});
  REQUIRE(c1.valid);
  REQUIRE(c2.valid);
  CHECK(c1.range_var / c2.range_var == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(c1.amplitude_var == doctest::Approx(c2.amplitude_var).epsilon(1e-6));
  CHECK(c1.range_var == doctest::Approx(c1.delay_var * std::pow(sys.constants().speed_of_light / 2, 2)));

  CVector dx(ctx->samples());
  waveform::sample_signature_delay_derivative(sys.probe(), sys.window(), tau, 0.0, as_span(dx));
  dx *= sys.amplitude_scale();
  const CVector fd = signature_delay_derivative(*ctx, tau, 0.0);
  CHECK((fd - dx).norm() / dx.norm() < 1e-4);
}

TEST_CASE("association") {
  const PhysicalConstants pc;
  auto det = [&](double r, double metric) {
    detect::Detection d;
    d.delay = pc.delay_from_range(r);
    d.metric = metric;
    return d;
  };
  const std::vector<detect::Detection> ds{det(10.02, 50), det(10.05, 80), det(30.0, 20), det(20.3, 30)};
  const std::vector<double> truth{10.0, 20.0};
  const auto a = associate(ds, truth, 0.1, pc);
  CHECK(a == std::vector<int>{-1, 0, -1, -1});
  const auto b = associate(ds, truth, 0.5, pc);
  CHECK(b == std::vector<int>{-1, 0, -1, 1});
}

TEST_CASE("crossing from the right") {
  const std::vector<double> x{0.04, 0.08, 0.12, 0.16};
  const std::vector<double> y{1.0, 1.3, 1.8, 1.95};
  CHECK(crossing_from_right(x, y, 1.5) == doctest::Approx(0.096));
  const std::vector<double> high{1.6, 1.7, 1.8, 1.9};
  CHECK(std::isnan(crossing_from_right(x, high, 1.5)));
}

TEST_CASE("records round trip and reports are idempotent") {
  const auto& sys = system_f();
  CampaignResult res;
  res.kind = "range_sweep";
  res.points = {{10.0, 1.0, "iic-amfd", 15.2, 30.1}, {20.0, 1.0, "iic-amfd", 15.2, 18.0}};
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 0.02);
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t t = 0; t < 5; ++t) {
      TrialRecord rec;
      rec.point = p;
      rec.trial = t;
      rec.seed = 1000 * p + t;
      const double r = res.points[p].x;
      rec.truth.push_back({r, {1e-5, 2e-5}, 1e-6, 1e-12});
      rec.truth.push_back({r + 3, {3e-6, 0}, kNaN, kNaN});
      if (t != 2) rec.detections.push_back({1, r + n(rng), r + 0.1 * n(rng), {1e-5, 1.9e-5}, {1.01e-5, 2e-5}, 40.0, 0});
      if (t == 3) rec.detections.push_back({2, 33.0, kNaN, {1e-6, 0}, {kNaN, kNaN}, 16.0, -1});
      res.records.push_back(rec);
    }
  }
  std::stringstream ss;
  write_records_csv(ss, res);
  const auto back = read_records_csv(ss);
  CHECK(back.kind == res.kind);
  REQUIRE(back.points.size() == 2);
  REQUIRE(back.records.size() == res.records.size());
  CHECK(back.records[3].detections.size() == 2);
  CHECK(std::isnan(back.records[3].detections[1].refined_range_m));
  CHECK(back.records[4].detections[0].range_m == res.records[4].detections[0].range_m);

  const auto a = pd_rmse_report(sys, res);
  const auto b = pd_rmse_report(sys, back);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].pd == doctest::Approx(0.8));
    CHECK(a[i].pd == b[i].pd);
    CHECK(a[i].coarse_rmse_m == b[i].coarse_rmse_m);
    CHECK(a[i].refined_rmse_m == b[i].refined_rmse_m);
    CHECK(a[i].emcb_m == doctest::Approx(1e-3));
    CHECK(a[i].refined_rmse_m < a[i].coarse_rmse_m);
  }
  CHECK(a[0].false_per_trial == doctest::Approx(0.2));

  std::stringstream broken("# kind: range_sweep\nQ,1,2\n");
  CHECK_THROWS(read_records_csv(broken));
}

TEST_CASE("small campaigns run end to end") {
  const auto& sys = system_f();
  const ThresholdFn fixed = [](const detect::DetectorContext&) { return 15.2; };

  RangeSweepConfig sweep;
  sweep.detector.kind = DetectorKind::standard;
  sweep.detector.refine = true;
  sweep.ranges_m = {8.0};
  sweep.trials = 20;
  const auto res = run_range_sweep(sys, sweep, fixed);
  const auto rows = pd_rmse_report(sys, res);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].pd > 0.9);
  CHECK(rows[0].refined_rmse_m < 0.01);
  CHECK(rows[0].mean_snr_db > 20.0);

  // Common random numbers: the reference truth does not depend on the detector.
  RangeSweepConfig iic = sweep;
  iic.detector.kind = DetectorKind::iic;
  const auto res2 = run_range_sweep(sys, iic, fixed);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    CHECK(res.records[i].truth[0].range_m == res2.records[i].truth[0].range_m);
    CHECK(res.records[i].truth[0].amplitude == res2.records[i].truth[0].amplitude);
    CHECK(res2.records[i].truth.size() == 8);
  }

  ResolutionConfig rc;
  rc.separations_m = {0.3};
  rc.trials = 4;
  const auto rr = resolution_report(run_resolution(sys, rc, fixed));
  CHECK(rr.size() == 4);
  for (const auto& r : rr) CHECK(r.mean_detections > 1.0);
}
