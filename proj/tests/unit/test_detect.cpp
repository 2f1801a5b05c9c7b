// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oppradar/bench.hpp"
#include "oppradar/detect.hpp"
#include "oppradar/quadrature.hpp"

using namespace oppradar;
using namespace oppradar::detect;

namespace {

constexpr double kT = 1.0 / 1.76e9;

const bench::System& system_f() {
  static const bench::System sys{bench::SystemConfig{}};
  return sys;
}

// Four-sample problem small enough for dense algebra everywhere.
DetectorContext tiny_context() {
  const auto chips = waveform::golay_pair(32).a;
  waveform::ProbeSignal probe(chips, waveform::CompositePulse(waveform::PulseShape(kT), waveform::PulseShape(kT)));
  const waveform::ProcessingWindow win{10 * kT, 13 * kT, kT};
  const waveform::SearchSpace space{8 * kT, 12 * kT, 0.0};
  return DetectorContext(probe, win, space, SearchGrid::build(space, kT / 2), scene::NoiseModel({1.0, 0.3}, 4),
                         0.7, 0.5 / kT);
}

CVector signature(const DetectorContext& ctx, double delay) {
  CVector x(ctx.samples());
  waveform::sample_signature(ctx.probe(), ctx.window(), delay, 0.0, as_span(x));
  return x;
}

CVector noiseless(const bench::System& sys, double delay, cdouble amp) {
  return amp * sys.amplitude_scale() * signature(*sys.context(1.0), delay);
}

}  // namespace

TEST_CASE("search grid") {
  const waveform::SearchSpace space{5.3 * kT, 9.9 * kT, 0.0};
  const auto g = SearchGrid::build(space, kT);
  CHECK(g.j_min == 6);
  CHECK(g.j_max == 9);
  CHECK(g.size() == 4);
  CHECK(g.delay(0) == doctest::Approx(6 * kT));
  const auto d = SearchGrid::build({0.0, kT, 1000.0}, kT / 4, 300.0);
  CHECK(d.doppler_count() == 7);
  CHECK(d.doppler(0) == doctest::Approx(-900.0));
  CHECK(d.delay_index(d.index(2, 5)) == 2);
  CHECK(d.doppler_index(d.index(2, 5)) == 5);
}

TEST_CASE("glrt metric matches the dense formula on a 4-sample problem") {
  const auto ctx = tiny_context();
  const Eigen::MatrixXcd c = ctx.noise().covariance().cast<cdouble>();
  const Eigen::MatrixXcd ci = c.inverse();
  Rng rng(5);
  CVector r(4);
  for (auto& v : r) v = complex_normal(rng);
  const auto metric = glrt_metrics(ctx, ctx.whiten(r));
  REQUIRE(metric.size() == static_cast<Eigen::Index>(ctx.grid().size()));
  for (long j = 0; j < ctx.grid().delay_count(); ++j) {
    const CVector x = signature(ctx, ctx.grid().delay(j));
    const double xx = (x.adjoint() * ci * x)(0).real();
    const double expect = xx > 0 ? std::norm((x.adjoint() * ci * r)(0)) / xx : 0.0;
    CHECK(metric[j] == doctest::Approx(expect).epsilon(1e-10));
    CHECK(mf_metric(r, x, ctx.noise()) == doctest::Approx(expect).epsilon(1e-10));
  }
  // Phase invariance and r = x.
  const CVector x = signature(ctx, ctx.grid().delay(3));
  CHECK(mf_metric(std::polar(1.0, 0.7) * r, x, ctx.noise()) == doctest::Approx(mf_metric(r, x, ctx.noise())));
  CHECK(mf_metric(x, x, ctx.noise()) == doctest::Approx((x.adjoint() * ci * x)(0).real()));
  CHECK(mf_metric(r, CVector::Zero(4), ctx.noise()) == 0.0);
}

TEST_CASE("null metric at a fixed point is Exp(1)") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const CVector x = ctx->bank().col(100);
  Rng rng(8);
  const int n = 20000;
  double mean = 0.0;
  int above = 0;
  for (int i = 0; i < n; ++i) {
    CVector w(ctx->samples());
    for (auto& v : w) v = complex_normal(rng);
    const double m = whitened_metric(x.dot(w), x.squaredNorm());
    mean += m;
    above += m > 3.0;
  }
  CHECK(mean / n == doctest::Approx(1.0).epsilon(0.03));
  const auto ci = bench::binomial_ci(above, n);
  CHECK(ci.low <= std::exp(-3.0));
  CHECK(std::exp(-3.0) <= ci.high);
}

TEST_CASE("std on a noiseless grid-aligned target") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const long j = 40;
  const double tau = ctx->grid().delay(j);
  const cdouble alpha{3e-5, -4e-5};
  const auto d = std_detect(*ctx, noiseless(sys, tau, alpha), 15.0);
  REQUIRE(d);
  CHECK(d->delay == tau);
  CHECK(std::abs(d->amplitude - alpha) < 1e-9 * std::abs(alpha));
  CHECK_FALSE(std_detect(*ctx, noiseless(sys, tau, alpha), 1e300));
}

TEST_CASE("uncertainty extents") {
  const auto& sys = system_f();
  const auto& grid = sys.context(1.0)->grid();
  const double w = 0.5 / kT;
  const auto big = uncertainty_extents(1e12, grid, sys.window(), sys.space().delay_max, w);
  CHECK(big.delay == doctest::Approx(kT / 2));
  const double cross = std::pow(2 * std::numbers::pi * w * kT, -2);
  CHECK(uncertainty_extents(cross, grid, sys.window(), sys.space().delay_max, w).delay ==
        doctest::Approx(kT / 2));
  const auto small = uncertainty_extents(0.01, grid, sys.window(), sys.space().delay_max, w);
  CHECK(small.delay == doctest::Approx(0.5 * 10.0 / (2 * std::numbers::pi * w)));
}

TEST_CASE("interference covariance") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const double tau = ctx->grid().delay(60);

  const auto point = build_q(*ctx, tau, 0.0, {0.0, 0.0}, false);
  CHECK(point.rank() == 1);
  const CVector x = ctx->whitened_signature(tau, 0.0);
  CHECK((point.dense() - x * x.adjoint()).norm() < 1e-9 * x.squaredNorm());

  const Extents e{0.8 * kT, 0.0};
  const auto q33 = build_q(*ctx, tau, 0.0, e, false, true, {33, 1e-6});
  const auto q65 = build_q(*ctx, tau, 0.0, e, false, true, {65, 1e-6});
  const CMatrix d33 = q33.dense(), d65 = q65.dense();
  CHECK((d33 - d65).norm() / d65.norm() < 1e-3);
  CHECK((d33 - d33.adjoint()).norm() < 1e-12 * d33.norm());
  CHECK(q33.lambda.minCoeff() >= 0.0);

  const auto rule = gauss_legendre(33, tau - e.delay, tau + e.delay);
  double trace = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    trace += rule.weights[i] * ctx->whitened_signature(rule.nodes[i], 0.0).squaredNorm();
  }
  trace /= 2 * e.delay;
  CHECK(d33.trace().real() == doctest::Approx(trace).epsilon(1e-6));
}

TEST_CASE("inverse updates against dense inverses") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const int m = ctx->samples();
  const CMatrix c = sys.noise().covariance().cast<cdouble>();
  CMatrix inv = c.inverse();
  CMatrix acc = c;

  // Echo powers |alpha|^2 around 1e-10 put the interference near the noise
  // level, where both inverses are well conditioned.
  const double unit = 1e-10;

  // Rank one: Sherman-Morrison.
  const auto q1 = build_q(*ctx, ctx->grid().delay(20), 0.0, {0.0, 0.0}, false, false);
  const auto one = update_inverse(inv, q1, 2.0 * unit);
  const CMatrix direct1 = (c + 2.0 * unit * q1.dense()).inverse();
  CHECK((one.inverse - direct1).norm() / direct1.norm() < 1e-10);
  CHECK((update_inverse(inv, q1, 0.0).inverse - inv).norm() == 0.0);

  InterferenceWhitener white(m);
  CMatrix acc_white = CMatrix::Identity(m, m);
  const long bins[] = {20, 45, 46, 90, 130, 180};
  const double amp2[] = {5.0, 0.3, 40.0, 1.0, 1e3, 0.02};
  for (int p = 0; p < 6; ++p) {
    const double tau = ctx->grid().delay(bins[p]);
    const Extents e{0.5 * kT, 0.0};
    const auto q = build_q(*ctx, tau, 0.0, e, false, false);
    inv = update_inverse(inv, q, amp2[p] * unit).inverse;
    acc += amp2[p] * unit * q.dense();
    const auto qw = build_q(*ctx, tau, 0.0, e, false, true);
    white.add(qw, amp2[p] * unit);
    acc_white += amp2[p] * unit * qw.dense();
  }
  const CMatrix direct = acc.inverse();
  CHECK((inv - direct).norm() / direct.norm() < 1e-8);
  const CMatrix direct_white = acc_white.inverse();
  CHECK((white.dense() - direct_white).norm() / direct_white.norm() < 1e-8);
  Rng rng(2);
  CVector v(m);
  for (auto& s : v) s = complex_normal(rng);
  CHECK((white.apply(v) - direct_white * v).norm() < 1e-8 * v.norm());
}

TEST_CASE("iic on one noiseless target") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const long j = 70;
  const double tau = ctx->grid().delay(j);
  const cdouble alpha = std::polar(2e-5, 0.4);
  IicConfig cfg;
  cfg.threshold = 15.0;
  cfg.max_targets = sys.default_max_targets();
  cfg.keep_traces = true;
  const auto res = iic_amfd(*ctx, noiseless(sys, tau, alpha), cfg);
  REQUIRE(res.detections.size() == 1);
  CHECK(res.detections[0].delay == tau);
  CHECK(std::abs(res.detections[0].amplitude - alpha) < 1e-6 * std::abs(alpha));
  REQUIRE(res.traces.size() >= 2);
  // The second metric has a notch of more than 10 dB where the first
  // target was found.
  CHECK(res.traces[1][j] < 0.1 * res.traces[0][j]);
}

TEST_CASE("mfpd peak radius") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  const double tau = ctx->grid().delay(55);
  Rng rng(12);
  const CVector r = noiseless(sys, tau, {2e-5, 0}) + sys.noise().sample(rng);
  const auto all = mf_pd_detect(*ctx, r, 15.0, 0);
  const auto peaks = mf_pd_detect(*ctx, r, 15.0, 1);
  CHECK(peaks.size() >= 1);
  CHECK(all.size() >= peaks.size());
  CHECK(std::any_of(peaks.begin(), peaks.end(), [&](const Detection& d) { return d.delay == tau; }));
}

TEST_CASE("refinement moves off-grid estimates closer") {
  const auto& sys = system_f();
  const auto ctx = sys.context(1.0);
  RefineOptions opt;
  opt.delay_step = kT / 512;
  for (double frac : {0.3, 0.71}) {
    const double tau = (ctx->grid().j_min + 50 + frac) * kT;
    const CVector r = noiseless(sys, tau, std::polar(3e-5, 1.1));
    auto d = std_detect(*ctx, r, 15.0);
    REQUIRE(d);
    refine_single(*ctx, r, *d, opt);
    REQUIRE(d->refined);
    CHECK(std::abs(d->refined->delay - tau) < std::abs(d->delay - tau));
    CHECK(std::abs(d->refined->delay - tau) <= kT / 512);
  }

  // Two well-separated targets: the leave-one-out refinement of each.
  const double t1 = (ctx->grid().j_min + 30.4) * kT, t2 = (ctx->grid().j_min + 120.8) * kT;
  const CVector r = noiseless(sys, t1, {3e-5, 0}) + noiseless(sys, t2, {0, 2e-5});
  IicConfig cfg;
  cfg.threshold = 15.0;
  cfg.max_targets = 4;
  auto res = iic_amfd(*ctx, r, cfg);
  REQUIRE(res.detections.size() >= 2);
  refine(*ctx, r, res, opt);
  for (const auto& d : res.detections) {
    REQUIRE(d.refined);
    const double truth = std::abs(d.delay - t1) < std::abs(d.delay - t2) ? t1 : t2;
    if (std::abs(d.delay - truth) < kT) CHECK(std::abs(d.refined->delay - truth) < 2 * kT / 512);
  }
}
