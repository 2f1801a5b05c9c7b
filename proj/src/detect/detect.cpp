// SPDX-License-Identifier: Apache-2.0

#include "oppradar/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "oppradar/quadrature.hpp"
#include "oppradar/simd/kernels.hpp"

namespace oppradar::detect {

namespace {

// Energy left after projection below this fraction of the original is
// treated as fully cancelled.
constexpr double kCancelledEnergy = 1e-10;
// Reciprocal condition number below which the Woodbury inner solve is
// abandoned in favour of refactorization.
constexpr double kMinInnerRcond = 1e-12;

struct Interval {
  double lo;
  double hi;
};

Interval clip(double center, double half_width, double lo, double hi) {
  return {std::max(center - half_width, lo), std::min(center + half_width, hi)};
}

QuadratureRule interval_rule(Interval iv, double center, int nodes) {
  if (!(iv.hi > iv.lo) || nodes <= 1) return {{center}, {1.0}};
  QuadratureRule q = gauss_legendre(nodes, iv.lo, iv.hi);
  for (double& w : q.weights) w /= iv.hi - iv.lo;
  return q;
}

// Z^H X for every column of `x`, through the dispatched SIMD kernel.
CMatrix project(const CMatrix& z, const CMatrix& x) {
  CMatrix out(z.cols(), x.cols());
  if (z.cols() == 0 || x.cols() == 0) return out;
  simd::cgemm_adjoint(z.data(), static_cast<std::size_t>(z.cols()), x.data(),
                      static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(z.rows()),
                      out.data());
  return out;
}

CMatrix hermitian_part(const CMatrix& s) { return 0.5 * (s + s.adjoint()); }

// Orthonormal eigenbasis of X X^H from the Gram matrix X^H X, keeping
// eigenvalues above `tolerance` times the largest.
LowRankPsd low_rank_from_columns(const CMatrix& x, double tolerance) {
  LowRankPsd q;
  const CMatrix gram = hermitian_part(x.adjoint() * x);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram);
  const Eigen::VectorXd& mu = eig.eigenvalues();
  const double top = mu.size() > 0 ? mu.maxCoeff() : 0.0;
  if (!(top > 0.0)) {
    q.u.resize(x.rows(), 0);
    return q;
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = mu.size() - 1; i >= 0; --i) {
    if (mu[i] > tolerance * top) keep.push_back(i);
  }
  q.u.resize(x.rows(), static_cast<Eigen::Index>(keep.size()));
  q.lambda.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index i = keep[k];
    q.lambda[k] = mu[i];
    q.u.col(k) = x * eig.eigenvectors().col(i) / std::sqrt(mu[i]);
  }
  return q;
}

// Updates (a, b) = (x^H K r, x^H K x) after K loses Z_blk Z_blk^H.
void downdate(const CMatrix& z_block, const CMatrix& bank, const CVector& r_white,
              CVector& a, Eigen::VectorXd& b) {
  if (z_block.cols() == 0) return;
  const CMatrix c = project(z_block, bank);
  const CVector zr = z_block.adjoint() * r_white;
  a.noalias() -= c.adjoint() * zr;
  b -= c.cwiseAbs2().colwise().sum().transpose();
}

double guarded_metric(cdouble a, double b, double energy) {
  if (!(b > kCancelledEnergy * energy)) return 0.0;
  return std::norm(a) / b;
}

}  // namespace

SearchGrid SearchGrid::build(const waveform::SearchSpace& space, double delay_step,
                             double doppler_step) {
  if (!(delay_step > 0.0)) throw std::invalid_argument("SearchGrid: delay step must be positive");
  SearchGrid g;
  g.delay_step = delay_step;
  g.doppler_step = doppler_step;
  g.j_min = static_cast<long>(std::ceil(space.delay_min / delay_step - 1e-9));
  g.j_max = static_cast<long>(std::floor(space.delay_max / delay_step + 1e-9));
  if (g.j_max < g.j_min) throw std::invalid_argument("SearchGrid: delay interval holds no grid point");
  g.n_doppler = doppler_step > 0.0
                    ? static_cast<int>(std::floor(space.doppler_max / doppler_step + 1e-9))
                    : 0;
  return g;
}

CMatrix LowRankPsd::dense() const { return u * lambda.asDiagonal() * u.adjoint(); }

DetectorContext::DetectorContext(waveform::ProbeSignal probe, waveform::ProcessingWindow window,
                                 waveform::SearchSpace space, SearchGrid grid,
                                 scene::NoiseModel noise, double amplitude_scale, double bandwidth)
    : probe_(std::move(probe)),
      window_(window),
      space_(space),
      grid_(grid),
      noise_(std::move(noise)),
      amplitude_scale_(amplitude_scale),
      bandwidth_(bandwidth) {
  const int m = window_.sample_count();
  if (noise_.size() != m) throw std::invalid_argument("DetectorContext: noise model size differs from the window");
  const auto g_count = static_cast<Eigen::Index>(grid_.size());
  bank_.resize(m, g_count);
  energy_.resize(g_count);
  for (long jd = 0; jd < grid_.delay_count(); ++jd) {
    for (int nd = 0; nd < grid_.doppler_count(); ++nd) {
      const auto g = static_cast<Eigen::Index>(grid_.index(jd, nd));
      bank_.col(g) = whitened_signature(grid_.delay(jd), grid_.doppler(nd));
      energy_[g] = bank_.col(g).squaredNorm();
    }
  }
}

CVector DetectorContext::whitened_signature(double delay, double doppler) const {
  CVector x(window_.sample_count());
  waveform::sample_signature(probe_, window_, delay, doppler, as_span(x));
  x *= amplitude_scale_;
  noise_.whiten(as_span(x));
  return x;
}

double whitened_metric(cdouble xr, double xx) {
  if (!(xx > 0.0)) return 0.0;
  return std::norm(xr) / xx;
}

double mf_metric(const CVector& r, const CVector& x, const scene::NoiseModel& noise) {
  const CVector rw = noise.whitened(r);
  const CVector xw = noise.whitened(x);
  return whitened_metric(simd::cdot(as_span(xw), as_span(rw)), simd::norm2(as_span(xw)));
}

Eigen::VectorXd glrt_metrics(const DetectorContext& ctx, const CVector& r_white) {
  const CMatrix& bank = ctx.bank();
  CVector a(bank.cols());
  simd::cgemv_adjoint(bank.data(), static_cast<std::size_t>(bank.rows()),
                      static_cast<std::size_t>(bank.cols()), static_cast<std::size_t>(bank.rows()),
                      as_span(r_white), as_span(a));
  Eigen::VectorXd m(bank.cols());
  for (Eigen::Index g = 0; g < m.size(); ++g) m[g] = whitened_metric(a[g], ctx.bank_energy()[g]);
  return m;
}

std::optional<std::size_t> argmax_active(const Eigen::VectorXd& metric,
                                         const std::vector<char>& active) {
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < active.size(); ++g) {
    if (!active[g]) continue;
    if (!best || metric[static_cast<Eigen::Index>(g)] > metric[static_cast<Eigen::Index>(*best)]) best = g;
  }
  return best;
}

Extents uncertainty_extents(double lambda, const SearchGrid& grid,
                            const waveform::ProcessingWindow& window, double tau_max,
                            double bandwidth) {
  const double inv_sqrt = lambda > 0.0 ? 1.0 / std::sqrt(lambda) : std::numeric_limits<double>::infinity();
  Extents e;
  e.delay = 0.5 * std::max(grid.delay_step, inv_sqrt / (2.0 * std::numbers::pi * bandwidth));
  const double span = window.t_end - std::max(window.t_start, tau_max);
  e.doppler = span > 0.0 ? 0.5 * std::max(grid.doppler_step, inv_sqrt / span) : 0.5 * grid.doppler_step;
  return e;
}

namespace {

Detection make_detection(const DetectorContext& ctx, std::size_t g, cdouble a, double b,
                         double metric, int iteration, double lambda) {
  const SearchGrid& grid = ctx.grid();
  Detection d;
  d.grid_index = g;
  d.delay = grid.delay(grid.delay_index(g));
  d.doppler = grid.doppler(grid.doppler_index(g));
  d.amplitude = a / b;
  d.metric = metric;
  d.iteration = iteration;
  const Extents e = uncertainty_extents(lambda, grid, ctx.window(), ctx.space().delay_max, ctx.bandwidth());
  d.delay_extent = e.delay;
  d.doppler_extent = e.doppler;
  return d;
}

}  // namespace

std::optional<Detection> std_detect(const DetectorContext& ctx, const CVector& r, double threshold) {
  const CVector rw = ctx.whiten(r);
  const Eigen::VectorXd m = glrt_metrics(ctx, rw);
  Eigen::Index g = 0;
  m.maxCoeff(&g);  // first maximum wins
  if (!(m[g] > threshold)) return std::nullopt;
  const cdouble a = ctx.bank().col(g).dot(rw);
  return make_detection(ctx, static_cast<std::size_t>(g), a, ctx.bank_energy()[g], m[g], 1, m[g] / 16.0);
}

std::vector<Detection> mf_pd_detect(const DetectorContext& ctx, const CVector& r, double threshold,
                                    int peak_radius) {
  const SearchGrid& grid = ctx.grid();
  const CVector rw = ctx.whiten(r);
  const Eigen::VectorXd m = glrt_metrics(ctx, rw);
  std::vector<Detection> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double v = m[static_cast<Eigen::Index>(g)];
    if (!(v > threshold)) continue;
    const long jd = grid.delay_index(g);
    const int nd = grid.doppler_index(g);
    bool peak = true;
    const int dn = peak_radius > 0 ? 1 : 0;
    for (long j = std::max(0L, jd - peak_radius); peak && j <= std::min(grid.delay_count() - 1, jd + peak_radius); ++j) {
      for (int n = std::max(0, nd - dn); n <= std::min(grid.doppler_count() - 1, nd + dn); ++n) {
        const std::size_t h = grid.index(j, n);
        if (h == g) continue;
        const double w = m[static_cast<Eigen::Index>(h)];
        if (w > v || (w == v && h < g)) {
          peak = false;
          break;
        }
      }
    }
    if (!peak) continue;
    const cdouble a = ctx.bank().col(static_cast<Eigen::Index>(g)).dot(rw);
    out.push_back(make_detection(ctx, g, a, ctx.bank_energy()[static_cast<Eigen::Index>(g)], v, 1, v / 16.0));
  }
  return out;
}

LowRankPsd build_q(const DetectorContext& ctx, double delay, double doppler, Extents extents,
                   bool doppler_search, bool whitened, QuadratureOptions options) {
  const waveform::SearchSpace& s = ctx.space();
  const QuadratureRule qd =
      interval_rule(clip(delay, extents.delay, s.delay_min, s.delay_max), delay, options.nodes);
  const QuadratureRule qn =
      doppler_search ? interval_rule(clip(doppler, extents.doppler, -s.doppler_max, s.doppler_max),
                                     doppler, options.nodes)
                     : QuadratureRule{{doppler}, {1.0}};
  const int m = ctx.samples();
  CMatrix x(m, static_cast<Eigen::Index>(qd.nodes.size() * qn.nodes.size()));
  Eigen::Index col = 0;
  CVector sig(m);
  for (std::size_t i = 0; i < qd.nodes.size(); ++i) {
    for (std::size_t k = 0; k < qn.nodes.size(); ++k) {
      waveform::sample_signature(ctx.probe(), ctx.window(), qd.nodes[i], qn.nodes[k], as_span(sig));
      sig *= ctx.amplitude_scale();
      if (whitened) ctx.noise().whiten(as_span(sig));
      x.col(col++) = std::sqrt(qd.weights[i] * qn.weights[k]) * sig;
    }
  }
  return low_rank_from_columns(x, options.rank_tolerance);
}

InverseUpdate update_inverse(const CMatrix& inverse, const LowRankPsd& q, double amp2) {
  InverseUpdate out;
  if (!(amp2 > 0.0) || q.rank() == 0) {
    out.inverse = inverse;
    return out;
  }
  const CMatrix v = inverse * q.u;
  CMatrix s = q.u.adjoint() * v;
  for (int i = 0; i < q.rank(); ++i) s(i, i) += 1.0 / (amp2 * q.lambda[i]);
  Eigen::LLT<CMatrix> llt(hermitian_part(s));
  if (llt.info() == Eigen::Success && llt.rcond() > kMinInnerRcond) {
    out.inverse = inverse - v * llt.solve(v.adjoint());
    return out;
  }
  out.fallback = true;
  const Eigen::Index n = inverse.rows();
  const CMatrix c = Eigen::LLT<CMatrix>(hermitian_part(inverse)).solve(CMatrix::Identity(n, n)) +
                    amp2 * q.dense();
  out.inverse = Eigen::LLT<CMatrix>(hermitian_part(c)).solve(CMatrix::Identity(n, n));
  return out;
}

InterferenceWhitener::InterferenceWhitener(int size) : z_(size, 0), basis_(size, 0) {}

CMatrix InterferenceWhitener::add(const LowRankPsd& q, double amp2) {
  rebuilt_ = false;
  if (!(amp2 > 0.0) || q.rank() == 0) return CMatrix(z_.rows(), 0);

  const Eigen::Index old = basis_.cols();
  basis_.conservativeResize(Eigen::NoChange, old + q.rank());
  for (int i = 0; i < q.rank(); ++i) basis_.col(old + i) = std::sqrt(amp2 * q.lambda[i]) * q.u.col(i);

  CMatrix v = q.u;
  if (z_.cols() > 0) v.noalias() -= z_ * project(z_, q.u);
  CMatrix s = q.u.adjoint() * v;
  for (int i = 0; i < q.rank(); ++i) s(i, i) += 1.0 / (amp2 * q.lambda[i]);
  Eigen::LLT<CMatrix> llt(hermitian_part(s));
  if (llt.info() == Eigen::Success && llt.rcond() > kMinInnerRcond) {
    // K - V S^{-1} V^H = I - Z Z^H - (V R^{-H})(V R^{-H})^H with S = R R^H.
    const CMatrix block = llt.matrixL().solve(v.adjoint()).adjoint();
    z_.conservativeResize(Eigen::NoChange, z_.cols() + block.cols());
    z_.rightCols(block.cols()) = block;
    return block;
  }

  // (I + B B^H)^{-1} = I - B W (I + M)^{-1} W^H B^H with B^H B = W M W^H.
  ++fallbacks_;
  rebuilt_ = true;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(hermitian_part(basis_.adjoint() * basis_));
  const Eigen::VectorXd mu = eig.eigenvalues().cwiseMax(0.0);
  z_ = basis_ * eig.eigenvectors() * (1.0 + mu.array()).rsqrt().matrix().asDiagonal();
  return z_;
}

CVector InterferenceWhitener::apply(const CVector& x) const {
  if (z_.cols() == 0) return x;
  return x - z_ * (z_.adjoint() * x);
}

CMatrix InterferenceWhitener::dense() const {
  const Eigen::Index n = z_.rows();
  return CMatrix::Identity(n, n) - z_ * z_.adjoint();
}

IicResult iic_amfd(const DetectorContext& ctx, const CVector& r, const IicConfig& config) {
  if (config.max_targets < 1) throw std::invalid_argument("iic_amfd: max_targets must be at least 1");
  const SearchGrid& grid = ctx.grid();
  const CMatrix& bank = ctx.bank();
  const Eigen::VectorXd& energy = ctx.bank_energy();
  const CVector rw = ctx.whiten(r);

  CVector a0(bank.cols());
  simd::cgemv_adjoint(bank.data(), static_cast<std::size_t>(bank.rows()),
                      static_cast<std::size_t>(bank.cols()), static_cast<std::size_t>(bank.rows()),
                      as_span(rw), as_span(a0));
  CVector a = a0;
  Eigen::VectorXd b = energy;
  std::vector<char> active(grid.size(), 1);
  InterferenceWhitener whitener(ctx.samples());
  Eigen::VectorXd metric(bank.cols());
  IicResult result;

  for (int p = 1; p <= config.max_targets; ++p) {
    for (Eigen::Index g = 0; g < metric.size(); ++g) metric[g] = guarded_metric(a[g], b[g], energy[g]);
    if (config.keep_traces) result.traces.push_back(metric);

    const auto best = argmax_active(metric, active);
    if (!best) break;
    const auto gi = static_cast<Eigen::Index>(*best);
    if (!(metric[gi] > config.threshold)) break;

    const double lambda = (config.lambda_mode == LambdaMode::metric ? metric[gi] : config.threshold) /
                          config.lambda_divisor;
    Detection det = make_detection(ctx, *best, a[gi], b[gi], metric[gi], p, lambda);

    // Closed rectangle |tau - tau_p| <= E_p, |nu - nu_p| <= Theta_p.
    const long jd = grid.delay_index(*best);
    const int nd = grid.doppler_index(*best);
    const long dj = static_cast<long>(std::floor(det.delay_extent / grid.delay_step * (1.0 + 1e-9) + 1e-9));
    const int dn = grid.n_doppler > 0
                       ? static_cast<int>(std::floor(det.doppler_extent / grid.doppler_step * (1.0 + 1e-9) + 1e-9))
                       : 0;
    for (long j = std::max(0L, jd - dj); j <= std::min(grid.delay_count() - 1, jd + dj); ++j) {
      for (int n = std::max(0, nd - dn); n <= std::min(grid.doppler_count() - 1, nd + dn); ++n) {
        active[grid.index(j, n)] = 0;
      }
    }

    LowRankPsd q = build_q(ctx, det.delay, det.doppler, {det.delay_extent, det.doppler_extent},
                           grid.n_doppler > 0, true, config.quadrature);
    const CMatrix block = whitener.add(q, std::norm(det.amplitude));
    if (whitener.rebuilt()) {
      a = a0;
      b = energy;
      downdate(whitener.z(), bank, rw, a, b);
    } else {
      downdate(block, bank, rw, a, b);
    }
    result.detections.push_back(det);
    result.interference.push_back(std::move(q));
  }
  result.whitener_fallbacks = whitener.fallbacks();
  return result;
}

namespace {

struct Probe {
  double delay;
  double doppler;
  double metric;
  cdouble amplitude;
};

Probe evaluate(const DetectorContext& ctx, const CMatrix& z, const CVector& rw, const CVector& zr,
               double delay, double doppler) {
  const CVector x = ctx.whitened_signature(delay, doppler);
  cdouble a = simd::cdot(as_span(x), as_span(rw));
  double b = simd::norm2(as_span(x));
  const double energy = b;
  if (z.cols() > 0) {
    const CVector c = z.adjoint() * x;
    a -= c.dot(zr);
    b -= c.squaredNorm();
  }
  const double m = guarded_metric(a, b, energy);
  return {delay, doppler, m, m > 0.0 ? a / b : cdouble{}};
}

RefinedEstimate search_region(const DetectorContext& ctx, const CMatrix& z, const CVector& rw,
                              const Detection& det, const RefineOptions& options) {
  const waveform::SearchSpace& s = ctx.space();
  const double step = options.delay_step > 0.0 ? options.delay_step : ctx.probe().symbol_period() / 512.0;
  const CVector zr = z.cols() > 0 ? CVector(z.adjoint() * rw) : CVector();
  const Interval dly = clip(det.delay, det.delay_extent, s.delay_min, s.delay_max);

  std::vector<double> dopplers{det.doppler};
  if (ctx.grid().n_doppler > 0 && options.doppler_points > 1) {
    const Interval dop = clip(det.doppler, det.doppler_extent, -s.doppler_max, s.doppler_max);
    for (int k = 0; k < options.doppler_points; ++k) {
      dopplers.push_back(dop.lo + (dop.hi - dop.lo) * k / (options.doppler_points - 1));
    }
  }

  Probe best = evaluate(ctx, z, rw, zr, det.delay, det.doppler);
  auto consider = [&](double tau, double nu) {
    const Probe p = evaluate(ctx, z, rw, zr, tau, nu);
    if (p.metric > best.metric) best = p;
  };
  // Fine lattice anchored at the coarse estimate; scanned coarse-to-fine.
  const double coarse = 16.0 * step;
  const long k_lo = static_cast<long>(std::ceil((dly.lo - det.delay) / coarse - 1e-9));
  const long k_hi = static_cast<long>(std::floor((dly.hi - det.delay) / coarse + 1e-9));
  for (double nu : dopplers) {
    for (long k = k_lo; k <= k_hi; ++k) {
      if (k != 0 || nu != det.doppler) consider(det.delay + k * coarse, nu);
    }
  }
  const double center = best.delay;
  const double nu = best.doppler;
  for (int k = -15; k <= 15; ++k) {
    const double tau = center + k * step;
    if (k == 0 || tau < dly.lo - 1e-9 * step || tau > dly.hi + 1e-9 * step) continue;
    consider(tau, nu);
  }
  return {best.amplitude, best.delay, best.doppler, best.metric};
}

}  // namespace

void refine(const DetectorContext& ctx, const CVector& r, IicResult& result,
            const RefineOptions& options) {
  const CVector rw = ctx.whiten(r);
  const std::size_t n = result.detections.size();
  for (std::size_t p = 0; p < n; ++p) {
    InterferenceWhitener excl(ctx.samples());
    for (std::size_t k = 0; k < n; ++k) {
      if (k != p) excl.add(result.interference[k], std::norm(result.detections[k].amplitude));
    }
    result.detections[p].refined = search_region(ctx, excl.z(), rw, result.detections[p], options);
  }
}

void refine_single(const DetectorContext& ctx, const CVector& r, Detection& detection,
                   const RefineOptions& options) {
  const CVector rw = ctx.whiten(r);
  detection.refined = search_region(ctx, CMatrix(ctx.samples(), 0), rw, detection, options);
}

}  // namespace oppradar::detect
