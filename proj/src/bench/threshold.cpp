// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

#include "oppradar/bench.hpp"
#include "oppradar/parallel.hpp"
#include "oppradar/random.hpp"

namespace oppradar::bench {

namespace {

constexpr double kZ95 = 1.959963984540054;
// Stephens' 1% point for the modified KS statistic of an exponential fit
// with estimated scale.
constexpr double kKsCritical = 1.308;

void sort_descending(std::vector<double>& v) { std::sort(v.begin(), v.end(), std::greater<>()); }

Threshold direct_sorted(const std::vector<double>& x, double pfa) {
  const std::size_t n = x.size();
  Threshold t;
  t.trials = n;
  const auto k = static_cast<std::size_t>(std::ceil(n * pfa - 1e-9));
  if (k == 0) {
    t.gamma = x.front();
  } else if (k >= n) {
    t.gamma = x.back();
  } else {
    t.gamma = 0.5 * (x[k - 1] + x[k]);
  }
  t.pfa = empirical_pfa(x, t.gamma);
  const double sd = std::sqrt(n * pfa * (1.0 - pfa));
  const auto lo_idx = static_cast<long>(std::floor(k - kZ95 * sd));
  const auto hi_idx = static_cast<long>(std::ceil(k + kZ95 * sd));
  t.gamma_high = x[static_cast<std::size_t>(std::clamp(lo_idx - 1, 0L, static_cast<long>(n) - 1))];
  t.gamma_low = x[static_cast<std::size_t>(std::clamp(hi_idx, 0L, static_cast<long>(n) - 1))];
  t.unreliable = k == 0 || kZ95 * std::sqrt((1.0 - pfa) / (n * pfa)) > 0.5;
  return t;
}

}  // namespace

BinomialInterval binomial_ci(std::size_t k, std::size_t n) {
  if (n == 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n;
  const double z2 = kZ95 * kZ95;
  const double den = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / den;
  const double half = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

std::vector<double> null_maxima(const detect::DetectorContext& ctx, std::size_t trials,
                                std::uint64_t seed, unsigned workers) {
  std::vector<double> out(trials);
  parallel_for(trials, workers, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    const CVector w = ctx.noise().sample(rng);
    out[i] = detect::glrt_metrics(ctx, ctx.whiten(w)).maxCoeff();
  });
  return out;
}

double empirical_pfa(std::span<const double> values, double gamma) {
  if (values.empty()) return 0.0;
  const auto k = std::count_if(values.begin(), values.end(), [&](double v) { return v > gamma; });
  return static_cast<double>(k) / values.size();
}

Threshold calibrate_threshold(std::vector<double> maxima, double pfa) {
  if (maxima.empty()) throw std::invalid_argument("calibrate_threshold: no null trials");
  if (!(pfa > 0.0 && pfa < 1.0)) throw std::invalid_argument("calibrate_threshold: pfa must lie in (0, 1)");
  sort_descending(maxima);
  Threshold t = direct_sorted(maxima, pfa);
  if (t.unreliable) {
    t.note = "trial count too small for the requested Pfa: confidence interval wider than +-50%";
  }
  return t;
}

Threshold calibrate_threshold_evt(std::vector<double> maxima, double pfa, double tail_fraction) {
  if (maxima.empty()) throw std::invalid_argument("calibrate_threshold_evt: no null trials");
  if (!(pfa > 0.0 && pfa < 1.0)) throw std::invalid_argument("calibrate_threshold_evt: pfa must lie in (0, 1)");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw std::invalid_argument("calibrate_threshold_evt: tail fraction must lie in (0, 1]");
  }
  sort_descending(maxima);
  const std::size_t n = maxima.size();
  const auto m = static_cast<std::size_t>(std::floor(tail_fraction * n));
  if (pfa >= tail_fraction || m >= n) return direct_sorted(maxima, pfa);
  if (m < 10) throw std::invalid_argument("calibrate_threshold_evt: fewer than 10 tail samples");

  const double u = maxima[m];
  std::vector<double> excess(m);
  for (std::size_t i = 0; i < m; ++i) excess[i] = maxima[i] - u;
  const double beta = std::accumulate(excess.begin(), excess.end(), 0.0) / m;

  std::sort(excess.begin(), excess.end());
  double d = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = 1.0 - std::exp(-excess[i] / beta);
    d = std::max({d, (i + 1.0) / m - f, f - static_cast<double>(i) / m});
  }
  const double sm = std::sqrt(static_cast<double>(m));
  const double modified = (d - 0.2 / m) * (sm + 0.26 + 0.5 / sm);

  const double f_eff = static_cast<double>(m) / n;
  Threshold t;
  t.trials = n;
  t.evt = true;
  t.ks_statistic = modified;
  if (modified > kKsCritical) {
    t = direct_sorted(maxima, pfa);
    t.refused = true;
    t.ks_statistic = modified;
    t.note = "exponential tail fit rejected (KS); increase the number of null trials";
    return t;
  }
  const double scale = std::log(f_eff / pfa);
  t.gamma = u + beta * scale;
  t.pfa = pfa;
  t.gamma_low = t.gamma - kZ95 * beta / sm * scale;
  t.gamma_high = t.gamma + kZ95 * beta / sm * scale;
  return t;
}

Threshold calibrate(const detect::DetectorContext& ctx, double pfa, std::size_t trials,
                    std::uint64_t seed, CalibrationMethod method, double tail_fraction,
                    unsigned workers) {
  std::vector<double> maxima = null_maxima(ctx, trials, seed, workers);
  switch (method) {
    case CalibrationMethod::direct: return calibrate_threshold(std::move(maxima), pfa);
    case CalibrationMethod::evt: return calibrate_threshold_evt(std::move(maxima), pfa, tail_fraction);
    case CalibrationMethod::automatic: break;
  }
  Threshold direct = calibrate_threshold(maxima, pfa);
  if (!direct.unreliable) return direct;
  if (std::floor(tail_fraction * trials) < 10) {
    direct.note = "too few null trials for a tail fit; direct quantile is unreliable at this Pfa";
    return direct;
  }
  Threshold evt = calibrate_threshold_evt(std::move(maxima), pfa, tail_fraction);
  if (!evt.refused) {
    evt.note = "EVT extrapolation engaged: " + std::to_string(trials) +
               " null trials are too few for a direct quantile at this Pfa";
  }
  return evt;
}

std::vector<Fd0Point> fd0_curve(const System& system, const detect::DetectorContext& ctx,
                                const DetectorSettings& settings, std::span<const double> pfas,
                                std::size_t trials, std::uint64_t seed, unsigned workers) {
  if (pfas.empty()) return {};
  std::vector<double> maxima = null_maxima(ctx, trials, seed, workers);
  std::vector<double> sorted = maxima;
  sort_descending(sorted);
  std::vector<double> gammas;
  for (double p : pfas) gammas.push_back(direct_sorted(sorted, p).gamma);
  const double lowest = *std::min_element(gammas.begin(), gammas.end());

  // Metric of every detection at the lowest threshold. For the iterative
  // detector the run at a higher threshold is a prefix of this sequence; for
  // the peak detector the peak set does not depend on the threshold.
  std::vector<std::vector<double>> metrics(trials);
  DetectorSettings s = settings;
  s.threshold = lowest;
  s.refine = false;
  parallel_for(trials, workers, [&](std::size_t i) {
    if (!(maxima[i] > lowest)) return;
    Rng rng = make_stream(seed, i);
    const CVector w = ctx.noise().sample(rng);
    for (const auto& d : run_detector(system, ctx, w, s)) metrics[i].push_back(d.metric);
  });

  std::vector<Fd0Point> out;
  for (std::size_t k = 0; k < pfas.size(); ++k) {
    const double g = gammas[k];
    std::size_t alarms = 0, total = 0;
    for (const auto& seq : metrics) {
      std::size_t count = 0;
      if (settings.kind == DetectorKind::iic) {
        while (count < seq.size() && seq[count] > g) ++count;
      } else {
        count = static_cast<std::size_t>(std::count_if(seq.begin(), seq.end(), [&](double v) { return v > g; }));
      }
      alarms += count > 0;
      total += count;
    }
    out.push_back({pfas[k], g, static_cast<double>(alarms) / trials, static_cast<double>(total) / trials});
  }
  return out;
}

}  // namespace oppradar::bench
