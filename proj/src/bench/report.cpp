// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "oppradar/bench.hpp"

namespace oppradar::bench {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n ? sum / n : kNaN; }
  double root() const { return std::sqrt(value()); }
};

const DetectionRecord* reference_hit(const TrialRecord& rec) {
  for (const auto& d : rec.detections) {
    if (d.truth == 0) return &d;
  }
  return nullptr;
}

}  // namespace

std::vector<RangePointSummary> pd_rmse_report(const System& system, const CampaignResult& result) {
  (void)system;
  const std::size_t n = result.points.size();
  std::vector<RangePointSummary> rows(n);
  std::vector<Mean> coarse(n), refined(n), amp(n), emcb(n), amp_crb(n);
  std::vector<std::size_t> falses(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    rows[p].range_m = result.points[p].x;
    rows[p].detector = result.points[p].detector;
    rows[p].mean_snr_db = result.points[p].snr_db;
  }
  for (const auto& rec : result.records) {
    if (rec.point >= n) throw std::out_of_range("pd_rmse_report: record refers to an unknown point");
    auto& row = rows[rec.point];
    ++row.trials;
    for (const auto& d : rec.detections) falses[rec.point] += d.truth < 0;
    const DetectionRecord* hit = reference_hit(rec);
    if (!hit || rec.truth.empty()) continue;
    const TruthRecord& truth = rec.truth[0];
    ++row.hits;
    coarse[rec.point].add(std::pow(hit->range_m - truth.range_m, 2));
    const double mag = std::abs(truth.amplitude);
    if (!std::isnan(hit->refined_range_m)) {
      refined[rec.point].add(std::pow(hit->refined_range_m - truth.range_m, 2));
      amp[rec.point].add(std::pow((std::abs(hit->refined_amplitude) - mag) / mag, 2));
    } else {
      amp[rec.point].add(std::pow((std::abs(hit->amplitude) - mag) / mag, 2));
    }
    if (!std::isnan(truth.crb_range_var)) emcb[rec.point].add(truth.crb_range_var);
    if (!std::isnan(truth.crb_amplitude_var)) amp_crb[rec.point].add(truth.crb_amplitude_var / (mag * mag));
  }
  for (std::size_t p = 0; p < n; ++p) {
    auto& row = rows[p];
    row.pd = row.trials ? static_cast<double>(row.hits) / row.trials : kNaN;
    row.pd_ci = binomial_ci(row.hits, row.trials);
    row.coarse_rmse_m = coarse[p].root();
    row.refined_rmse_m = refined[p].root();
    row.amplitude_nrmse = amp[p].root();
    row.emcb_m = emcb[p].root();
    row.crb_amplitude_rel = amp_crb[p].root();
    row.false_per_trial = row.trials ? static_cast<double>(falses[p]) / row.trials : kNaN;
  }
  return rows;
}

std::vector<ResolutionSummary> resolution_report(const CampaignResult& result) {
  const std::size_t n = result.points.size();
  std::vector<ResolutionSummary> rows(n);
  std::vector<std::size_t> trials(n, 0), detections(n, 0);
  std::vector<Mean> err(n);
  for (std::size_t p = 0; p < n; ++p) {
    rows[p].detector = result.points[p].detector;
    rows[p].grid_step_T = result.points[p].grid_step_T;
    rows[p].separation_m = result.points[p].x;
  }
  for (const auto& rec : result.records) {
    if (rec.point >= n) throw std::out_of_range("resolution_report: record refers to an unknown point");
    ++trials[rec.point];
    detections[rec.point] += rec.detections.size();
    for (const auto& d : rec.detections) {
      if (d.truth < 0 || static_cast<std::size_t>(d.truth) >= rec.truth.size()) continue;
      const double r = std::isnan(d.refined_range_m) ? d.range_m : d.refined_range_m;
      err[rec.point].add(std::pow(r - rec.truth[static_cast<std::size_t>(d.truth)].range_m, 2));
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    rows[p].mean_detections = trials[p] ? static_cast<double>(detections[p]) / trials[p] : kNaN;
    rows[p].refined_rmse_m = err[p].root();
  }
  return rows;
}

double crossing_from_right(std::span<const double> x, std::span<const double> y, double level) {
  if (x.size() != y.size()) throw std::invalid_argument("crossing_from_right: size mismatch");
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const std::size_t hi = order[k - 1], lo = order[k];
    if (y[hi] >= level && y[lo] < level) {
      const double t = (y[hi] - level) / (y[hi] - y[lo]);
      return x[hi] + t * (x[lo] - x[hi]);
    }
  }
  return kNaN;
}

// ------------------------------------------------------------------ records
//
// One file per campaign:
//   # kind: <kind>
//   P,<point>,<x>,<grid_step_T>,<detector>,<threshold>,<snr_db>
//   T,<point>,<trial>,<seed>
//   G,<index>,<range_m>,<re>,<im>,<crb_range_var>,<crb_amplitude_var>
//   D,<iteration>,<range_m>,<refined_range_m>,<re>,<im>,<refined_re>,<refined_im>,<metric>,<truth>
// G and D rows belong to the preceding T row.

namespace {

void put(std::ostream& os, double v) {
  if (std::isnan(v)) {
    os << "nan";
  } else {
    os << v;
  }
}

double get(const std::string& s, std::size_t line) {
  if (s == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("records line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

void write_records_csv(std::ostream& os, const CampaignResult& result) {
  const auto old = os.precision(17);
  os << "# kind: " << result.kind << '\n';
  for (std::size_t p = 0; p < result.points.size(); ++p) {
    const auto& pt = result.points[p];
    os << "P," << p << ',';
    put(os, pt.x);
    os << ',';
    put(os, pt.grid_step_T);
    os << ',' << pt.detector << ',';
    put(os, pt.threshold);
    os << ',';
    put(os, pt.snr_db);
    os << '\n';
  }
  for (const auto& rec : result.records) {
    os << "T," << rec.point << ',' << rec.trial << ',' << rec.seed << '\n';
    for (std::size_t i = 0; i < rec.truth.size(); ++i) {
      const auto& t = rec.truth[i];
      os << "G," << i << ',';
      for (double v : {t.range_m, t.amplitude.real(), t.amplitude.imag(), t.crb_range_var}) {
        put(os, v);
        os << ',';
      }
      put(os, t.crb_amplitude_var);
      os << '\n';
    }
    for (const auto& d : rec.detections) {
      os << "D," << d.iteration << ',';
      for (double v : {d.range_m, d.refined_range_m, d.amplitude.real(), d.amplitude.imag(),
                       d.refined_amplitude.real(), d.refined_amplitude.imag(), d.metric}) {
        put(os, v);
        os << ',';
      }
      os << d.truth << '\n';
    }
  }
  os.precision(old);
}

CampaignResult read_records_csv(std::istream& is) {
  CampaignResult result;
  std::string line;
  std::size_t no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("records line " + std::to_string(no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++no;
    if (line.empty()) continue;
    if (line.rfind("# kind:", 0) == 0) {
      result.kind = line.substr(7);
      result.kind.erase(0, result.kind.find_first_not_of(' '));
      continue;
    }
    if (line[0] == '#') continue;
    const auto f = split(line);
    const std::string& tag = f[0];
    if (tag == "P") {
      if (f.size() != 7) fail("P row needs 7 fields");
      result.points.push_back({get(f[2], no), get(f[3], no), f[4], get(f[5], no), get(f[6], no)});
    } else if (tag == "T") {
      if (f.size() != 4) fail("T row needs 4 fields");
      TrialRecord rec;
      rec.point = std::stoull(f[1]);
      rec.trial = std::stoull(f[2]);
      rec.seed = std::stoull(f[3]);
      result.records.push_back(std::move(rec));
    } else if (tag == "G") {
      if (f.size() != 7) fail("G row needs 7 fields");
      if (result.records.empty()) fail("G row before any T row");
      result.records.back().truth.push_back(
          {get(f[2], no), {get(f[3], no), get(f[4], no)}, get(f[5], no), get(f[6], no)});
    } else if (tag == "D") {
      if (f.size() != 10) fail("D row needs 10 fields");
      if (result.records.empty()) fail("D row before any T row");
      DetectionRecord d;
      d.iteration = std::stoi(f[1]);
      d.range_m = get(f[2], no);
      d.refined_range_m = get(f[3], no);
      d.amplitude = {get(f[4], no), get(f[5], no)};
      d.refined_amplitude = {get(f[6], no), get(f[7], no)};
      d.metric = get(f[8], no);
      d.truth = std::stoi(f[9]);
      result.records.back().detections.push_back(d);
    } else {
      fail("unknown row type '" + tag + "'");
    }
  }
  return result;
}

void write_range_report_csv(std::ostream& os, std::span<const RangePointSummary> rows) {
  const auto old = os.precision(10);
  os << "range_m,detector,trials,hits,pd,pd_low,pd_high,coarse_rmse_m,refined_rmse_m,amplitude_nrmse,"
        "emcb_m,crb_amplitude_rel,false_per_trial,mean_snr_db\n";
  for (const auto& r : rows) {
    os << r.range_m << ',' << r.detector << ',' << r.trials << ',' << r.hits;
    for (double v : {r.pd, r.pd_ci.low, r.pd_ci.high, r.coarse_rmse_m, r.refined_rmse_m, r.amplitude_nrmse,
                     r.emcb_m, r.crb_amplitude_rel, r.false_per_trial, r.mean_snr_db}) {
      os << ',';
      put(os, v);
    }
    os << '\n';
  }
  os.precision(old);
}

void write_resolution_report_csv(std::ostream& os, std::span<const ResolutionSummary> rows) {
  const auto old = os.precision(10);
  os << "detector,grid_step_T,separation_m,mean_detections,refined_rmse_m\n";
  for (const auto& r : rows) {
    os << r.detector << ',' << r.grid_step_T << ',' << r.separation_m << ',';
    put(os, r.mean_detections);
    os << ',';
    put(os, r.refined_rmse_m);
    os << '\n';
  }
  os.precision(old);
}

void write_fd0_csv(std::ostream& os, std::span<const Fd0Point> rows) {
  const auto old = os.precision(10);
  os << "pfa_target,gamma,pfa,fd0,fd0_over_pfa\n";
  for (const auto& r : rows) {
    os << r.pfa_target << ',' << r.gamma << ',' << r.pfa << ',' << r.fd0 << ',';
    put(os, r.pfa > 0.0 ? r.fd0 / r.pfa : kNaN);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace oppradar::bench
