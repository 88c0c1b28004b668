#include "clcs/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "clcs/error.hpp"

namespace clcs::metrics {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double level_crossing(const sim::Trajectory& tr, std::size_t from, double y0, double s,
                      double level) {
  const auto& y = tr.y;
  for (std::size_t k = from + 1; k < y.size(); ++k) {
    const double r0 = (y[k - 1] - y0) / s, r1 = (y[k] - y0) / s;
    if (r0 < level && r1 >= level) {
      return tr.t[k - 1] + (level - r0) / (r1 - r0) * (tr.t[k] - tr.t[k - 1]);
    }
    if (k == from + 1 && r0 >= level) return tr.t[from];
  }
  return kNaN;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  return nnet::format_double(v);
}

}  // namespace

double iae(const sim::Trajectory& tr) {
  double s = 0.0;
  for (std::size_t k = 1; k < tr.size(); ++k) {
    s += 0.5 * (std::abs(tr.w[k] - tr.y[k]) + std::abs(tr.w[k - 1] - tr.y[k - 1])) *
         (tr.t[k] - tr.t[k - 1]);
  }
  return s;
}

StepMetrics compute_step_metrics(const sim::Trajectory& tr, double band) {
  const std::size_t n = tr.size();
  if (n < 2) throw Error(Errc::too_short, "metrics need at least two samples");
  if (!(band > 0.0)) throw Error(Errc::invalid_argument, "settling band must be > 0");
  StepMetrics m;

  std::size_t ks = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (tr.w[k] != tr.w[0]) {
      ks = k;
      break;
    }
  }
  const double w_final = tr.w.back();
  const double y0 = tr.y[ks];
  const double s = w_final - y0;
  const double t_step = tr.t[ks];

  for (std::size_t k = 1; k < n; ++k) {
    const double dt = tr.t[k] - tr.t[k - 1];
    const double e0 = tr.w[k - 1] - tr.y[k - 1], e1 = tr.w[k] - tr.y[k];
    m.iae += 0.5 * (std::abs(e0) + std::abs(e1)) * dt;
    m.ise += 0.5 * (e0 * e0 + e1 * e1) * dt;
    const double a0 = std::max(0.0, tr.t[k - 1] - t_step), a1 = std::max(0.0, tr.t[k] - t_step);
    m.itae += 0.5 * (a0 * std::abs(e0) + a1 * std::abs(e1)) * dt;
    m.total_variation_u += std::abs(tr.u[k] - tr.u[k - 1]);
  }
  for (double u : tr.u) m.mean_abs_u += std::abs(u);
  m.mean_abs_u /= static_cast<double>(n);
  m.steady_state_error = w_final - tr.y.back();

  if (s == 0.0) {
    m.rise_time = 0.0;
    m.settling_time = 0.0;
    m.settled = std::all_of(tr.y.begin() + static_cast<std::ptrdiff_t>(ks), tr.y.end(),
                            [&](double y) { return y == w_final; });
    if (!m.settled) m.settling_time = kNaN;
    return m;
  }

  double peak = 0.0;
  for (std::size_t k = ks; k < n; ++k) peak = std::max(peak, (tr.y[k] - w_final) / s);
  m.overshoot = 100.0 * peak;

  const double t10 = level_crossing(tr, ks, y0, s, 0.1);
  const double t90 = level_crossing(tr, ks, y0, s, 0.9);
  m.rise_time = (std::isnan(t10) || std::isnan(t90)) ? kNaN : t90 - t10;

  const double tol = band * std::abs(s);
  std::size_t last_out = n;
  for (std::size_t k = n; k-- > ks;) {
    if (std::abs(tr.y[k] - w_final) > tol) {
      last_out = k;
      break;
    }
  }
  if (last_out == n) {
    m.settled = true;
    m.settling_time = 0.0;
  } else if (last_out == n - 1) {
    m.settled = false;
    m.settling_time = kNaN;
  } else {
    const double e0 = std::abs(tr.y[last_out] - w_final);
    const double e1 = std::abs(tr.y[last_out + 1] - w_final);
    const double f = e0 > e1 ? (e0 - tol) / (e0 - e1) : 1.0;
    m.settled = true;
    m.settling_time = tr.t[last_out] + std::clamp(f, 0.0, 1.0) *
                                           (tr.t[last_out + 1] - tr.t[last_out]) - t_step;
  }
  return m;
}

std::vector<ComparisonRow> compare(const std::vector<LabeledTrajectory>& entries,
                                   double band) {
  std::vector<ComparisonRow> rows;
  if (entries.empty()) return rows;
  const auto& ref = entries.front().trajectory;
  for (const auto& e : entries) {
    const auto& tr = e.trajectory;
    if (tr.w != ref.w || tr.t != ref.t || tr.d != ref.d) {
      throw Error(Errc::incomparable,
                  "trajectory '" + e.label + "' has a different reference or disturbance");
    }
    rows.push_back({e.label, compute_step_metrics(tr, band)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.metrics.iae != b.metrics.iae) return a.metrics.iae < b.metrics.iae;
    return a.label < b.label;
  });
  return rows;
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << "label,overshoot_pct,rise_time_s,settling_time_s,settled,steady_state_error,"
        "iae,ise,itae,total_variation_u,mean_abs_u\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.label << ',' << fmt(m.overshoot) << ',' << fmt(m.rise_time) << ','
       << fmt(m.settling_time) << ',' << (m.settled ? 1 : 0) << ','
       << fmt(m.steady_state_error) << ',' << fmt(m.iae) << ',' << fmt(m.ise) << ','
       << fmt(m.itae) << ',' << fmt(m.total_variation_u) << ',' << fmt(m.mean_abs_u) << '\n';
  }
}

void write_metrics_csv(std::ostream& os, const StepMetrics& m) {
  write_comparison_csv(os, {{"run", m}});
}

void write_comparison_table(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  const auto flags = os.flags();
  os << std::left << std::setw(static_cast<int>(w)) << "label" << std::right
     << std::setw(12) << "overshoot%" << std::setw(10) << "rise_s" << std::setw(10)
     << "settle_s" << std::setw(12) << "IAE" << std::setw(12) << "ISE" << std::setw(12)
     << "ITAE" << std::setw(12) << "TV(u)" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << std::left << std::setw(static_cast<int>(w)) << r.label << std::right
       << std::setw(12) << m.overshoot << std::setw(10) << m.rise_time << std::setw(10)
       << m.settling_time << std::setw(12) << m.iae << std::setw(12) << m.ise
       << std::setw(12) << m.itae << std::setw(12) << m.total_variation_u << '\n';
  }
  os.flags(flags);
}

LatencyStats measure_latency(const nnet::Mlp& net, std::size_t trials) {
  if (trials < 1000) throw Error(Errc::invalid_argument, "latency needs >= 1000 trials");
  std::vector<double> x(net.input_size(), 0.1);
  nnet::ForwardCache cache;
  volatile double sink = 0.0;
  for (int i = 0; i < 100; ++i) {
    net.forward(x, cache);
    sink = sink + cache.activations.back()[0];
  }
  LatencyStats s;
  s.timings_ms.reserve(trials);
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < trials; ++i) {
    x[i % x.size()] = 0.1 + 1e-3 * static_cast<double>(i % 7);
    const auto t0 = clock::now();
    net.forward(x, cache);
    const auto t1 = clock::now();
    sink = sink + cache.activations.back()[0];
    s.timings_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::vector<double> sorted = s.timings_ms;
  std::sort(sorted.begin(), sorted.end());
  const auto q = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()))) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  s.median_ms = q(0.5);
  s.p95_ms = q(0.95);
  s.max_ms = sorted.back();
  return s;
}

}  // namespace clcs::metrics
