#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "clcs/nnet.hpp"
#include "clcs/sim.hpp"

namespace clcs::metrics {

struct StepMetrics {
  double overshoot = 0.0;        ///< % of step size
  double rise_time = 0.0;        ///< 10-90 %, s; NaN when never reached
  double settling_time = 0.0;    ///< s after the step; NaN when not settled
  bool settled = false;
  double steady_state_error = 0.0;  ///< signed, w_final - y_final
  double iae = 0.0;
  double ise = 0.0;
  double itae = 0.0;
  double total_variation_u = 0.0;
  double mean_abs_u = 0.0;
};

/// Step-response metrics of a trajectory whose reference is a single step
/// (or constant, in which case y[0] is the initial level). Integrals use the
/// trapezoid rule on the uniform grid; ITAE weights by time since the step.
StepMetrics compute_step_metrics(const sim::Trajectory& traj, double band = 0.02);

/// Trapezoidal integral of |w - y| over the whole trajectory.
double iae(const sim::Trajectory& traj);

struct LabeledTrajectory {
  std::string label;
  sim::Trajectory trajectory;
};

struct ComparisonRow {
  std::string label;
  StepMetrics metrics;
};

/// Metrics per label sorted by IAE (ties by label). Throws incomparable when
/// references or disturbances differ.
std::vector<ComparisonRow> compare(const std::vector<LabeledTrajectory>& entries,
                                   double band = 0.02);

/// Columns: label,overshoot_pct,rise_time_s,settling_time_s,settled,
/// steady_state_error,iae,ise,itae,total_variation_u,mean_abs_u
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);
void write_comparison_table(std::ostream& os, const std::vector<ComparisonRow>& rows);
void write_metrics_csv(std::ostream& os, const StepMetrics& m);

struct LatencyStats {
  std::vector<double> timings_ms;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
};

/// Single-inference wall times on a monotonic clock; 100 warm-up passes are
/// discarded. Throws invalid_argument for trials < 1000.
LatencyStats measure_latency(const nnet::Mlp& net, std::size_t trials = 1000);

}  // namespace clcs::metrics
