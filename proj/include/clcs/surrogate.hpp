#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clcs/autodiff.hpp"
#include "clcs/nnet.hpp"
#include "clcs/sim.hpp"

namespace clcs::surrogate {

/// Discrete NARX plant model:
///   y(k+1) = f(y(k) .. y(k-p+1), u(k-nk) .. u(k-nk-q+1))
/// with nk the input delay in samples (0 gives the plain lag layout).
struct NarxModel {
  nnet::Mlp net;
  std::size_t p = 2;
  std::size_t q = 2;
  std::size_t input_delay = 0;
  double dt = 0.0;
  nnet::Normalizer input_norm;
  nnet::Normalizer target_norm;

  std::size_t feature_count() const { return p + q; }
  /// Samples of past output / input needed before the first prediction.
  std::size_t output_window() const { return p; }
  std::size_t input_window() const { return q + input_delay; }

  /// Raw (unnormalised) feature row -> next output.
  double predict_features(std::span<const double> features) const;
  ad::Var predict_features(ad::Tape& tape, std::span<const ad::Var> features) const;

  /// Histories are chronological: y_hist.back() = y(k), u_hist.back() = u(k).
  /// Missing older samples count as zero.
  template <class S>
  std::vector<S> features(std::span<const S> y_hist, std::span<const S> u_hist) const {
    std::vector<S> f;
    f.reserve(p + q);
    const auto at = [](std::span<const S> h, std::size_t back) -> S {
      return back < h.size() ? h[h.size() - 1 - back] : S(0.0);
    };
    for (std::size_t i = 0; i < p; ++i) f.push_back(at(y_hist, i));
    for (std::size_t i = 0; i < q; ++i) f.push_back(at(u_hist, input_delay + i));
    return f;
  }
};

/// Rows [y(k)..y(k-p+1), u(k-nk)..u(k-nk-q+1)] -> y(k+1) for
/// k = max(p, q+nk) .. N-2, using the measured output. Normalisation stats
/// are fitted on the rows. Throws must_resample for non-uniform input.
nnet::SupervisedDataset make_regression_dataset(const sim::Trajectory& traj, std::size_t p,
                                                std::size_t q, std::size_t input_delay = 0);

/// Lag of the peak |correlation| between the output increment y(k+1)-y(k)
/// and u(k-lag), lag in [0, max_lag].
std::size_t estimate_input_delay(const sim::Trajectory& traj, std::size_t max_lag = 20);

struct FitOptions {
  std::size_t p = 2;
  std::size_t q = 2;
  long input_delay = 0;  ///< < 0 estimates it from the data
  std::vector<std::size_t> hidden{32};
  double val_fraction = 0.25;
  std::size_t rollout_steps = 50;
  nnet::TrainConfig train;
};

struct ValidationReport {
  double one_step_rmse = 0.0;
  double rollout_rmse = 0.0;
  std::size_t rollout_steps = 0;
  double output_range = 0.0;
  std::size_t input_delay = 0;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  bool resampled = false;
  std::size_t best_epoch = 0;
  /// Training-input histogram over [u_lo, u_hi] and the fraction of
  /// held-out inputs outside that range.
  double u_lo = 0.0, u_hi = 0.0;
  std::vector<std::size_t> input_histogram;
  double val_outside_fraction = 0.0;
  nnet::TrainHistory history;
};

struct FitResult {
  NarxModel model;
  ValidationReport report;
};

/// Contiguous split (last val_fraction held out), train, then evaluate
/// one-step and free-running rollout errors on the held-out block.
FitResult fit_surrogate(const sim::Trajectory& traj, const FitOptions& opts);

/// Free-running prediction. y_init / u_past are chronological histories
/// ending at y(0) and u(-1); u holds u(0..T-1). Returns y(1..T). Throws
/// rollout_diverged with the step index on a non-finite prediction.
std::vector<double> narx_rollout(const NarxModel& model, std::span<const double> y_init,
                                 std::span<const double> u_past, std::span<const double> u);

/// Mean RMSE of free-running rollouts of `steps` samples over consecutive
/// windows of `traj`, each started from recorded history.
double rollout_rmse(const NarxModel& model, const sim::Trajectory& traj, std::size_t steps);

/// Physics prediction from chronological histories (same layout as NARX).
using PhysicsFn =
    std::function<double(std::span<const double> y_hist, std::span<const double> u_hist)>;

/// physics + residual network. The residual output is scaled but not
/// shifted, so an all-zero residual network reproduces the physics term.
struct HybridModel {
  PhysicsFn physics;
  NarxModel residual;
};

double hybrid_predict(const HybridModel& model, std::span<const double> y_hist,
                      std::span<const double> u_hist);

struct HybridFit {
  HybridModel model;
  double val_rmse = 0.0;
};

HybridFit fit_hybrid(const sim::Trajectory& traj, PhysicsFn physics, const FitOptions& opts);

/// Discrete physics model of an FOPDT plant sampled with zero-order hold.
PhysicsFn fopdt_physics(double K, double tau, double dt, std::size_t delay_samples);

/// Weight file at `path` plus JSON sidecar at `path + ".json"`.
void save_narx(const std::string& path, const NarxModel& model);
NarxModel load_narx(const std::string& path);

/// Writes the report as two-row CSV (header + values).
void write_report_csv(const std::string& path, const ValidationReport& r);

}  // namespace clcs::surrogate
