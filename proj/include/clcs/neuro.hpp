#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clcs/autodiff.hpp"
#include "clcs/nnet.hpp"
#include "clcs/pid.hpp"
#include "clcs/sim.hpp"
#include "clcs/surrogate.hpp"

namespace clcs::neuro {

/// Linear auxiliary output attached to the last hidden layer of a network;
/// predicts the next-step disturbance.
struct AuxHead {
  std::vector<double> w;
  double b = 0.0;
  double target_mean = 0.0;
  double target_std = 1.0;

  double predict(std::span<const double> last_hidden) const;
};

AuxHead make_aux_head(std::size_t width, std::uint64_t seed);

// ---------------------------------------------------------------------------

/// Network that sets the control variable directly. Features are
///   [w(k), y(k) .. y(k-m+1), u(k-1) .. u(k-m)]
/// and the output is squashed into the actuator range:
///   u = u_min + (u_max - u_min) (tanh(z) + 1) / 2.
class NeuralController final : public sim::Controller {
 public:
  NeuralController() = default;
  NeuralController(nnet::Mlp net, std::size_t history, double u_min, double u_max);
  static NeuralController make(const std::vector<std::size_t>& hidden, std::size_t history,
                               double u_min, double u_max, std::uint64_t seed);

  static std::size_t feature_count(std::size_t history) { return 1 + 2 * history; }

  double step(const sim::ControlContext& ctx) override;
  void reset() override;

  template <class S>
  S squash(const S& z) const {
    using std::tanh;
    using ad::tanh;
    return S(u_min_) + (tanh(z) + 1.0) * (0.5 * (u_max_ - u_min_));
  }

  /// Feature row from explicit histories (most recent first).
  template <class S>
  std::vector<S> features(const S& w, std::span<const S> y_recent,
                          std::span<const S> u_recent) const {
    std::vector<S> f;
    f.reserve(feature_count(history_));
    f.push_back(w);
    for (std::size_t i = 0; i < history_; ++i) f.push_back(i < y_recent.size() ? y_recent[i] : S(0.0));
    for (std::size_t i = 0; i < history_; ++i) f.push_back(i < u_recent.size() ? u_recent[i] : S(0.0));
    return f;
  }

  /// Raw feature row -> pre-squash network output (normalises first).
  double raw_output(std::span<const double> features) const;
  double control(std::span<const double> features) const { return squash(raw_output(features)); }

  /// Throws feature_unavailable when no auxiliary head is attached.
  double predict_disturbance(std::span<const double> features) const;

  nnet::Mlp& net() { return net_; }
  const nnet::Mlp& net() const { return net_; }
  nnet::Normalizer& feature_norm() { return feature_norm_; }
  const nnet::Normalizer& feature_norm() const { return feature_norm_; }
  std::optional<AuxHead>& aux() { return aux_; }
  const std::optional<AuxHead>& aux() const { return aux_; }
  std::size_t history() const { return history_; }
  double u_min() const { return u_min_; }
  double u_max() const { return u_max_; }

 private:
  nnet::Mlp net_;
  nnet::Normalizer feature_norm_;
  std::size_t history_ = 4;
  double u_min_ = -1.0, u_max_ = 1.0;
  std::optional<AuxHead> aux_;
  std::vector<double> y_recent_, u_recent_;
};

// ---------------------------------------------------------------------------

struct GainBounds {
  double lo = 0.0;
  double hi = 1.0;
};

/// Sliding-window features: [e(k), e(k)-e(k-1), mean e, mean |e|, y(k),
/// u(k-1)] over the last `window` samples.
template <class S>
std::vector<S> scheduler_features(std::span<const S> e_recent, const S& y, const S& u_prev,
                                  std::size_t window) {
  using ad::abs;
  using std::abs;
  const std::size_t n = std::min(window, e_recent.size());
  S mean = 0.0, mean_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean = mean + e_recent[i];
    mean_abs = mean_abs + abs(e_recent[i]);
  }
  const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
  const S e0 = e_recent.empty() ? S(0.0) : e_recent[0];
  const S e1 = e_recent.size() > 1 ? e_recent[1] : e0;
  return {e0, e0 - e1, mean * inv, mean_abs * inv, y, u_prev};
}

/// Maps a feature window to bounded PID gains:
///   g_i = lo_i + sigmoid(z_i) (hi_i - lo_i).
class GainScheduler {
 public:
  static constexpr std::size_t kFeatureCount = 6;

  GainScheduler() = default;
  GainScheduler(nnet::Mlp net, std::array<GainBounds, 3> bounds, std::size_t window = 10);
  static GainScheduler make(const std::vector<std::size_t>& hidden,
                            std::array<GainBounds, 3> bounds, std::uint64_t seed,
                            std::size_t window = 10);

  control::GainTriple<double> gains(std::span<const double> features) const;
  double predict_disturbance(std::span<const double> features) const;

  template <class S>
  control::GainTriple<S> scale(std::span<const S> z) const {
    using ad::sigmoid;
    const auto g = [&](std::size_t i) {
      return S(bounds_[i].lo) + sigmoid(z[i]) * (bounds_[i].hi - bounds_[i].lo);
    };
    return {g(0), g(1), g(2)};
  }

  nnet::Mlp& net() { return net_; }
  const nnet::Mlp& net() const { return net_; }
  nnet::Normalizer& feature_norm() { return feature_norm_; }
  const nnet::Normalizer& feature_norm() const { return feature_norm_; }
  const std::array<GainBounds, 3>& bounds() const { return bounds_; }
  std::size_t window() const { return window_; }
  std::optional<AuxHead>& aux() { return aux_; }
  const std::optional<AuxHead>& aux() const { return aux_; }

 private:
  nnet::Mlp net_;
  nnet::Normalizer feature_norm_;
  std::array<GainBounds, 3> bounds_{};
  std::size_t window_ = 10;
  std::optional<AuxHead> aux_;
};

inline double sigmoid(double x) { return ad::sigmoid(x); }

/// Bounded gains for the current feature window.
control::GainTriple<double> scheduler_step(const GainScheduler& gs,
                                           std::span<const double> features);

/// PID whose gains are rewritten by a scheduler before every step.
class ScheduledPidController final : public sim::Controller {
 public:
  ScheduledPidController(GainScheduler gs, control::PidGains base)
      : gs_(std::move(gs)), base_(base) {}

  double step(const sim::ControlContext& ctx) override;
  void reset() override;
  std::vector<std::string> channel_names() const override { return {"kp", "ki", "kd"}; }
  void channel_values(std::vector<double>& out) const override;

 private:
  GainScheduler gs_;
  control::PidGains base_;
  control::PidState state_;
  std::vector<double> e_recent_;
  double u_prev_ = 0.0;
  control::GainTriple<double> last_{0.0, 0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Static AI gain tuning

struct GainSearchBounds {
  GainBounds kp{0.0, 5.0};
  GainBounds ki{0.0, 5.0};
  GainBounds kd{0.0, 2.0};
};

struct StaticTuneOptions {
  GainSearchBounds bounds;
  std::size_t budget = 500;  ///< cost evaluations
  double rho = 0.01;         ///< weight of control effort (total variation of u)
  std::uint64_t seed = 0;
  std::optional<std::array<double, 3>> initial;
};

struct StaticTuneResult {
  control::PidGains gains;
  double cost = 0.0;
  std::vector<double> cost_trace;  ///< best cost after each evaluation
  std::size_t evaluations = 0;
};

using GainCost = std::function<double(const std::array<double, 3>&)>;

/// Bounded Nelder-Mead with seeded restarts over (kp, ki, kd). Throws
/// tuning_failed when no evaluation returned a finite cost.
StaticTuneResult nelder_mead_tune(const GainCost& cost, const StaticTuneOptions& opts);

struct Episode {
  sim::ReferenceSpec reference;
  sim::DisturbanceSpec disturbance;
  double horizon = 10.0;
  std::vector<sim::GainStep> gain_steps;
};

/// Closed-loop run of `controller` against a surrogate plant: the surrogate
/// starts at rest and is stepped at its own sample period.
sim::Trajectory simulate_surrogate(const surrogate::NarxModel& model, sim::Controller& controller,
                                   const Episode& episode, double u_min, double u_max,
                                   std::uint64_t seed = 0);

/// IAE + rho * total variation of u.
double episode_cost(const sim::Trajectory& traj, double rho);

/// Minimises the mean episode cost of a PID with `base` structure and limits,
/// simulated against the surrogate.
StaticTuneResult tune_static_ai(const surrogate::NarxModel& model,
                                const std::vector<Episode>& episodes,
                                const control::PidGains& base, const StaticTuneOptions& opts);

/// Same search against a simulated plant.
StaticTuneResult tune_static_ai(const sim::PlantModel& plant, const std::vector<Episode>& episodes,
                                const control::PidGains& base, const StaticTuneOptions& opts,
                                double dt);

// ---------------------------------------------------------------------------
// Imitation learning

struct DualDatasetMix {
  std::vector<sim::Trajectory> a;  ///< unbiased coverage runs
  std::vector<sim::Trajectory> b;  ///< realistic operation runs
  double lambda = 0.5;             ///< share of A samples per batch
};

/// Seeded batch composition. Each batch takes round-robin-diffused counts so
/// the cumulative A share tracks lambda exactly; indices within each dataset
/// follow reshuffled permutations.
class MixedBatchSampler {
 public:
  struct Pick {
    bool from_a;
    std::size_t index;
  };

  MixedBatchSampler(std::size_t n_a, std::size_t n_b, double lambda, std::size_t batch,
                    std::uint64_t seed);
  /// One epoch of n_a + n_b picks split into batches.
  std::vector<std::vector<Pick>> next_epoch();

 private:
  std::size_t next_index(bool from_a);

  std::size_t n_a_, n_b_, batch_;
  double lambda_;
  Rng rng_;
  std::vector<std::size_t> perm_a_, perm_b_;
  std::size_t pos_a_ = 0, pos_b_ = 0;
  double carry_ = 0.0;
};

struct ImitationOptions {
  nnet::TrainConfig train;
  double beta = 0.1;          ///< auxiliary disturbance-head weight
  double val_fraction = 0.25;  ///< tail of every teacher run held out
};

struct ImitationReport {
  double val_rmse_a = 0.0;  ///< control units
  double val_rmse_b = 0.0;
  double aux_val_rmse = 0.0;
  std::vector<double> a_fraction_per_epoch;
  nnet::TrainHistory history;
};

/// Teacher rows from a closed-loop trajectory: controller features at k and
/// the teacher's u(k); the auxiliary target is d(k+1).
void teacher_rows(const NeuralController& nc, const sim::Trajectory& traj, nnet::Matrix& x,
                  std::vector<double>& u, std::vector<double>& d_next);

ImitationReport train_imitation(NeuralController& nc, const DualDatasetMix& mix,
                                const ImitationOptions& opts);

// ---------------------------------------------------------------------------
// Backpropagation through time

struct BpttEpisode {
  std::vector<double> w;         ///< reference per step; H = w.size()
  std::vector<double> gain;      ///< plant input multiplier per step (empty = 1)
  std::vector<double> d_input;   ///< input-additive disturbance (empty = 0)
};

struct BpttOptions {
  nnet::TrainConfig train;  ///< learning rate, epochs, batch (episodes), seed
  double rho = 0.01;        ///< weight of mean squared control increment
  double clip = 1.0;        ///< global gradient-norm clip
  std::size_t max_horizon = 200;
};

struct BpttReport {
  std::vector<double> loss_history;  ///< mean episode loss per epoch
  std::size_t skipped = 0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Rollout loss mean((w - y)^2) + rho * mean(du^2) and its gradient w.r.t.
/// the controller parameters, through the surrogate.
LossGrad bptt_loss_grad(const NeuralController& nc, const surrogate::NarxModel& model,
                        const BpttEpisode& ep, double rho);
double bptt_loss(const NeuralController& nc, const surrogate::NarxModel& model,
                 const BpttEpisode& ep, double rho);
LossGrad bptt_loss_grad(const GainScheduler& gs, const control::PidGains& base,
                        const surrogate::NarxModel& model, const BpttEpisode& ep, double rho,
                        double dt);
double bptt_loss(const GainScheduler& gs, const control::PidGains& base,
                 const surrogate::NarxModel& model, const BpttEpisode& ep, double rho, double dt);

/// Fills default feature normalisation (zero mean, reference/actuator
/// scale) when the controller has none.
void default_feature_norm(NeuralController& nc, const std::vector<BpttEpisode>& episodes);
void default_feature_norm(GainScheduler& gs, const std::vector<BpttEpisode>& episodes);

BpttReport train_bptt(NeuralController& nc, const surrogate::NarxModel& model,
                      const std::vector<BpttEpisode>& episodes, const BpttOptions& opts);
BpttReport train_bptt(GainScheduler& gs, const control::PidGains& base,
                      const surrogate::NarxModel& model, const std::vector<BpttEpisode>& episodes,
                      const BpttOptions& opts);

/// Least-squares fit of a scheduler's auxiliary head on recorded runs with
/// the trunk frozen. The last `val_fraction` of each run is held out; returns
/// the held-out RMSE of the next-step disturbance.
double fit_disturbance_head(GainScheduler& gs, const std::vector<sim::Trajectory>& runs,
                            double val_fraction = 0.25);

// ---------------------------------------------------------------------------
// Persistence: weight file + JSON sidecar at path + ".json"

void save_controller(const std::string& path, const NeuralController& nc,
                     const std::string& extra_json = "{}");
NeuralController load_controller(const std::string& path);
void save_scheduler(const std::string& path, const GainScheduler& gs,
                    const control::PidGains& base);
std::pair<GainScheduler, control::PidGains> load_scheduler(const std::string& path);

}  // namespace clcs::neuro
