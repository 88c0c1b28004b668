#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "clcs/pid.hpp"
#include "clcs/rng.hpp"
#include "clcs/sim.hpp"

namespace clcs::safety {

enum class Mode { ai, fallback };

std::string_view to_string(Mode m) noexcept;

struct Transition {
  std::size_t step = 0;
  double time = 0.0;
  Mode to = Mode::fallback;
  std::string cause;  ///< nonfinite, out-of-range, error-threshold, recovered

  std::string direction() const;
};

struct SwitchParams {
  double theta_hi = 0.1;
  double theta_lo = 0.05;
  std::size_t dwell = 5;  ///< H, consecutive steps
  /// Return to AI also requires |u_ai - u_fb| <= agree_tol for the dwell.
  double agree_tol = std::numeric_limits<double>::infinity();

  void validate() const;
};

/// Threshold switch between an AI controller and a conventional fallback.
///   AI -> FALLBACK: immediately when u_ai is non-finite or outside the limits,
///                   or after `dwell` consecutive steps with |e| > theta_hi.
///   FALLBACK -> AI: after `dwell` consecutive steps with |e| < theta_lo, a
///                   valid u_ai and |u_ai - u_fb| <= agree_tol.
class SwitchSupervisor {
 public:
  explicit SwitchSupervisor(SwitchParams params);

  /// One decision. Throws unrecoverable_fault when u_fb is not finite.
  Mode update(double u_ai, double u_fb, double e, double u_min, double u_max,
              std::size_t step = 0, double time = 0.0);

  Mode mode() const { return mode_; }
  const SwitchParams& params() const { return params_; }
  const std::vector<Transition>& log() const { return log_; }
  void reset();

 private:
  SwitchParams params_;
  Mode mode_ = Mode::ai;
  std::size_t high_run_ = 0;
  std::size_t calm_run_ = 0;
  std::vector<Transition> log_;
};

struct Supervised {
  double u;
  Mode mode;
};

/// Decision plus output selection for one step.
Supervised supervise_step(SwitchSupervisor& sup, double u_ai, double u_fb, double e,
                          double u_min, double u_max, std::size_t step = 0, double time = 0.0);

/// Columns: step,time,direction,cause
void write_transitions_csv(std::ostream& os, const std::vector<Transition>& log);

/// AI controller supervised by a hot-standby PID. On every AI -> FALLBACK
/// handover the PID integrator is back-solved to the last applied output; when
/// that is impossible (ki = 0) the output is rate-limited to the fallback over
/// `dwell` steps instead.
class SupervisedController final : public sim::Controller {
 public:
  SupervisedController(std::unique_ptr<sim::Controller> ai,
                       std::unique_ptr<control::PidController> fallback, SwitchParams params);

  double step(const sim::ControlContext& ctx) override;
  void reset() override;
  std::vector<std::string> channel_names() const override { return {"mode", "u_fb"}; }
  void channel_values(std::vector<double>& out) const override;

  const SwitchSupervisor& supervisor() const { return sup_; }
  /// |u(k) - u(k-1)| at each AI -> FALLBACK handover.
  const std::vector<double>& handover_jumps() const { return jumps_; }

 private:
  std::unique_ptr<sim::Controller> ai_;
  std::unique_ptr<control::PidController> fb_;
  SwitchSupervisor sup_;
  double last_u_ = 0.0;
  double last_fb_ = 0.0;
  bool has_last_ = false;
  std::size_t ramp_left_ = 0;
  double ramp_rate_ = 0.0;
  std::vector<double> jumps_;
};

// ---------------------------------------------------------------------------

struct AbsorbEvent {
  std::size_t step = 0;
  double time = 0.0;
  std::size_t channel = 0;
};

/// u = clamp(u_conv + clamp(correction, -delta, +delta), u_min, u_max) with
/// u_conv clamped to the limits first, so |u - u_conv| <= delta always.
class BoundedBlender {
 public:
  explicit BoundedBlender(std::vector<double> delta);

  /// Non-finite corrections count as 0 and are logged.
  double blend(double u_conv, double correction, double u_min, double u_max,
               std::size_t channel = 0, std::size_t step = 0, double time = 0.0);

  const std::vector<double>& delta() const { return delta_; }
  const std::vector<AbsorbEvent>& absorbed() const { return absorbed_; }
  void reset() { absorbed_.clear(); }

 private:
  std::vector<double> delta_;
  std::vector<AbsorbEvent> absorbed_;
};

double blend_step(BoundedBlender& b, double u_conv, double correction,
                  double u_min = -std::numeric_limits<double>::infinity(),
                  double u_max = std::numeric_limits<double>::infinity());

/// Conventional controller plus a bounded correction from a second
/// controller (whose output is read as the correction).
class BlendedController final : public sim::Controller {
 public:
  BlendedController(std::unique_ptr<sim::Controller> conventional,
                    std::unique_ptr<sim::Controller> correction, double delta);

  double step(const sim::ControlContext& ctx) override;
  void reset() override;
  std::vector<std::string> channel_names() const override { return {"u_conv", "correction"}; }
  void channel_values(std::vector<double>& out) const override;

  const BoundedBlender& blender() const { return blender_; }

 private:
  std::unique_ptr<sim::Controller> conv_;
  std::unique_ptr<sim::Controller> corr_;
  BoundedBlender blender_;
  double last_conv_ = 0.0;
  double last_corr_ = 0.0;
};

// ---------------------------------------------------------------------------
// Adversaries for testing the supervisors

/// Emits the same value every step.
class ConstantOutput final : public sim::Controller {
 public:
  explicit ConstantOutput(double u) : u_(u) {}
  double step(const sim::ControlContext&) override { return u_; }

 private:
  double u_;
};

/// Seeded stream mixing NaN, +-inf, huge and ordinary values of size up to
/// `scale`.
class AdversarialOutput final : public sim::Controller {
 public:
  AdversarialOutput(double scale, std::uint64_t seed) : scale_(scale), seed_(seed), rng_(seed) {}
  double step(const sim::ControlContext&) override { return next(); }
  void reset() override { rng_ = Rng(seed_); }
  double next();

 private:
  double scale_;
  std::uint64_t seed_;
  Rng rng_;
};

}  // namespace clcs::safety
