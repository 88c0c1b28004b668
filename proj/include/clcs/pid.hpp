#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "clcs/autodiff.hpp"
#include "clcs/error.hpp"
#include "clcs/sim.hpp"

namespace clcs::control {

/// Wiring variants of the PID family.
///   pid    P(e)  I(e)  D(e)
///   pi_d   P(e)  I(e)  D(-y)                  (default: no derivative kick)
///   pid_p  P(e)  I(e)  D(e)  - inner_kp * y   (outer PID, inner P feedback)
///   pi_pd  P(e)  I(e)  - inner_kp * y  D(-y)  (outer PI, inner PD feedback)
enum class PidStructure { pid, pi_d, pid_p, pi_pd };

std::string_view to_string(PidStructure s) noexcept;
PidStructure parse_structure(std::string_view s);

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  PidStructure structure = PidStructure::pi_d;
  double u_min = -std::numeric_limits<double>::infinity();
  double u_max = std::numeric_limits<double>::infinity();
  double N = 10.0;         ///< derivative filter ratio
  double inner_kp = 0.0;   ///< inner proportional feedback (pid_p, pi_pd)

  static PidGains from_rule(double kp, double Ti, double Td);
  double Ti() const { return ki > 0.0 ? kp / ki : std::numeric_limits<double>::infinity(); }
  double Td() const { return kp > 0.0 ? kd / kp : 0.0; }
  void validate() const;
};

template <class S>
struct BasicPidState {
  S integrator = 0.0;
  S last_measurement = 0.0;
  S last_error = 0.0;
  S filtered_derivative = 0.0;
  S last_output = 0.0;
  bool primed = false;
};

using PidState = BasicPidState<double>;

/// Gain triple that may be taped (gain scheduling under BPTT).
template <class S>
struct GainTriple {
  S kp, ki, kd;
};

/// One PID update, generic over double and ad::Var. Trapezoidal integral with
/// conditional anti-windup, derivative through a first-order filter with time
/// constant Td/N, output clamp.
template <class S>
S pid_core(const GainTriple<S>& g, const PidGains& cfg, BasicPidState<S>& st,
           const S& w, const S& y, double dt) {
  using ad::value_of;
  const S e = w - y;
  const S e_prev = st.primed ? st.last_error : e;
  const S y_prev = st.primed ? st.last_measurement : y;

  const bool d_on_error =
      cfg.structure == PidStructure::pid || cfg.structure == PidStructure::pid_p;
  const S s = d_on_error ? e : S(0.0) - y;
  const S s_prev = d_on_error ? e_prev : S(0.0) - y_prev;

  const S p = g.kp * e;
  S inner = 0.0;
  if (cfg.structure == PidStructure::pid_p || cfg.structure == PidStructure::pi_pd) {
    inner = S(0.0) - S(cfg.inner_kp) * y;
  }

  S d = 0.0;
  if (value_of(g.kd) != 0.0) {
    const S tf = value_of(g.kp) > 0.0 ? g.kd / (g.kp * cfg.N) : g.kd / cfg.N;
    d = (tf * st.filtered_derivative + g.kd * (s - s_prev)) / (tf + dt);
  }

  const S i_incr = g.ki * (dt * 0.5) * (e + e_prev);
  const S i_cand = st.integrator + i_incr;
  const double unsat = value_of(p) + value_of(i_cand) + value_of(d) + value_of(inner);
  S i_new = i_cand;
  if ((unsat > cfg.u_max && value_of(i_incr) > 0.0) ||
      (unsat < cfg.u_min && value_of(i_incr) < 0.0)) {
    i_new = st.integrator;
  }
  const S u = ad::clamp_value(p + i_new + d + inner, cfg.u_min, cfg.u_max);

  st.integrator = i_new;
  st.last_error = e;
  st.last_measurement = y;
  st.filtered_derivative = d;
  st.last_output = u;
  st.primed = true;
  return u;
}

/// Throws controller_fault on non-finite inputs.
double pid_step(const PidGains& gains, PidState& state, double w, double y, double dt);

/// Back-solves the integrator so the next pid_step with the same (w, y, dt)
/// returns `target`. Throws sync_impossible when ki == 0 and the natural
/// output differs from the target.
PidState pid_sync(const PidState& state, double target, const PidGains& gains,
                  double w, double y, double dt);

struct CascadeSpec {
  PidGains outer;            ///< its limits bound the inner reference
  PidGains inner;            ///< its limits are the plant input limits
  std::size_t outer_channel = 0;  ///< sensor B
  std::size_t inner_channel = 1;  ///< sensor A, nearer the process
  std::size_t outer_every = 1;    ///< outer loop period in inner steps
};

struct CascadeState {
  PidState outer;
  PidState inner;
  double inner_reference = 0.0;
  std::size_t tick = 0;
};

double cascade_step(const CascadeSpec& spec, CascadeState& states, double w,
                    double y_outer, double y_inner, double dt);

class PidController final : public sim::Controller {
 public:
  explicit PidController(PidGains gains, std::size_t channel = 0)
      : gains_(gains), channel_(channel) {}

  double step(const sim::ControlContext& ctx) override;
  void reset() override { state_ = {}; }

  const PidGains& gains() const { return gains_; }
  PidGains& gains() { return gains_; }
  const PidState& state() const { return state_; }
  void set_state(const PidState& s) { state_ = s; }

  /// Integrator back-solve for bumpless handover into this controller.
  void sync(double target, const sim::ControlContext& ctx);

 private:
  PidGains gains_;
  std::size_t channel_;
  PidState state_;
};

class CascadeController final : public sim::Controller {
 public:
  explicit CascadeController(CascadeSpec spec) : spec_(std::move(spec)) {}
  double step(const sim::ControlContext& ctx) override;
  void reset() override { state_ = {}; }
  std::vector<std::string> channel_names() const override { return {"w_inner"}; }
  void channel_values(std::vector<double>& out) const override {
    out.push_back(state_.inner_reference);
  }

 private:
  CascadeSpec spec_;
  CascadeState state_;
};

}  // namespace clcs::control
