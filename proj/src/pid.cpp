#include "clcs/pid.hpp"

#include <algorithm>
#include <string>

namespace clcs::control {

std::string_view to_string(PidStructure s) noexcept {
  switch (s) {
    case PidStructure::pid: return "PID";
    case PidStructure::pi_d: return "PI-D";
    case PidStructure::pid_p: return "PID-P";
    case PidStructure::pi_pd: return "PI-PD";
  }
  return "PI-D";
}

PidStructure parse_structure(std::string_view s) {
  if (s == "PID") return PidStructure::pid;
  if (s == "PI-D") return PidStructure::pi_d;
  if (s == "PID-P") return PidStructure::pid_p;
  if (s == "PI-PD") return PidStructure::pi_pd;
  throw Error(Errc::config_error, "unknown PID structure '" + std::string(s) + "'");
}

PidGains PidGains::from_rule(double kp, double Ti, double Td) {
  PidGains g;
  g.kp = kp;
  g.ki = std::isfinite(Ti) && Ti > 0.0 ? kp / Ti : 0.0;
  g.kd = kp * Td;
  return g;
}

void PidGains::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0)) {
    throw Error(Errc::invalid_spec, "PID gains must be >= 0");
  }
  if (!(N > 0.0)) throw Error(Errc::invalid_spec, "derivative filter ratio N must be > 0");
  if (!(u_min <= u_max)) throw Error(Errc::invalid_spec, "PID limits require u_min <= u_max");
}

double pid_step(const PidGains& gains, PidState& state, double w, double y, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "pid dt must be > 0");
  if (!std::isfinite(w) || !std::isfinite(y)) {
    throw Error(Errc::controller_fault, "non-finite PID input");
  }
  const GainTriple<double> g{gains.kp, gains.ki, gains.kd};
  const double u = pid_core(g, gains, state, w, y, dt);
  if (!std::isfinite(u)) throw Error(Errc::controller_fault, "non-finite PID output");
  return u;
}

PidState pid_sync(const PidState& state, double target, const PidGains& gains,
                  double w, double y, double dt) {
  PidState probe = state;
  const double natural = pid_step(gains, probe, w, y, dt);
  if (std::abs(natural - target) <= 1e-12 * std::max(1.0, std::abs(target))) {
    return state;
  }
  if (gains.ki == 0.0) {
    throw Error(Errc::sync_impossible,
                "proportional-derivative controller cannot match an arbitrary output");
  }
  // Next step sees e_prev = e and an unchanged measurement: the filtered
  // derivative is zero and the trapezoid increment is ki*dt*e.
  const double e = w - y;
  double fixed = gains.kp * e;
  if (gains.structure == PidStructure::pid_p || gains.structure == PidStructure::pi_pd) {
    fixed -= gains.inner_kp * y;
  }
  PidState s;
  s.primed = true;
  s.last_error = e;
  s.last_measurement = y;
  s.filtered_derivative = 0.0;
  s.last_output = state.last_output;
  s.integrator = target - fixed - gains.ki * dt * e;
  return s;
}

double cascade_step(const CascadeSpec& spec, CascadeState& st, double w,
                    double y_outer, double y_inner, double dt) {
  const std::size_t every = std::max<std::size_t>(1, spec.outer_every);
  if (st.tick % every == 0) {
    st.inner_reference = pid_step(spec.outer, st.outer, w, y_outer, dt * static_cast<double>(every));
  }
  ++st.tick;
  return pid_step(spec.inner, st.inner, st.inner_reference, y_inner, dt);
}

double PidController::step(const sim::ControlContext& ctx) {
  if (channel_ >= ctx.y_meas.size()) {
    throw Error(Errc::dimension_mismatch, "PID sensor channel out of range");
  }
  return pid_step(gains_, state_, ctx.w, ctx.y_meas[channel_], ctx.dt);
}

void PidController::sync(double target, const sim::ControlContext& ctx) {
  state_ = pid_sync(state_, target, gains_, ctx.w, ctx.y_meas[channel_], ctx.dt);
}

double CascadeController::step(const sim::ControlContext& ctx) {
  const auto n = ctx.y_meas.size();
  if (spec_.outer_channel >= n || spec_.inner_channel >= n) {
    throw Error(Errc::dimension_mismatch, "cascade sensor channel out of range");
  }
  return cascade_step(spec_, state_, ctx.w, ctx.y_meas[spec_.outer_channel],
                      ctx.y_meas[spec_.inner_channel], ctx.dt);
}

}  // namespace clcs::control
