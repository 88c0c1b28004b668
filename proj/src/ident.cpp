#include "clcs/ident.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>

#include "clcs/error.hpp"

namespace clcs::ident {
namespace {

/// First time the normalised response r crosses `level`, linearly
/// interpolated between samples.
double crossing_time(const std::vector<double>& t, const std::vector<double>& r,
                     std::size_t from, double level) {
  for (std::size_t k = from + 1; k < r.size(); ++k) {
    if (r[k] >= level) {
      const double r0 = r[k - 1], r1 = r[k];
      const double f = r1 > r0 ? (level - r0) / (r1 - r0) : 1.0;
      return t[k - 1] + std::clamp(f, 0.0, 1.0) * (t[k] - t[k - 1]);
    }
  }
  throw Error(Errc::identification_failed, "response never reaches the crossing level");
}

void check_fopdt(const FopdtModel& m) {
  if (!(m.tau > 0.0) || !(m.L >= 0.0) || m.K == 0.0 || !std::isfinite(m.K)) {
    throw Error(Errc::invalid_argument, "FOPDT model requires tau > 0, L >= 0, K != 0");
  }
  if (m.L == 0.0) {
    throw Error(Errc::rule_inapplicable, "tuning rule needs a positive dead time");
  }
}

}  // namespace

FopdtModel identify_fopdt_step(const sim::Trajectory& traj) {
  const auto& u = traj.u;
  const auto& y = traj.y_meas.empty() ? traj.y : traj.y_meas;
  const std::size_t n = u.size();
  if (n < 4 || y.size() != n || traj.t.size() != n) {
    throw Error(Errc::too_short, "step test needs at least four samples");
  }
  const double u_scale = std::max(1.0, std::abs(u.front()));
  std::size_t ks = n;
  for (std::size_t k = 1; k < n; ++k) {
    if (std::abs(u[k] - u.front()) > 1e-12 * u_scale) {
      ks = k;
      break;
    }
  }
  if (ks == n) throw Error(Errc::identification_failed, "no input step found");
  const double du = u.back() - u.front();
  for (std::size_t k = ks; k < n; ++k) {
    if (std::abs(u[k] - u.back()) > 1e-9 * std::max(1.0, std::abs(du))) {
      throw Error(Errc::identification_failed, "input is not a single step", k);
    }
  }

  const double y0 = y[ks];
  const std::size_t tail = std::max<std::size_t>(2, n / 10);
  double y_final = 0.0;
  for (std::size_t k = n - tail; k < n; ++k) y_final += y[k];
  y_final /= static_cast<double>(tail);
  const double dy = y_final - y0;
  if (std::abs(dy) <= 1e-9 * std::max(1.0, std::abs(y0))) {
    throw Error(Errc::identification_failed, "flat response to the input step");
  }
  for (std::size_t k = n - tail; k < n; ++k) {
    if (std::abs(y[k] - y_final) > 0.02 * std::abs(dy)) {
      throw Error(Errc::not_settled, "response has no steady final value in the horizon", k);
    }
  }

  std::vector<double> r(n, 0.0);
  double run_max = -std::numeric_limits<double>::infinity();
  for (std::size_t k = ks; k < n; ++k) {
    r[k] = (y[k] - y0) / dy;
    run_max = std::max(run_max, r[k]);
    if (run_max - r[k] > 0.05 || r[k] > 1.05) {
      throw Error(Errc::identification_failed, "step response is not monotone", k);
    }
  }

  const double t_step = traj.t[ks];
  const double t28 = crossing_time(traj.t, r, ks, 0.283) - t_step;
  const double t63 = crossing_time(traj.t, r, ks, 0.632) - t_step;
  FopdtModel m;
  m.tau = 1.5 * (t63 - t28);
  m.L = std::max(0.0, t63 - m.tau);
  m.K = dy / du;
  if (!(m.tau > 0.0)) {
    throw Error(Errc::identification_failed, "degenerate time constant");
  }
  return m;
}

sim::Trajectory step_test(const sim::PlantModel& plant, double amplitude,
                          const sim::SimConfig& cfg, double step_time) {
  const std::size_t n = cfg.steps();
  if (step_time < 0.0) step_time = 0.05 * cfg.horizon;
  const auto ks = static_cast<std::size_t>(std::round(step_time / cfg.dt));
  std::vector<double> u(n, 0.0);
  for (std::size_t k = std::min(ks, n); k < n; ++k) u[k] = amplitude;
  sim::OpenLoop ol(std::move(u));
  sim::ReferenceSpec ref{sim::StepReference{0.0, 0.0, 0.0}};
  return sim::simulate(plant, ol, ref, {}, {}, cfg);
}

RelayResult relay_experiment(const sim::PlantModel& plant, double h,
                             const sim::SimConfig& cfg) {
  if (!(h > 0.0) || h > plant.u_max || -h < plant.u_min) {
    throw Error(Errc::invalid_argument, "relay amplitude must be > 0 and within actuator limits");
  }
  sim::Relay relay(h);
  sim::ReferenceSpec ref{sim::StepReference{0.0, 0.0, 0.0}};
  RelayResult res;
  res.trajectory = sim::simulate(plant, relay, ref, {}, {}, cfg);
  const auto& t = res.trajectory.t;
  const auto& y = res.trajectory.y_meas;
  const std::size_t n = y.size();
  const std::size_t start = static_cast<std::size_t>(0.3 * static_cast<double>(n));
  if (n - start < 8) throw Error(Errc::no_limit_cycle, "relay run too short");

  const double mean =
      std::accumulate(y.begin() + static_cast<std::ptrdiff_t>(start), y.end(), 0.0) /
      static_cast<double>(n - start);
  std::vector<double> crossings;
  std::vector<std::size_t> crossing_idx;
  for (std::size_t k = start + 1; k < n; ++k) {
    const double a = y[k - 1] - mean, b = y[k] - mean;
    if (a < 0.0 && b >= 0.0) {
      crossings.push_back(t[k - 1] + (-a / (b - a)) * (t[k] - t[k - 1]));
      crossing_idx.push_back(k);
    }
  }
  if (crossings.size() < 5) {
    throw Error(Errc::no_limit_cycle, "fewer than four sustained relay cycles");
  }
  res.cycles = crossings.size() - 1;
  const double Pu = (crossings.back() - crossings.front()) / static_cast<double>(res.cycles);
  // An oscillation resolved by only a handful of samples is integrator
  // chatter, not a limit cycle of the plant.
  if (Pu < 10.0 * cfg.dt) {
    throw Error(Errc::no_limit_cycle, "relay oscillation is sample-rate chatter");
  }

  // Fundamental harmonic over the whole-cycle window.
  const double omega = 2.0 * std::numbers::pi / Pu;
  std::complex<double> acc{0.0, 0.0};
  const std::size_t k0 = crossing_idx.front(), k1 = crossing_idx.back();
  for (std::size_t k = k0; k < k1; ++k) {
    const auto f = [&](std::size_t j) {
      return (y[j] - mean) * std::exp(std::complex<double>(0.0, -omega * t[j]));
    };
    acc += 0.5 * (f(k) + f(k + 1)) * (t[k + 1] - t[k]);
  }
  const double window = t[k1] - t[k0];
  res.amplitude = 2.0 * std::abs(acc) / window;
  if (!(res.amplitude > 0.0)) throw Error(Errc::no_limit_cycle, "zero oscillation amplitude");
  res.ultimate.Pu = Pu;
  res.ultimate.Ku = 4.0 * h / (std::numbers::pi * res.amplitude);
  return res;
}

control::PidGains tune_ziegler_nichols(const UltimateParams& up, ZnKind kind) {
  if (!(up.Ku > 0.0) || !(up.Pu > 0.0)) {
    throw Error(Errc::invalid_argument, "ultimate gain and period must be > 0");
  }
  switch (kind) {
    case ZnKind::P: return control::PidGains::from_rule(0.5 * up.Ku, INFINITY, 0.0);
    case ZnKind::PI: return control::PidGains::from_rule(0.45 * up.Ku, up.Pu / 1.2, 0.0);
    case ZnKind::PID: break;
  }
  return control::PidGains::from_rule(0.6 * up.Ku, 0.5 * up.Pu, 0.125 * up.Pu);
}

control::PidGains tune_cohen_coon(const FopdtModel& m) {
  check_fopdt(m);
  const double r = m.L / m.tau;
  const double kp = (1.0 / m.K) * (m.tau / m.L) * (4.0 / 3.0 + r / 4.0);
  const double Ti = m.L * (32.0 + 6.0 * r) / (13.0 + 8.0 * r);
  const double Td = 4.0 * m.L / (11.0 + 2.0 * r);
  return control::PidGains::from_rule(kp, Ti, Td);
}

control::PidGains tune_kappa_tau(const FopdtModel& m) {
  check_fopdt(m);
  const double kp = (1.0 / m.K) * (0.2 + 0.45 * m.tau / m.L);
  const double Ti = m.L * (0.4 * m.L + 0.8 * m.tau) / (m.L + 0.1 * m.tau);
  const double Td = 0.5 * m.L * m.tau / (0.3 * m.L + m.tau);
  return control::PidGains::from_rule(kp, Ti, Td);
}

}  // namespace clcs::ident
