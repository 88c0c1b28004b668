#include "clcs/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "clcs/error.hpp"

namespace clcs::sim {
namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::invalid_spec, what);
}

}  // namespace

std::size_t SimConfig::steps() const {
  if (!(dt > 0.0) || !(horizon > 0.0) || !std::isfinite(dt) ||
      !std::isfinite(horizon)) {
    throw Error(Errc::invalid_argument, "sim dt and horizon must be > 0");
  }
  const double n = std::round(horizon / dt);
  if (n < 1.0) throw Error(Errc::invalid_argument, "horizon shorter than dt");
  return static_cast<std::size_t>(n);
}

// --- plant -----------------------------------------------------------------

std::size_t PlantModel::state_dim() const {
  return std::visit(overloaded{
                        [](const LinearStateSpace& p) { return p.n; },
                        [](const Fopdt&) { return std::size_t{1}; },
                        [](const SecondOrder&) { return std::size_t{2}; },
                        [](const TankNonlinear&) { return std::size_t{1}; },
                    },
                    variant);
}

std::size_t PlantModel::output_dim() const {
  return std::visit(
      overloaded{
          [](const LinearStateSpace& p) { return p.n ? p.C.size() / p.n : 0; },
          [](const Fopdt&) { return std::size_t{1}; },
          [](const SecondOrder&) { return std::size_t{2}; },
          [](const TankNonlinear&) { return std::size_t{1}; },
      },
      variant);
}

double PlantModel::dead_time() const {
  if (const auto* f = std::get_if<Fopdt>(&variant)) return f->L;
  return 0.0;
}

void PlantModel::validate() const {
  require(u_min <= u_max, "plant limits require u_min <= u_max");
  std::visit(overloaded{
                 [](const LinearStateSpace& p) {
                   require(p.n >= 1, "state-space n must be >= 1");
                   require(p.A.size() == p.n * p.n, "state-space A must be n x n");
                   require(p.B.size() == p.n, "state-space B must be n x 1");
                   require(!p.C.empty() && p.C.size() % p.n == 0,
                           "state-space C must be r x n");
                 },
                 [](const Fopdt& p) {
                   require(p.tau > 0.0, "fopdt tau must be > 0");
                   require(p.L >= 0.0, "fopdt L must be >= 0");
                 },
                 [](const SecondOrder& p) {
                   require(p.omega_n > 0.0, "second-order omega_n must be > 0");
                   require(p.zeta >= 0.0, "second-order zeta must be >= 0");
                 },
                 [](const TankNonlinear& p) {
                   require(p.area > 0.0, "tank area must be > 0");
                   require(p.outflow >= 0.0, "tank outflow must be >= 0");
                 },
             },
             variant);
  require(initial_state.empty() || initial_state.size() == state_dim(),
          "initial_state size must match the state dimension");
}

std::vector<double> PlantModel::derivative(std::span<const double> x,
                                           double u) const {
  return std::visit(
      overloaded{
          [&](const LinearStateSpace& p) {
            std::vector<double> dx(p.n, 0.0);
            for (std::size_t i = 0; i < p.n; ++i) {
              double s = p.B[i] * u;
              for (std::size_t j = 0; j < p.n; ++j) s += p.A[i * p.n + j] * x[j];
              dx[i] = s;
            }
            return dx;
          },
          [&](const Fopdt& p) {
            return std::vector<double>{(p.K * u - x[0]) / p.tau};
          },
          [&](const SecondOrder& p) {
            const double w2 = p.omega_n * p.omega_n;
            return std::vector<double>{
                x[1], w2 * (p.K * u - x[0]) - 2.0 * p.zeta * p.omega_n * x[1]};
          },
          [&](const TankNonlinear& p) {
            const double h = std::max(x[0], 0.0);
            return std::vector<double>{(u - p.outflow * std::sqrt(h)) / p.area};
          },
      },
      variant);
}

std::vector<double> PlantModel::outputs(std::span<const double> x) const {
  return std::visit(overloaded{
                        [&](const LinearStateSpace& p) {
                          const std::size_t r = p.C.size() / p.n;
                          std::vector<double> y(r, 0.0);
                          for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < p.n; ++j) {
                              y[i] += p.C[i * p.n + j] * x[j];
                            }
                          }
                          return y;
                        },
                        [&](const Fopdt&) { return std::vector<double>{x[0]}; },
                        [&](const SecondOrder&) {
                          return std::vector<double>{x[0], x[1]};
                        },
                        [&](const TankNonlinear&) {
                          return std::vector<double>{x[0]};
                        },
                    },
                    variant);
}

double PlantModel::input_gain(double t) const {
  double g = 1.0;
  for (const auto& s : gain_steps) {
    if (t >= s.time) g = s.factor;
  }
  return g;
}

PlantModel make_fopdt(double K, double tau, double L, double u_min,
                      double u_max) {
  PlantModel p;
  p.variant = Fopdt{K, tau, L};
  p.u_min = u_min;
  p.u_max = u_max;
  return p;
}

// --- signals ---------------------------------------------------------------

double ReferenceSpec::at(double t) const {
  return std::visit(overloaded{
                        [&](const StepReference& s) {
                          return t >= s.time ? s.final : s.initial;
                        },
                        [&](const ProfileReference& p) {
                          if (p.t.empty()) return 0.0;
                          auto it = std::upper_bound(p.t.begin(), p.t.end(), t);
                          if (it == p.t.begin()) return p.w.front();
                          return p.w[static_cast<std::size_t>(
                              std::distance(p.t.begin(), it) - 1)];
                        },
                    },
                    variant);
}

const std::vector<double>* Trajectory::column(const std::string& name) const {
  if (name == "t") return &t;
  if (name == "w") return &w;
  if (name == "y") return &y;
  if (name == "y_meas") return &y_meas;
  if (name == "u") return &u;
  if (name == "d") return &d;
  for (const auto& [n, v] : extra) {
    if (n == name) return &v;
  }
  return nullptr;
}

std::vector<double>& Trajectory::add_column(const std::string& name) {
  for (auto& [n, v] : extra) {
    if (n == name) return v;
  }
  extra.emplace_back(name, std::vector<double>{});
  return extra.back().second;
}

// --- delay line --------------------------------------------------------------

DelayLine::DelayLine(double L, double dt) {
  if (!(dt > 0.0) || L < 0.0) {
    throw Error(Errc::invalid_argument, "delay line needs dt > 0 and L >= 0");
  }
  // std::round rounds halves away from zero.
  buffer_.assign(static_cast<std::size_t>(std::round(L / dt)), 0.0);
}

DelayLine::DelayLine(std::size_t samples) : buffer_(samples, 0.0) {}

double DelayLine::push_pop(double x) {
  if (buffer_.empty()) return x;
  const double out = buffer_[head_];
  buffer_[head_] = x;
  head_ = (head_ + 1) % buffer_.size();
  return out;
}

void DelayLine::reset() {
  std::fill(buffer_.begin(), buffer_.end(), 0.0);
  head_ = 0;
}

// --- sensor ------------------------------------------------------------------

double apply_sensor(double y, const SensorSpec& spec, Rng& rng) {
  double m = y;
  if (spec.noise_std > 0.0) m += spec.noise_std * rng.normal();
  if (spec.quantization > 0.0) {
    m = spec.quantization * std::round(m / spec.quantization);
  }
  return m;
}

Sensor::Sensor(SensorSpec spec, double dt, std::uint64_t seed)
    : spec_(spec), period_steps_(1), rng_(seed) {
  if (spec_.noise_std < 0.0 || spec_.quantization < 0.0) {
    throw Error(Errc::invalid_spec, "sensor noise and quantization must be >= 0");
  }
  if (spec_.sample_period > 0.0) {
    const double ratio = spec_.sample_period / dt;
    if (ratio < 1.0 - 1e-9) {
      throw Error(Errc::invalid_spec, "sensor sample_period must be >= dt");
    }
    period_steps_ = static_cast<std::size_t>(std::round(ratio));
  }
}

double Sensor::apply(double y, std::size_t step) {
  if (!has_sample_ || step % period_steps_ == 0) {
    held_ = apply_sensor(y, spec_, rng_);
    has_sample_ = true;
  }
  return held_;
}

// --- controllers -------------------------------------------------------------

double OpenLoop::step(const ControlContext& ctx) {
  if (u_.empty()) return 0.0;
  return u_[std::min(ctx.step, u_.size() - 1)];
}

double Relay::step(const ControlContext& ctx) {
  return (ctx.w - ctx.y_meas[0]) >= 0.0 ? h_ : -h_;
}

// --- integration ---------------------------------------------------------------

std::vector<double> rk4_step(std::span<const double> x, double dt,
                             const Dynamics& f) {
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "rk4 dt must be > 0");
  const std::size_t n = x.size();
  std::vector<double> tmp(n);

  const auto k1 = f(x);
  if (k1.size() != n) {
    throw Error(Errc::dimension_mismatch, "dynamics returned wrong state size");
  }
  if (!all_finite(k1)) throw Error(Errc::diverged, "non-finite derivative");
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  const auto k2 = f(tmp);
  if (!all_finite(k2)) throw Error(Errc::diverged, "non-finite derivative");
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  const auto k3 = f(tmp);
  if (!all_finite(k3)) throw Error(Errc::diverged, "non-finite derivative");
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  const auto k4 = f(tmp);
  if (!all_finite(k4)) throw Error(Errc::diverged, "non-finite derivative");

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

double rk4_step(double x, double u, double dt,
                const std::function<double(double, double)>& f) {
  const double s[1] = {x};
  return rk4_step(s, dt, [&](std::span<const double> v) {
    return std::vector<double>{f(v[0], u)};
  })[0];
}

// --- closed loop -----------------------------------------------------------------

double disturbance_at(const DisturbanceSpec& spec, double t, Rng& rng) {
  return std::visit(
      overloaded{
          [](const NoDisturbance&) { return 0.0; },
          [&](const StepDisturbance& s) { return t >= s.time ? s.magnitude : 0.0; },
          [&](const GaussianDisturbance& g) { return g.std * rng.normal(); },
          [&](const SinusoidDisturbance& s) {
            return s.amplitude * std::sin(2.0 * std::numbers::pi * t / s.period);
          },
      },
      spec.variant);
}

Trajectory simulate(const PlantModel& plant, Controller& controller,
                    const ReferenceSpec& reference,
                    const DisturbanceSpec& disturbance,
                    const SensorSpec& sensor, const SimConfig& cfg) {
  plant.validate();
  const std::size_t n = cfg.steps();
  const double dt = cfg.dt;

  std::vector<double> x = plant.initial_state.empty()
                              ? std::vector<double>(plant.state_dim(), 0.0)
                              : plant.initial_state;
  const std::size_t n_out = plant.output_dim();
  DelayLine delay(plant.dead_time(), dt);

  std::vector<Sensor> sensors;
  sensors.reserve(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    sensors.emplace_back(sensor, dt, Rng::derive(cfg.seed, 1 + i));
  }
  Rng dist_rng(Rng::derive(cfg.seed, 1000));

  if (const auto* g = std::get_if<GaussianDisturbance>(&disturbance.variant)) {
    if (g->std < 0.0) throw Error(Errc::invalid_spec, "disturbance std must be >= 0");
  }
  if (const auto* s = std::get_if<SinusoidDisturbance>(&disturbance.variant)) {
    if (!(s->period > 0.0)) {
      throw Error(Errc::invalid_spec, "disturbance period must be > 0");
    }
  }

  Trajectory traj;
  traj.dt = dt;
  for (auto* v : {&traj.t, &traj.w, &traj.y, &traj.y_meas, &traj.u, &traj.d}) {
    v->reserve(n);
  }
  const auto names = controller.channel_names();
  for (std::size_t i = 1; i < n_out; ++i) traj.add_column("y" + std::to_string(i + 1));
  for (const auto& name : names) traj.add_column(name);
  std::vector<std::vector<double>*> out_cols, ch_cols;
  for (std::size_t i = 0; i < traj.extra.size(); ++i) {
    (i + 1 < n_out ? out_cols : ch_cols).push_back(&traj.extra[i].second);
  }
  std::vector<double> ch_vals;

  std::vector<double> meas(n_out);
  double ref_scale = 1.0;
  const auto dyn_for = [&](double u_in) {
    return [&plant, u_in](std::span<const double> s) {
      return plant.derivative(s, u_in);
    };
  };

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w = reference.at(t);
    ref_scale = std::max(ref_scale, std::abs(w));

    const double d = disturbance_at(disturbance, t, dist_rng);

    auto y_true = plant.outputs(x);
    if (disturbance.injection == Injection::output_additive) y_true[0] += d;
    if (!std::isfinite(y_true[0]) || std::abs(y_true[0]) > 1e9 * ref_scale) {
      throw Error(Errc::diverged, "response exceeded divergence bound", k);
    }
    for (std::size_t i = 0; i < n_out; ++i) meas[i] = sensors[i].apply(y_true[i], k);

    ControlContext ctx{k, t, dt, w, meas, plant.u_min, plant.u_max};
    double u = controller.step(ctx);
    if (!std::isfinite(u)) {
      throw Error(Errc::controller_fault, "controller emitted non-finite output", k);
    }
    u = std::clamp(u, plant.u_min, plant.u_max);

    traj.t.push_back(t);
    traj.w.push_back(w);
    traj.y.push_back(y_true[0]);
    traj.y_meas.push_back(meas[0]);
    traj.u.push_back(u);
    traj.d.push_back(d);
    for (std::size_t i = 1; i < n_out; ++i) out_cols[i - 1]->push_back(y_true[i]);
    if (!ch_cols.empty()) {
      ch_vals.clear();
      controller.channel_values(ch_vals);
      for (std::size_t i = 0; i < ch_cols.size(); ++i) {
        ch_cols[i]->push_back(i < ch_vals.size() ? ch_vals[i] : 0.0);
      }
    }

    double u_in = u;
    if (disturbance.injection == Injection::input_additive) u_in += d;
    u_in *= plant.input_gain(t);
    const double u_applied = delay.push_pop(u_in);
    try {
      x = rk4_step(x, dt, dyn_for(u_applied));
    } catch (const Error& e) {
      if (e.code() == Errc::diverged) throw Error(Errc::diverged, e.what(), k);
      throw;
    }
  }
  return traj;
}

}  // namespace clcs::sim
