#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "clcs/rng.hpp"

namespace clcs::sim {

struct SimConfig {
  double dt = 0.01;
  double horizon = 10.0;
  std::uint64_t seed = 0;

  /// round(horizon / dt); throws invalid_argument unless >= 1.
  std::size_t steps() const;
};

// ---------------------------------------------------------------------------
// Plants

struct LinearStateSpace {
  std::size_t n = 1;       ///< state dimension
  std::vector<double> A;   ///< n x n, row-major
  std::vector<double> B;   ///< n x 1
  std::vector<double> C;   ///< outputs x n, row-major; row 0 is the primary y
};

struct Fopdt {
  double K = 1.0;
  double tau = 1.0;
  double L = 0.0;
};

struct SecondOrder {
  double K = 1.0;
  double omega_n = 1.0;
  double zeta = 0.7;
};

/// Level h of a tank: area * dh/dt = u - outflow * sqrt(h).
struct TankNonlinear {
  double area = 1.0;
  double outflow = 1.0;
};

/// Multiplies the plant input by `factor` from `time` onwards.
struct GainStep {
  double time = 0.0;
  double factor = 1.0;
};

struct PlantModel {
  std::variant<LinearStateSpace, Fopdt, SecondOrder, TankNonlinear> variant;
  double u_min = -1e300;
  double u_max = 1e300;
  std::vector<GainStep> gain_steps;
  std::vector<double> initial_state;  ///< empty = zero state

  std::size_t state_dim() const;
  std::size_t output_dim() const;
  double dead_time() const;
  /// Throws invalid_spec when a parameter violates its invariant.
  void validate() const;
  std::vector<double> derivative(std::span<const double> x, double u) const;
  std::vector<double> outputs(std::span<const double> x) const;
  double input_gain(double t) const;
};

PlantModel make_fopdt(double K, double tau, double L, double u_min = -1e300,
                      double u_max = 1e300);

// ---------------------------------------------------------------------------
// Signals

struct NoDisturbance {};
struct StepDisturbance {
  double time = 0.0;
  double magnitude = 0.0;
};
struct GaussianDisturbance {
  double std = 0.0;
};
struct SinusoidDisturbance {
  double amplitude = 0.0;
  double period = 1.0;
};

enum class Injection { input_additive, output_additive };

struct DisturbanceSpec {
  std::variant<NoDisturbance, StepDisturbance, GaussianDisturbance,
               SinusoidDisturbance>
      variant;
  Injection injection = Injection::input_additive;
};

/// Disturbance value at time t; gaussian draws advance `rng`.
double disturbance_at(const DisturbanceSpec& spec, double t, Rng& rng);

struct SensorSpec {
  double noise_std = 0.0;
  double sample_period = 0.0;  ///< 0 means every step
  double quantization = 0.0;   ///< 0 = off
};

struct StepReference {
  double time = 0.0;
  double initial = 0.0;
  double final = 1.0;
};

/// Zero-order hold over (time, value) breakpoints.
struct ProfileReference {
  std::vector<double> t;
  std::vector<double> w;
};

struct ReferenceSpec {
  std::variant<StepReference, ProfileReference> variant;
  double at(double t) const;
};

// ---------------------------------------------------------------------------
// Recorded data

struct Trajectory {
  double dt = 0.0;
  std::vector<double> t, w, y, y_meas, u, d;
  /// Additional named columns (y2, u_conv, mode, ...), recorded in order.
  std::vector<std::pair<std::string, std::vector<double>>> extra;

  std::size_t size() const { return t.size(); }
  const std::vector<double>* column(const std::string& name) const;
  std::vector<double>& add_column(const std::string& name);
};

class DelayLine {
 public:
  DelayLine() = default;
  /// Shift of round(L/dt) samples, halves rounded away from zero.
  DelayLine(double L, double dt);
  explicit DelayLine(std::size_t samples);

  std::size_t samples() const { return buffer_.size(); }
  double push_pop(double x);
  void reset();

 private:
  std::vector<double> buffer_;
  std::size_t head_ = 0;
};

class Sensor {
 public:
  Sensor(SensorSpec spec, double dt, std::uint64_t seed);

  double apply(double y, std::size_t step);

 private:
  SensorSpec spec_;
  std::size_t period_steps_;
  Rng rng_;
  double held_ = 0.0;
  bool has_sample_ = false;
};

/// Stateless measurement transform: additive gaussian noise then
/// quantisation to the nearest multiple.
double apply_sensor(double y, const SensorSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Controllers

struct ControlContext {
  std::size_t step = 0;
  double t = 0.0;
  double dt = 0.0;
  double w = 0.0;
  std::span<const double> y_meas;  ///< y_meas[0] is the primary output
  double u_min = -1e300;
  double u_max = 1e300;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual double step(const ControlContext& ctx) = 0;
  virtual void reset() {}
  /// Extra per-step columns this controller records into the trajectory.
  virtual std::vector<std::string> channel_names() const { return {}; }
  virtual void channel_values(std::vector<double>& /*out*/) const {}
};

/// Plays back a fixed input sequence (open-loop experiments).
class OpenLoop final : public Controller {
 public:
  explicit OpenLoop(std::vector<double> u) : u_(std::move(u)) {}
  double step(const ControlContext& ctx) override;

 private:
  std::vector<double> u_;
};

/// Ideal relay around the reference: +h when e >= 0, -h otherwise.
class Relay final : public Controller {
 public:
  explicit Relay(double h) : h_(h) {}
  double step(const ControlContext& ctx) override;

 private:
  double h_;
};

using Dynamics = std::function<std::vector<double>(std::span<const double>)>;

/// Classical fourth-order Runge-Kutta step for x' = f(x) with the input held.
std::vector<double> rk4_step(std::span<const double> x, double dt,
                             const Dynamics& f);

/// Scalar convenience overload: x' = f(x, u).
double rk4_step(double x, double u, double dt,
                const std::function<double(double, double)>& f);

/// Closed-loop fixed-step run. Per step: sample sensor, controller step,
/// clamp to the plant limits, inject disturbance, integrate the plant.
Trajectory simulate(const PlantModel& plant, Controller& controller,
                    const ReferenceSpec& reference,
                    const DisturbanceSpec& disturbance,
                    const SensorSpec& sensor, const SimConfig& cfg);

}  // namespace clcs::sim
