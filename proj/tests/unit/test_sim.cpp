#include <gtest/gtest.h>

#include <cmath>

#include "clcs/error.hpp"
#include "clcs/pid.hpp"
#include "clcs/safety.hpp"
#include "clcs/sim.hpp"

using namespace clcs;
using namespace clcs::sim;

namespace {

PlantModel integrator() {
  PlantModel p;
  p.variant = LinearStateSpace{1, {0.0}, {1.0}, {1.0}};
  return p;
}

double rk4_max_error(double dt) {
  double y = 1.0, err = 0.0;
  const auto n = static_cast<int>(std::lround(1.0 / dt));
  for (int k = 1; k <= n; ++k) {
    y = rk4_step(y, 0.0, dt, [](double x, double) { return -x; });
    err = std::max(err, std::abs(y - std::exp(-k * dt)));
  }
  return err;
}

}  // namespace

TEST(Rk4, ExponentialDecayOneStep) {
  const double y = rk4_step(1.0, 0.0, 0.1, [](double x, double) { return -x; });
  EXPECT_NEAR(y, std::exp(-0.1), 1e-6);
}

TEST(Rk4, ZeroDerivativeExact) {
  EXPECT_EQ(rk4_step(3.25, 0.0, 0.1, [](double, double) { return 0.0; }), 3.25);
}

TEST(Rk4, ConstantDerivativeExact) {
  EXPECT_DOUBLE_EQ(rk4_step(0.0, 1.0, 0.5, [](double, double u) { return u; }), 0.5);
}

TEST(Rk4, FourthOrderConvergence) {
  EXPECT_GE(rk4_max_error(0.1) / rk4_max_error(0.05), 14.0);
}

TEST(Rk4, NonFiniteDerivativeDiverges) {
  const Dynamics f = [](std::span<const double>) {
    return std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
  };
  const std::vector<double> x{1.0};
  EXPECT_THROW(rk4_step(x, 0.1, f), Error);
}

TEST(DelayLine, ThreeSampleShift) {
  DelayLine d(0.3, 0.1);
  EXPECT_EQ(d.samples(), 3u);
  std::vector<double> out;
  for (double x : {1.0, 2.0, 3.0, 4.0}) out.push_back(d.push_pop(x));
  EXPECT_EQ(out, (std::vector<double>{0, 0, 0, 1}));
}

TEST(DelayLine, ZeroDelayIsIdentity) {
  DelayLine d(0.0, 0.1);
  for (double x : {1.5, -2.0, 7.0}) EXPECT_EQ(d.push_pop(x), x);
}

TEST(DelayLine, HalfRoundsAwayFromZero) {
  EXPECT_EQ(DelayLine(0.25, 0.1).samples(), 3u);
}

TEST(Simulate, IntegratorUnderProportionalControl) {
  control::PidController p(control::PidGains{1.0, 0.0, 0.0});
  const auto tr = simulate(integrator(), p, {StepReference{0.0, 1.0, 1.0}}, {}, {},
                           {0.001, 1.001, 0});
  ASSERT_EQ(tr.size(), 1001u);
  EXPECT_NEAR(tr.t[1000], 1.0, 1e-12);
  EXPECT_NEAR(tr.y[1000], 1.0 - std::exp(-1.0), 1e-3);
}

TEST(Simulate, ZeroControllerStaysAtRest) {
  safety::ConstantOutput zero(0.0);
  const auto tr = simulate(make_fopdt(1, 1, 0.5), zero, {StepReference{0, 0, 1}}, {}, {},
                           {0.01, 5.0, 0});
  for (double y : tr.y) EXPECT_EQ(y, 0.0);
}

TEST(Simulate, SameSeedIdentical) {
  control::PidController a(control::PidGains{1.0, 0.5, 0.1});
  control::PidController b(control::PidGains{1.0, 0.5, 0.1});
  DisturbanceSpec d{GaussianDisturbance{0.1}, Injection::input_additive};
  SensorSpec s{0.02, 0.0, 0.0};
  const auto t1 = simulate(make_fopdt(1, 1, 0.5), a, {StepReference{1, 0, 1}}, d, s, {0.01, 5, 9});
  const auto t2 = simulate(make_fopdt(1, 1, 0.5), b, {StepReference{1, 0, 1}}, d, s, {0.01, 5, 9});
  EXPECT_EQ(t1.y, t2.y);
  EXPECT_EQ(t1.u, t2.u);
  EXPECT_EQ(t1.y_meas, t2.y_meas);
  EXPECT_EQ(t1.d, t2.d);
}

TEST(Simulate, StepCountFromConfig) {
  EXPECT_EQ((SimConfig{0.1, 300.0, 0}.steps()), 3000u);
  EXPECT_THROW((SimConfig{0.1, 0.01, 0}.steps()), Error);
}

TEST(Simulate, ActuatorClampHolds) {
  safety::AdversarialOutput adv(50.0, 3);
  struct Finite : Controller {
    safety::AdversarialOutput* a;
    double step(const ControlContext& c) override {
      const double v = a->step(c);
      return std::isfinite(v) ? v : 0.0;
    }
  } ctrl;
  ctrl.a = &adv;
  const auto tr = simulate(make_fopdt(1, 1, 0.5, -2, 3), ctrl, {StepReference{}}, {}, {},
                           {0.01, 20.0, 0});
  for (double u : tr.u) {
    EXPECT_GE(u, -2.0);
    EXPECT_LE(u, 3.0);
  }
}

TEST(Simulate, DivergenceCarriesStep) {
  PlantModel p;
  p.variant = LinearStateSpace{1, {5.0}, {1.0}, {1.0}};
  safety::ConstantOutput one(1.0);
  try {
    simulate(p, one, {StepReference{0, 1, 1}}, {}, {}, {0.1, 100.0, 0});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::diverged);
    ASSERT_TRUE(e.index().has_value());
    EXPECT_GT(*e.index(), 0u);
  }
}

TEST(Simulate, DeadTimeCrossCorrelationPeak) {
  const double dt = 0.01, L = 0.23;
  std::vector<double> u(2000);
  Rng rng(4);
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = (k / 10) % 2 ? rng.uniform(-1, 1) : u[k ? k - 1 : 0];
  OpenLoop ol(u);
  const auto tr = simulate(make_fopdt(1, 0.5, L), ol, {StepReference{}}, {}, {}, {dt, 20.0, 0});
  std::size_t best = 0;
  double best_c = -1;
  for (std::size_t lag = 0; lag < 60; ++lag) {
    double c = 0;
    for (std::size_t k = 0; k + lag + 1 < tr.size(); ++k) {
      c += tr.u[k] * (tr.y[k + lag + 1] - tr.y[k + lag]);
    }
    if (c > best_c) {
      best_c = c;
      best = lag;
    }
  }
  EXPECT_EQ(best, static_cast<std::size_t>(std::lround(L / dt)));
}

TEST(Sensor, PassThroughWhenIdeal) {
  Rng rng(1);
  EXPECT_EQ(apply_sensor(0.234, SensorSpec{}, rng), 0.234);
}

TEST(Sensor, QuantisesToNearestMultiple) {
  Rng rng(1);
  EXPECT_NEAR(apply_sensor(0.234, SensorSpec{0.0, 0.0, 0.1}, rng), 0.2, 1e-15);
}

TEST(Sensor, NoiseStandardDeviation) {
  Rng rng(12);
  const int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = apply_sensor(1.0, SensorSpec{0.01, 0.0, 0.0}, rng) - 1.0;
    s += v;
    s2 += v * v;
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(Sensor, HoldsBetweenSamples) {
  Sensor s(SensorSpec{0.0, 0.3, 0.0}, 0.1, 0);
  EXPECT_EQ(s.apply(1.0, 0), 1.0);
  EXPECT_EQ(s.apply(2.0, 1), 1.0);
  EXPECT_EQ(s.apply(3.0, 2), 1.0);
  EXPECT_EQ(s.apply(4.0, 3), 4.0);
}

TEST(Plant, InvalidParametersRejected) {
  PlantModel p = make_fopdt(1, -1, 0);
  EXPECT_THROW(p.validate(), Error);
  p = make_fopdt(1, 1, -0.1);
  EXPECT_THROW(p.validate(), Error);
  p.variant = SecondOrder{1, 1, -0.5};
  EXPECT_THROW(p.validate(), Error);
}

TEST(Plant, GainStepScalesInput) {
  PlantModel p = make_fopdt(1, 1, 0);
  p.gain_steps.push_back({10.0, 2.0});
  EXPECT_EQ(p.input_gain(5.0), 1.0);
  EXPECT_EQ(p.input_gain(10.0), 2.0);
}

TEST(Reference, ProfileIsZeroOrderHold) {
  ReferenceSpec r{ProfileReference{{0.0, 1.0, 2.0}, {0.5, 1.5, -1.0}}};
  EXPECT_EQ(r.at(0.5), 0.5);
  EXPECT_EQ(r.at(1.0), 1.5);
  EXPECT_EQ(r.at(5.0), -1.0);
}
