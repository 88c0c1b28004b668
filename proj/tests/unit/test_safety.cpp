#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "clcs/error.hpp"
#include "clcs/ident.hpp"
#include "clcs/metrics.hpp"
#include "clcs/pid.hpp"
#include "clcs/rng.hpp"
#include "clcs/safety.hpp"

using namespace clcs;
using namespace clcs::safety;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

control::PidGains zn_fallback(double u_min, double u_max) {
  const auto relay =
      ident::relay_experiment(sim::make_fopdt(1, 1, 0.5, u_min, u_max), 1.0, {0.001, 40.0, 0});
  auto g = ident::tune_ziegler_nichols(relay.ultimate, ident::ZnKind::PID);
  g.u_min = u_min;
  g.u_max = u_max;
  return g;
}

SwitchParams params(double hi, double lo, std::size_t dwell, double agree = kInf) {
  SwitchParams p;
  p.theta_hi = hi;
  p.theta_lo = lo;
  p.dwell = dwell;
  p.agree_tol = agree;
  return p;
}

const double* column(const sim::Trajectory& tr, const std::string& name) {
  const auto* c = tr.column(name);
  return c ? c->data() : nullptr;
}

}  // namespace

TEST(Switch, NonFiniteAiFallsBackImmediately) {
  SwitchSupervisor sup(params(0.1, 0.05, 5));
  const auto r = supervise_step(sup, kNaN, 0.4, 0.0, -1, 1, 3, 0.3);
  EXPECT_EQ(r.mode, Mode::fallback);
  EXPECT_EQ(r.u, 0.4);
  ASSERT_EQ(sup.log().size(), 1u);
  EXPECT_EQ(sup.log()[0].cause, "nonfinite");
  EXPECT_EQ(sup.log()[0].step, 3u);
}

TEST(Switch, OutOfRangeFallsBackImmediately) {
  SwitchSupervisor sup(params(0.1, 0.05, 5));
  EXPECT_EQ(supervise_step(sup, 1.5, 0.2, 0.0, -1, 1).mode, Mode::fallback);
  EXPECT_EQ(sup.log()[0].cause, "out-of-range");
}

TEST(Switch, CalmRunStaysAi) {
  SwitchSupervisor sup(params(0.1, 0.05, 5));
  Rng rng(1);
  for (std::size_t k = 0; k < 1000; ++k) {
    const double u_ai = rng.uniform(-1, 1);
    const auto r = supervise_step(sup, u_ai, 0.0, rng.uniform(-0.05, 0.05), -1, 1, k);
    EXPECT_EQ(r.mode, Mode::ai);
    EXPECT_EQ(r.u, u_ai);
  }
  EXPECT_TRUE(sup.log().empty());
}

TEST(Switch, ErrorThresholdNeedsDwell) {
  SwitchSupervisor sup(params(0.1, 0.05, 3));
  EXPECT_EQ(sup.update(0.0, 0.0, 0.5, -1, 1), Mode::ai);
  EXPECT_EQ(sup.update(0.0, 0.0, 0.5, -1, 1), Mode::ai);
  EXPECT_EQ(sup.update(0.0, 0.0, 0.5, -1, 1), Mode::fallback);
  EXPECT_EQ(sup.log().back().cause, "error-threshold");
  EXPECT_EQ(sup.update(0.0, 0.0, 0.01, -1, 1), Mode::fallback);
  EXPECT_EQ(sup.update(0.0, 0.0, 0.01, -1, 1), Mode::fallback);
  EXPECT_EQ(sup.update(0.0, 0.0, 0.01, -1, 1), Mode::ai);
  EXPECT_EQ(sup.log().back().cause, "recovered");
}

TEST(Switch, RecoveryRequiresAgreement) {
  SwitchSupervisor sup(params(0.1, 0.05, 2, 0.1));
  sup.update(kNaN, 0.0, 0.0, -1, 1);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(sup.update(0.5, 0.0, 0.0, -1, 1), Mode::fallback);
  sup.update(0.05, 0.0, 0.0, -1, 1);
  EXPECT_EQ(sup.update(0.05, 0.0, 0.0, -1, 1), Mode::ai);
}

TEST(Switch, HysteresisUnderErrorFuzz) {
  const std::size_t H = 5;
  SwitchSupervisor sup(params(0.2, 0.1, H));
  Rng rng(7);
  double e = 0.0;
  for (std::size_t k = 0; k < 100000; ++k) {
    e = 0.9 * e + 0.08 * rng.normal();
    sup.update(rng.uniform(-1, 1), 0.0, e, -1, 1, k);
  }
  const auto& log = sup.log();
  ASSERT_GT(log.size(), 10u);
  for (std::size_t i = 1; i < log.size(); ++i) {
    EXPECT_GE(log[i].step - log[i - 1].step, H);
    EXPECT_NE(log[i].to, log[i - 1].to);
  }
}

TEST(Switch, SelectedOutputFiniteAndInLimits) {
  SwitchSupervisor sup(params(0.2, 0.1, 3));
  AdversarialOutput adv(5.0, 3);
  Rng rng(2);
  for (std::size_t k = 0; k < 100000; ++k) {
    const double u_fb = rng.uniform(-1, 1);
    const auto r = supervise_step(sup, adv.next(), u_fb, rng.uniform(-0.3, 0.3), -1, 1, k);
    ASSERT_TRUE(std::isfinite(r.u));
    ASSERT_GE(r.u, -1.0);
    ASSERT_LE(r.u, 1.0);
  }
}

TEST(Switch, NonFiniteFallbackIsUnrecoverable) {
  SwitchSupervisor sup(params(0.1, 0.05, 5));
  try {
    sup.update(0.0, kInf, 0.0, -1, 1, 12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unrecoverable_fault);
    EXPECT_EQ(e.index(), std::optional<std::size_t>(12));
  }
}

TEST(Switch, ParameterValidation) {
  EXPECT_THROW(SwitchSupervisor(params(0.1, 0.1, 5)), Error);
  EXPECT_THROW(SwitchSupervisor(params(0.1, -0.1, 5)), Error);
  EXPECT_THROW(SwitchSupervisor(params(0.1, 0.05, 0)), Error);
}

TEST(Switch, TransitionsCsv) {
  SwitchSupervisor sup(params(0.1, 0.05, 1));
  sup.update(kNaN, 0.0, 0.0, -1, 1, 4, 0.4);
  sup.update(0.0, 0.0, 0.0, -1, 1, 5, 0.5);
  std::ostringstream os;
  write_transitions_csv(os, sup.log());
  EXPECT_EQ(os.str(), "step,time,direction,cause\n4,0.4,AI->FALLBACK,nonfinite\n"
                      "5,0.5,FALLBACK->AI,recovered\n");
}

TEST(Supervised, BumplessHandover) {
  auto fb = control::PidGains{};
  fb.kp = 1.2;
  fb.ki = 0.8;
  fb.kd = 0.1;
  fb.u_min = -5;
  fb.u_max = 5;
  SupervisedController sc(std::make_unique<ConstantOutput>(0.7),
                          std::make_unique<control::PidController>(fb), params(0.2, 0.1, 5));
  const std::vector<double> y{0.0};
  std::vector<double> u;
  for (std::size_t k = 0; k < 20; ++k) {
    u.push_back(sc.step({k, k * 0.1, 0.1, 1.0, y, -5, 5}));
  }
  ASSERT_EQ(sc.handover_jumps().size(), 1u);
  EXPECT_LE(sc.handover_jumps()[0], 1e-6);
  const std::size_t ks = sc.supervisor().log()[0].step;
  EXPECT_EQ(ks, 4u);
  EXPECT_LE(std::abs(u[ks] - u[ks - 1]), 1e-6);
}

TEST(Supervised, AdversarialMaxOutputRecovered) {
  const double lo = -3, hi = 3;
  const auto plant = sim::make_fopdt(1, 1, 0.5, lo, hi);
  const sim::ReferenceSpec ref{sim::StepReference{0.0, 0.0, 1.0}};
  const sim::SimConfig cfg{0.01, 40.0, 0};
  SupervisedController sc(std::make_unique<ConstantOutput>(hi),
                          std::make_unique<control::PidController>(zn_fallback(lo, hi)),
                          params(0.2, 0.1, 5, 0.05 * (hi - lo)));
  const auto guarded = sim::simulate(plant, sc, ref, {}, {}, cfg);
  ConstantOutput raw(hi);
  const auto bare = sim::simulate(plant, raw, ref, {}, {}, cfg);
  EXPECT_TRUE(metrics::compute_step_metrics(guarded).settled);
  EXPECT_FALSE(metrics::compute_step_metrics(bare).settled);
  ASSERT_FALSE(sc.supervisor().log().empty());
  EXPECT_EQ(sc.supervisor().log()[0].to, Mode::fallback);
  for (double j : sc.handover_jumps()) EXPECT_LE(j, 1e-6);
  EXPECT_NE(column(guarded, "mode"), nullptr);
}

TEST(Supervised, FallbackFaultIsUnrecoverable) {
  auto fb = control::PidGains{};
  fb.kp = 1.0;
  SupervisedController sc(std::make_unique<ConstantOutput>(0.0),
                          std::make_unique<control::PidController>(fb), params(0.2, 0.1, 5));
  const std::vector<double> y{kNaN};
  EXPECT_THROW(sc.step({0, 0.0, 0.1, 1.0, y, -1, 1}), Error);
}

TEST(Blend, Examples) {
  BoundedBlender b({0.2});
  EXPECT_DOUBLE_EQ(blend_step(b, 1.0, 0.5), 1.2);
  EXPECT_DOUBLE_EQ(blend_step(b, 1.0, -0.05), 0.95);
  EXPECT_EQ(blend_step(b, 1.0, kNaN), 1.0);
  EXPECT_EQ(b.absorbed().size(), 1u);
  EXPECT_EQ(blend_step(b, 1.0, kInf), 1.0);
  EXPECT_EQ(b.absorbed().size(), 2u);
}

TEST(Blend, ActuatorClamp) {
  BoundedBlender b({0.5});
  EXPECT_EQ(b.blend(0.9, 0.4, -1, 1), 1.0);
  EXPECT_EQ(b.blend(-2.0, -0.4, -1, 1), -1.0);
}

TEST(Blend, NonFiniteConventionalIsUnrecoverable) {
  BoundedBlender b({0.2});
  try {
    b.blend(kNaN, 0.0, -1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unrecoverable_fault);
  }
  EXPECT_THROW(BoundedBlender({-0.1}), Error);
}

TEST(Blend, BoundedInfluenceFuzz) {
  Rng rng(11);
  AdversarialOutput adv(10.0, 5);
  std::size_t violations = 0;
  for (std::size_t k = 0; k < 100000; ++k) {
    const double delta = rng.uniform(0.0, 0.5);
    BoundedBlender b({delta});
    const double u_conv = rng.uniform(-2.0, 2.0);
    const double u = b.blend(u_conv, adv.next(), -1.5, 1.5, 0, k);
    if (!(std::abs(u - std::clamp(u_conv, -1.5, 1.5)) <= delta) || u < -1.5 || u > 1.5) {
      ++violations;
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Blend, ClosedLoopBoundedInfluence) {
  const double delta = 0.1;
  BlendedController bc(std::make_unique<control::PidController>(zn_fallback(-3, 3)),
                       std::make_unique<AdversarialOutput>(1.0, 9), delta);
  const auto tr = sim::simulate(sim::make_fopdt(1, 1, 0.5, -3, 3), bc,
                                {sim::StepReference{0.0, 0.0, 1.0}}, {}, {}, {0.01, 30.0, 0});
  const double* conv = column(tr, "u_conv");
  ASSERT_NE(conv, nullptr);
  double worst = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) worst = std::max(worst, std::abs(tr.u[k] - conv[k]));
  EXPECT_LE(worst, delta);
  EXPECT_GT(bc.blender().absorbed().size(), 0u);
}

TEST(Switch, InvalidOutputOverridesDwellAfterRecovery) {
  SwitchSupervisor sup(params(0.1, 0.05, 3));
  sup.update(kNaN, 0.0, 0.0, -1, 1, 0);
  for (std::size_t k = 1; k <= 3; ++k) sup.update(0.0, 0.0, 0.0, -1, 1, k);
  ASSERT_EQ(sup.mode(), Mode::ai);
  EXPECT_EQ(sup.update(kNaN, 0.0, 0.0, -1, 1, 4), Mode::fallback);
}
