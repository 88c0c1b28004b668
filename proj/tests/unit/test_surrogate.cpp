#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "clcs/dataio.hpp"
#include "clcs/error.hpp"
#include "clcs/rng.hpp"
#include "clcs/surrogate.hpp"

using namespace clcs;
using namespace clcs::surrogate;

namespace {

sim::Trajectory series(const std::vector<double>& y, const std::vector<double>& u, double dt) {
  sim::Trajectory tr;
  tr.dt = dt;
  for (std::size_t k = 0; k < y.size(); ++k) {
    tr.t.push_back(k * dt);
    tr.w.push_back(0.0);
    tr.d.push_back(0.0);
  }
  tr.y = tr.y_meas = y;
  tr.u = u;
  return tr;
}

/// y[k+1] = 0.9 y[k] + 0.1 u[k] under random levels held for 5 samples.
sim::Trajectory linear_map(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> y(n, 0.0), u(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) u[k] = k % 5 ? u[k - 1] : rng.uniform(-1.5, 1.5);
  for (std::size_t k = 0; k + 1 < n; ++k) y[k + 1] = 0.9 * y[k] + 0.1 * u[k];
  return series(y, u, 0.1);
}

sim::Trajectory fopdt_prbs(double amp, std::uint64_t seed, double L = 0.5) {
  const sim::SimConfig cfg{0.1, 300.0, 0};
  dataio::ExcitationSpec ex{dataio::Prbs{9, amp, 0.5, seed}};
  sim::OpenLoop ctl(dataio::generate_excitation(ex, cfg));
  return sim::simulate(sim::make_fopdt(1, 1, L), ctl, {sim::StepReference{0, 0, 0}}, {}, {}, cfg);
}

FitOptions quick(std::size_t epochs = 100) {
  FitOptions o;
  o.hidden = {16};
  o.train.learning_rate = 3e-3;
  o.train.max_epochs = epochs;
  o.train.patience = 0;
  o.train.seed = 4;
  return o;
}

double narx_one_step(const NarxModel& m, const sim::Trajectory& tr, std::size_t k) {
  const auto yh = std::span<const double>(tr.y_meas).first(k + 1);
  const auto uh = std::span<const double>(tr.u).first(k + 1);
  return m.predict_features(m.features(yh, uh));
}

}  // namespace

TEST(RegressionDataset, RowCount) {
  const auto tr = series({1, 2, 3, 4, 5}, {0, 0, 0, 0, 0}, 0.1);
  EXPECT_EQ(make_regression_dataset(tr, 1, 1).size(), 3u);
}

TEST(RegressionDataset, ConstantSeriesTargets) {
  const auto tr = series(std::vector<double>(20, 2.5), std::vector<double>(20, 0.0), 0.1);
  const auto ds = make_regression_dataset(tr, 2, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.targets.at(i, 0), 2.5);
}

TEST(RegressionDataset, RowsReproduceSourceAndLinearRelation) {
  const auto tr = linear_map(60, 1);
  const auto ds = make_regression_dataset(tr, 2, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t k = i + 2;
    EXPECT_EQ(ds.inputs.at(i, 0), tr.y[k]);
    EXPECT_EQ(ds.inputs.at(i, 1), tr.y[k - 1]);
    EXPECT_EQ(ds.inputs.at(i, 2), tr.u[k]);
    EXPECT_EQ(ds.inputs.at(i, 3), tr.u[k - 1]);
    EXPECT_NEAR(ds.targets.at(i, 0), 0.9 * ds.inputs.at(i, 0) + 0.1 * ds.inputs.at(i, 2), 1e-15);
  }
}

TEST(RegressionDataset, NonUniformNeedsResampling) {
  auto tr = linear_map(20, 1);
  tr.t[5] += 0.03;
  tr.dt = 0.0;
  try {
    make_regression_dataset(tr, 2, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::must_resample);
  }
}

TEST(InputDelay, MatchesDeadTime) {
  EXPECT_EQ(estimate_input_delay(fopdt_prbs(1.0, 3, 0.5)), 5u);
}

TEST(FitSurrogate, FopdtOneStepWithinOnePercent) {
  auto o = quick();
  o.input_delay = -1;
  const auto fit = fit_surrogate(fopdt_prbs(1.0, 3), o);
  EXPECT_LT(fit.report.one_step_rmse, 0.01 * fit.report.output_range);
  EXPECT_LE(fit.report.one_step_rmse, fit.report.rollout_rmse);
  EXPECT_EQ(fit.report.input_delay, 5u);
}

TEST(FitSurrogate, ConstantDataPredictsConstant) {
  const auto tr = series(std::vector<double>(200, 0.7), std::vector<double>(200, 0.3), 0.1);
  const auto fit = fit_surrogate(tr, quick(5));
  const std::vector<double> f{0.7, 0.7, 0.3, 0.3};
  EXPECT_NEAR(fit.model.predict_features(f), 0.7, 1e-9);
}

TEST(FitSurrogate, DeterministicReport) {
  const auto tr = linear_map(400, 2);
  const auto a = fit_surrogate(tr, quick(20));
  const auto b = fit_surrogate(tr, quick(20));
  EXPECT_EQ(a.report.one_step_rmse, b.report.one_step_rmse);
  EXPECT_EQ(a.report.rollout_rmse, b.report.rollout_rmse);
  EXPECT_EQ(a.report.history.train_loss, b.report.history.train_loss);
}

TEST(Rollout, GeometricDecay) {
  auto o = quick(300);
  o.p = 1;
  o.q = 1;
  const auto fit = fit_surrogate(linear_map(2000, 5), o);
  const std::vector<double> y0{1.0}, up{0.0}, u(50, 0.0);
  const auto y = narx_rollout(fit.model, y0, up, u);
  ASSERT_EQ(y.size(), 50u);
  for (std::size_t k = 1; k <= 50; ++k) {
    const double expect = std::pow(0.9, static_cast<double>(k));
    EXPECT_NEAR(y[k - 1], expect, 0.05 * y0[0]) << "k " << k;
  }
}

TEST(Rollout, LengthOneEqualsOneStep) {
  const auto tr = linear_map(300, 3);
  const auto fit = fit_surrogate(tr, quick(10));
  const std::size_t k = 100;
  const auto yh = std::span<const double>(tr.y).first(k + 1);
  const auto up = std::span<const double>(tr.u).first(k);
  const std::vector<double> u{tr.u[k]};
  EXPECT_EQ(narx_rollout(fit.model, yh, up, u)[0], narx_one_step(fit.model, tr, k));
}

TEST(Rollout, EquilibriumStaysNearZero) {
  const auto fit = fit_surrogate(linear_map(1000, 6), quick(100));
  const std::vector<double> y0{0.0, 0.0}, up{0.0, 0.0}, u(100, 0.0);
  for (double v : narx_rollout(fit.model, y0, up, u)) EXPECT_NEAR(v, 0.0, 0.02);
}

TEST(Rollout, DivergenceReportsStep) {
  NarxModel m{nnet::Mlp({4, 1}), 2, 2, 0, 0.1, {}, {}};
  m.input_norm = nnet::Normalizer::identity(4);
  m.target_norm = nnet::Normalizer::identity(1);
  m.net.weights(0)[0] = 1e200;
  const std::vector<double> y0{1.0, 1.0}, up{0.0, 0.0}, u(10, 0.0);
  try {
    narx_rollout(m, y0, up, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::rollout_diverged);
    ASSERT_TRUE(e.index().has_value());
  }
}

TEST(Hybrid, ZeroResidualEqualsPhysics) {
  const auto phys = fopdt_physics(1.0, 1.0, 0.1, 0);
  HybridModel h{phys, NarxModel{nnet::Mlp({4, 8, 1}), 2, 2, 0, 0.1, {}, {}}};
  h.residual.input_norm = nnet::Normalizer::identity(4);
  h.residual.target_norm = nnet::Normalizer::identity(1);
  h.residual.target_norm.mean[0] = 3.0;
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> yh{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const std::vector<double> uh{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    EXPECT_EQ(hybrid_predict(h, yh, uh), phys(yh, uh));
  }
}

TEST(Hybrid, ZeroPhysicsDegeneratesToNarx) {
  const auto tr = linear_map(400, 2);
  const PhysicsFn zero = [](std::span<const double>, std::span<const double>) { return 0.0; };
  const auto hy = fit_hybrid(tr, zero, quick(30));
  const auto& m = hy.model.residual;
  for (std::size_t k = 10; k < 20; ++k) {
    const auto yh = std::span<const double>(tr.y).first(k + 1);
    const auto uh = std::span<const double>(tr.u).first(k + 1);
    const auto f = m.features(yh, uh);
    std::vector<double> z(f.size());
    m.input_norm.normalize(f, z);
    EXPECT_NEAR(hybrid_predict(hy.model, yh, uh), m.net.forward(z)[0] * m.target_norm.std[0],
                1e-12);
  }
}

TEST(Hybrid, ExtrapolatesBetterThanNarx) {
  const auto train = fopdt_prbs(1.0, 3, 0.0);
  const auto test = fopdt_prbs(1.5, 11, 0.0);
  auto o = quick(100);
  const auto phys = fopdt_physics(1.0, 1.0, 0.1, 0);
  const auto hy = fit_hybrid(train, phys, o);
  const auto narx = fit_surrogate(train, o);
  double e_h = 0.0, e_n = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 2; k + 1 < test.size(); ++k) {
    const auto yh = std::span<const double>(test.y_meas).first(k + 1);
    const auto uh = std::span<const double>(test.u).first(k + 1);
    e_h += std::pow(hybrid_predict(hy.model, yh, uh) - test.y[k + 1], 2);
    e_n += std::pow(narx_one_step(narx.model, test, k) - test.y[k + 1], 2);
    ++n;
  }
  EXPECT_LE(std::sqrt(e_h / n), std::sqrt(e_n / n));
}

TEST(Persistence, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "clcs_surrogate_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.narx").string();
  const auto tr = linear_map(300, 3);
  auto o = quick(10);
  o.input_delay = 1;
  const auto fit = fit_surrogate(tr, o);
  save_narx(path, fit.model);
  const auto back = load_narx(path);
  EXPECT_EQ(back.p, fit.model.p);
  EXPECT_EQ(back.q, fit.model.q);
  EXPECT_EQ(back.input_delay, 1u);
  EXPECT_EQ(back.dt, fit.model.dt);
  for (std::size_t k = 5; k < 50; ++k) {
    EXPECT_EQ(narx_one_step(back, tr, k), narx_one_step(fit.model, tr, k));
  }
  std::filesystem::remove_all(dir);
}
