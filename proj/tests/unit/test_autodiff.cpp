#include <gtest/gtest.h>

#include <cmath>

#include "clcs/autodiff.hpp"
#include "clcs/nnet.hpp"
#include "clcs/rng.hpp"

using namespace clcs;

TEST(Tape, ScalarChainRule) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(0.7), y = tape.leaf(-1.3);
  const ad::Var f = ad::tanh(x * y) + ad::exp(x) / (y * y) - ad::sqrt(x);
  tape.backward(f);
  const double t = std::tanh(0.7 * -1.3);
  EXPECT_NEAR(tape.adjoint(x), (1 - t * t) * -1.3 + std::exp(0.7) / (1.69) - 0.5 / std::sqrt(0.7), 1e-12);
  EXPECT_NEAR(tape.adjoint(y), (1 - t * t) * 0.7 - 2 * std::exp(0.7) / std::pow(-1.3, 3), 1e-12);
}

TEST(Tape, SigmoidAndAbs) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(-0.4);
  const ad::Var f = ad::sigmoid(x) * ad::abs(x);
  tape.backward(f);
  const double s = 1 / (1 + std::exp(0.4));
  EXPECT_NEAR(tape.adjoint(x), s * (1 - s) * 0.4 - s, 1e-12);
}

TEST(Tape, ConstantsCarryNoGradient) {
  ad::Var c = 3.0;
  EXPECT_TRUE(c.is_constant());
  ad::Tape tape;
  const ad::Var x = tape.leaf(2.0);
  const ad::Var f = x * c + c;
  tape.backward(f);
  EXPECT_EQ(tape.adjoint(x), 3.0);
}

TEST(Tape, ClampCutsGradient) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(5.0);
  const ad::Var f = ad::clamp_value(x, -1.0, 1.0) * 2.0;
  tape.backward(f);
  EXPECT_EQ(f.v, 2.0);
  EXPECT_EQ(tape.adjoint(x), 0.0);
}

TEST(Tape, MlpCallMatchesNetworkAndFiniteDifferences) {
  const nnet::Mlp net = nnet::Mlp::random({3, 5, 2}, 4);
  const std::vector<double> x0{0.2, -0.7, 1.1};
  ad::Tape tape;
  std::vector<ad::Var> x;
  for (double v : x0) x.push_back(tape.leaf(v));
  std::vector<double> pg(net.parameter_count(), 0.0);
  const auto out = tape.mlp(net, x, pg);
  const auto ref = net.forward(x0);
  EXPECT_NEAR(out[0].v, ref[0], 1e-15);
  EXPECT_NEAR(out[1].v, ref[1], 1e-15);
  const ad::Var loss = out[0] * out[0] + out[1] * 3.0;
  tape.backward(loss);

  const auto f = [&](const nnet::Mlp& n, const std::vector<double>& in) {
    const auto o = n.forward(in);
    return o[0] * o[0] + 3.0 * o[1];
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < 3; ++i) {
    auto up = x0, dn = x0;
    up[i] += h;
    dn[i] -= h;
    EXPECT_NEAR(tape.adjoint(x[i]), (f(net, up) - f(net, dn)) / (2 * h), 1e-8);
  }
  nnet::Mlp probe = net;
  auto p = probe.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double a = f(probe, x0);
    p[i] = keep - h;
    const double b = f(probe, x0);
    p[i] = keep;
    EXPECT_NEAR(pg[i], (a - b) / (2 * h), 1e-8);
  }
}
