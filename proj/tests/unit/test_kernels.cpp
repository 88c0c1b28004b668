#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "clcs/error.hpp"
#include "clcs/kernels.hpp"
#include "clcs/nnet.hpp"
#include "clcs/rng.hpp"

using namespace clcs;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<kernels::Backend> simd_backends() {
  std::vector<kernels::Backend> out;
  for (auto b : {kernels::Backend::avx2, kernels::Backend::neon}) {
    if (kernels::backend_supported(b)) out.push_back(b);
  }
  return out;
}

struct BackendGuard {
  kernels::Backend saved = kernels::active_backend();
  ~BackendGuard() { kernels::set_backend(saved); }
};

}  // namespace

TEST(Kernels, ScalarAlwaysSupported) {
  EXPECT_TRUE(kernels::backend_supported(kernels::Backend::scalar));
}

TEST(Kernels, UnsupportedBackendRejected) {
  for (auto b : {kernels::Backend::avx2, kernels::Backend::neon}) {
    if (!kernels::backend_supported(b)) EXPECT_THROW(kernels::set_backend(b), Error);
  }
}

TEST(Kernels, RawDotMatchesScalarAcrossLengths) {
  for (std::size_t n = 0; n < 70; ++n) {
    const auto a = random_vec(n, 10 + n);
    const auto b = random_vec(n, 200 + n);
    const double ref = kernels::scalar::dot(a.data(), b.data(), n);
    double naive = 0.0;
    for (std::size_t i = 0; i < n; ++i) naive += a[i] * b[i];
    EXPECT_NEAR(ref, naive, 1e-12);
    if (kernels::backend_supported(kernels::Backend::avx2)) {
      EXPECT_NEAR(kernels::avx2::dot(a.data(), b.data(), n), ref, 1e-12 * (1.0 + std::abs(ref)));
    }
    if (kernels::backend_supported(kernels::Backend::neon)) {
      EXPECT_NEAR(kernels::neon::dot(a.data(), b.data(), n), ref, 1e-12 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(Kernels, RawAxpyBitIdentical) {
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
    const auto x = random_vec(n, n + 1);
    auto y_ref = random_vec(n, n + 50);
    auto y_simd = y_ref;
    kernels::scalar::axpy(0.37, x.data(), y_ref.data(), n);
    if (kernels::backend_supported(kernels::Backend::avx2)) {
      kernels::avx2::axpy(0.37, x.data(), y_simd.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y_simd[i], y_ref[i], 1e-15);
    }
  }
}

TEST(Kernels, DispatchedOpsEquivalent) {
  BackendGuard guard;
  const std::size_t rows = 13, cols = 11;
  const auto w = random_vec(rows * cols, 1);
  const auto x = random_vec(cols, 2);
  const auto bias = random_vec(rows, 3);
  const auto g = random_vec(rows, 4);

  kernels::set_backend(kernels::Backend::scalar);
  std::vector<double> out_ref(rows), gt_ref(cols, 0.5), w_ref = w;
  kernels::gemv(w, rows, cols, x, bias, out_ref);
  kernels::gemv_t_acc(w, rows, cols, g, gt_ref);
  kernels::rank1_acc(w_ref, rows, cols, g, x);

  for (auto b : simd_backends()) {
    kernels::set_backend(b);
    std::vector<double> out(rows), gt(cols, 0.5), w2 = w;
    kernels::gemv(w, rows, cols, x, bias, out);
    kernels::gemv_t_acc(w, rows, cols, g, gt);
    kernels::rank1_acc(w2, rows, cols, g, x);
    for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(out[i], out_ref[i], 1e-12);
    for (std::size_t i = 0; i < cols; ++i) EXPECT_NEAR(gt[i], gt_ref[i], 1e-12);
    for (std::size_t i = 0; i < w2.size(); ++i) EXPECT_NEAR(w2[i], w_ref[i], 1e-12);
  }
}

TEST(Kernels, NetworkForwardAndGradientEquivalent) {
  BackendGuard guard;
  const auto net = nnet::Mlp::random({9, 24, 17, 3}, 5);
  nnet::Matrix in(20, 9), tg(20, 3);
  Rng rng(6);
  for (auto& v : in.data) v = rng.uniform(-2, 2);
  for (auto& v : tg.data) v = rng.uniform(-1, 1);

  kernels::set_backend(kernels::Backend::scalar);
  const auto ref = nnet::mse_grad(net, in, tg);
  const auto out_ref = net.forward(in.row(0));
  for (auto b : simd_backends()) {
    kernels::set_backend(b);
    const auto got = nnet::mse_grad(net, in, tg);
    EXPECT_NEAR(got.loss, ref.loss, 1e-12);
    for (std::size_t i = 0; i < ref.grad.size(); ++i) EXPECT_NEAR(got.grad[i], ref.grad[i], 1e-12);
    const auto out = net.forward(in.row(0));
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], out_ref[i], 1e-12);
  }
}
