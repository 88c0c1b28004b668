#pragma once

// Dense double-precision kernels behind the network engine.
//
// Every kernel has a scalar reference implementation; SIMD variants (AVX2 on
// x86-64, NEON on aarch64) are chosen once at startup from the CPU features.
// The environment variable CLCS_KERNEL=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace clcs::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view to_string(Backend b) noexcept;

bool backend_supported(Backend b) noexcept;
Backend active_backend() noexcept;
/// Throws clcs::Error(invalid_argument) if the backend is not available.
void set_backend(Backend b);

double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// out = W x + bias, W row-major rows x cols.
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> out);
/// out += W^T g
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out);
/// W += g x^T
void rank1_acc(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x);

// Raw per-backend entry points, exposed for equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace neon

}  // namespace clcs::kernels
