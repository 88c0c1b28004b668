#include <atomic>
#include <cstdlib>
#include <string>

#include "clcs/error.hpp"
#include "clcs/kernels.hpp"

namespace clcs::kernels {
namespace {

struct Table {
  Backend backend;
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
};

constexpr Table kScalar{Backend::scalar, &scalar::dot, &scalar::axpy};
constexpr Table kAvx2{Backend::avx2, &avx2::dot, &avx2::axpy};
constexpr Table kNeon{Backend::neon, &neon::dot, &neon::axpy};

const Table* table_for(Backend b) {
  switch (b) {
    case Backend::avx2: return &kAvx2;
    case Backend::neon: return &kNeon;
    case Backend::scalar: break;
  }
  return &kScalar;
}

const Table* detect() {
  if (const char* env = std::getenv("CLCS_KERNEL")) {
    if (std::string(env) == "scalar") return &kScalar;
  }
  if (backend_supported(Backend::avx2)) return &kAvx2;
  if (backend_supported(Backend::neon)) return &kNeon;
  return &kScalar;
}

std::atomic<const Table*>& active() {
  static std::atomic<const Table*> t{detect()};
  return t;
}

void check(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(Errc::dimension_mismatch,
                "kernel operand sizes " + std::to_string(a) + " and " +
                    std::to_string(b));
  }
}

}  // namespace

std::string_view to_string(Backend b) noexcept {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend b) noexcept {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() noexcept { return active().load()->backend; }

void set_backend(Backend b) {
  if (!backend_supported(b)) {
    throw Error(Errc::invalid_argument,
                "kernel backend not supported on this CPU: " +
                    std::string(to_string(b)));
  }
  active().store(table_for(b));
}

double dot(std::span<const double> a, std::span<const double> b) {
  check(a.size(), b.size());
  return active().load()->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check(x.size(), y.size());
  active().load()->axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> out) {
  check(w.size(), rows * cols);
  check(x.size(), cols);
  check(bias.size(), rows);
  check(out.size(), rows);
  const Table* t = active().load();
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = bias[r] + t->dot(w.data() + r * cols, x.data(), cols);
  }
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out) {
  check(w.size(), rows * cols);
  check(g.size(), rows);
  check(out.size(), cols);
  const Table* t = active().load();
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) t->axpy(g[r], w.data() + r * cols, out.data(), cols);
  }
}

void rank1_acc(std::span<double> w, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
  check(w.size(), rows * cols);
  check(g.size(), rows);
  check(x.size(), cols);
  const Table* t = active().load();
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) t->axpy(g[r], x.data(), w.data() + r * cols, cols);
  }
}

}  // namespace clcs::kernels
