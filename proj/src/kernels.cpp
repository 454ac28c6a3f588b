#include "ncdwf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

namespace ncdwf::kernels {
namespace detail {
const Ops* simd_table();
}

const Ops* simd() {
  static const Ops* table = []() -> const Ops* {
    const Ops* t = detail::simd_table();
    if (!t) return nullptr;
#if defined(__x86_64__) || defined(_M_X64)
    // The SIMD TU is compiled for AVX2, so refuse it on older CPUs.
    if (!__builtin_cpu_supports("avx2")) return nullptr;
#endif
    return t;
  }();
  return table;
}

const Ops& active() {
  static const Ops* chosen = []() -> const Ops* {
    const char* env = std::getenv("NCDWF_SIMD");
    const std::string mode = env ? env : "auto";
    if (mode == "scalar") return &scalar();
    const Ops* s = simd();
    return s ? s : &scalar();  // "simd" without hardware support falls back
  }();
  return *chosen;
}

std::string active_name() { return active().name; }

void exp_vec(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void log_vec(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void sqrt_vec(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x[i]);
}

void sigmoid_vec(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
}

void div(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / y[i];
}

void rdiv(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a / x[i];
}

void matmul_nt(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc) {
  const Ops& o = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = o.dot(a, B + j * k, k);
      c[j] = acc ? c[j] + v : v;
    }
  }
}

void matmul_nn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc) {
  const Ops& o = active();
  if (!acc) std::fill(C, C + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t l = 0; l < k; ++l) o.axpy(a[l], B + l * n, c, n);
  }
}

void matmul_tn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc) {
  const Ops& o = active();
  if (!acc) std::fill(C, C + m * n, 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    const double* a = A + l * m;
    const double* b = B + l * n;
    for (std::size_t i = 0; i < m; ++i) o.axpy(a[i], b, C + i * n, n);
  }
}

}  // namespace ncdwf::kernels
