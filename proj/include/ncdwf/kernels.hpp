#pragma once

#include <cstddef>
#include <string>

// Dense double-precision inner loops. Every arithmetic-heavy routine in the
// library goes through this layer, so the scalar and SIMD builds can be
// compared kernel-by-kernel and swapped at runtime without touching callers.
namespace ncdwf::kernels {

// Data-parallel primitive set. Two implementations exist: a scalar reference
// and a SIMD variant (std::experimental::simd, compiled for AVX2 on x86-64
// and NEON on aarch64). Elementwise kernels agree bit-for-bit; reductions may
// differ in the last few ulps because lane accumulation reorders the sums.
struct Ops {
  const char* name;

  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);  // y += a*x
  void (*scal)(double a, const double* x, double* y, std::size_t n);  // y  = a*x
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  void (*fmadd)(const double* x, const double* y, double* out, std::size_t n);  // out += x*y
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);  // n >= 1
  void (*relu)(const double* x, double* out, std::size_t n);
  void (*relu_bwd)(const double* x, const double* g, double* gx, std::size_t n);  // gx += g where x > 0
  void (*square)(const double* x, double* out, std::size_t n);
  bool (*all_finite)(const double* x, std::size_t n);
};

/// Scalar reference kernels. Always available; the baseline for equivalence
/// tests.
const Ops& scalar();

/// SIMD kernels, or nullptr when this build/CPU cannot run them.
const Ops* simd();

/// The kernel set selected at startup: the SIMD variant when the CPU supports
/// it, unless overridden by NCDWF_SIMD=scalar|simd|auto.
const Ops& active();

std::string active_name();

// Transcendentals are shared between both variants (plain libm loops) so the
// scalar and SIMD builds produce identical values for them.
void exp_vec(const double* x, double* out, std::size_t n);
void log_vec(const double* x, double* out, std::size_t n);
void sqrt_vec(const double* x, double* out, std::size_t n);
void sigmoid_vec(const double* x, double* out, std::size_t n);
void div(const double* x, const double* y, double* out, std::size_t n);   // out = x / y
void rdiv(double a, const double* x, double* out, std::size_t n);         // out = a / x

// Small row-major matrix products built on the active dot/axpy kernels.
// acc=false overwrites C, acc=true accumulates into it.

// C[m×n] (+)= A[m×k] · B[n×k]^T
void matmul_nt(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc);
// C[m×n] (+)= A[m×k] · B[k×n]
void matmul_nn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc);
// C[m×n] (+)= A[k×m]^T · B[k×n]
void matmul_tn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n, bool acc);

}  // namespace ncdwf::kernels
