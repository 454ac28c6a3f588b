#include "ncdwf/kernels.hpp"

// Compiled with -mavx2 on x86-64 (set in src/CMakeLists.txt); NEON is baseline
// on aarch64. Anywhere else this TU degrades to a stub returning nullptr.
#if defined(__AVX2__) || defined(__ARM_NEON)
#define NCDWF_SIMD_ENABLED 1
#include <experimental/simd>

#include <algorithm>
#include <cmath>
#include <limits>
#endif

namespace ncdwf::kernels {
namespace detail {
const Ops* simd_table();
}

#ifdef NCDWF_SIMD_ENABLED

namespace stdx = std::experimental;

namespace {

using vec = stdx::native_simd<double>;
constexpr std::size_t W = vec::size();

inline vec load(const double* p) { return vec(p, stdx::element_aligned); }

double v_dot(const double* x, const double* y, std::size_t n) {
  vec acc(0.0);
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc += load(&x[i]) * load(&y[i]);
  double r = stdx::reduce(acc);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void v_axpy(double a, const double* x, double* y, std::size_t n) {
  const vec av(a);
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec yv = load(&y[i]) + av * load(&x[i]);
    yv.copy_to(&y[i], stdx::element_aligned);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void v_scal(double a, const double* x, double* y, std::size_t n) {
  const vec av(a);
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec yv = av * load(&x[i]);
    yv.copy_to(&y[i], stdx::element_aligned);
  }
  for (; i < n; ++i) y[i] = a * x[i];
}

void v_add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec r = load(&x[i]) + load(&y[i]);
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void v_sub(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec r = load(&x[i]) - load(&y[i]);
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void v_mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec r = load(&x[i]) * load(&y[i]);
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void v_fmadd(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec r = load(&out[i]) + load(&x[i]) * load(&y[i]);
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

double v_sum(const double* x, std::size_t n) {
  vec acc(0.0);
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc += load(&x[i]);
  double r = stdx::reduce(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double v_max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= W) {
    vec acc = load(&x[0]);
    for (i = W; i + W <= n; i += W) acc = stdx::max(acc, load(&x[i]));
    m = acc[0];
    for (std::size_t l = 1; l < W; ++l) m = std::max(m, static_cast<double>(acc[l]));
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void v_relu(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec xv = load(&x[i]);
    vec r(0.0);
    stdx::where(xv > 0.0, r) = xv;
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_bwd(const double* x, const double* g, double* gx, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec xv = load(&x[i]);
    vec gxv = load(&gx[i]);
    stdx::where(xv > 0.0, gxv) = gxv + load(&g[i]);
    gxv.copy_to(&gx[i], stdx::element_aligned);
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += g[i];
}

void v_square(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec xv = load(&x[i]);
    vec r = xv * xv;
    r.copy_to(&out[i], stdx::element_aligned);
  }
  for (; i < n; ++i) out[i] = x[i] * x[i];
}

// x - x == 0 holds exactly for finite x and fails (NaN) for inf and NaN.
bool v_all_finite(const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) {
    vec xv = load(&x[i]);
    if (!stdx::all_of((xv - xv) == 0.0)) return false;
  }
  for (; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace

const Ops* detail::simd_table() {
  static const Ops ops = {
      "simd",  v_dot,  v_axpy,     v_scal,   v_add,      v_sub,    v_mul,
      v_fmadd, v_sum,  v_max,      v_relu,   v_relu_bwd, v_square, v_all_finite,
  };
  return &ops;
}

#else

const Ops* detail::simd_table() { return nullptr; }

#endif

}  // namespace ncdwf::kernels
