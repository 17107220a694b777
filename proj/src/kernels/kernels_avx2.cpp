// AVX2+FMA variants of the math kernels. This translation unit is compiled
// with -mavx2 -mfma and only ever executed after a runtime cpuid check.

#include "icsf/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace icsf::kernels {

namespace avx2 {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double k, const double* x, double* y, std::size_t n) {
  __m256d vk = _mm256_set1_pd(k);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vk, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += k * x[i];
}

void scale(double k, const double* x, double* y, std::size_t n) {
  __m256d vk = _mm256_set1_pd(k);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(vk, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = k * x[i];
}

void add(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void mul_acc(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void gemv(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w + r * cols, x, cols);
}

void gemv_t(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(x[r], w + r * cols, y, cols);
}

void ger(const double* u, const double* v, double* w, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(u[r], v, w + r * cols, cols);
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double max(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m = x[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vm);
    m = lanes[0];
    for (int l = 1; l < 4; ++l)
      if (lanes[l] > m) m = lanes[l];
  } else {
    i = 1;
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void relu(const double* x, double* y, std::size_t n) {
  __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_acc(const double* dy, const double* x, double* dx, std::size_t n) {
  __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

void tanh_bwd_acc(const double* dy, const double* y, double* dx, std::size_t n) {
  __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d deriv = _mm256_fnmadd_pd(vy, vy, one);  // 1 - y*y
    _mm256_storeu_pd(dx + i,
                     _mm256_fmadd_pd(_mm256_loadu_pd(dy + i), deriv, _mm256_loadu_pd(dx + i)));
  }
  for (; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void sigmoid_bwd_acc(const double* dy, const double* y, double* dx, std::size_t n) {
  __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d deriv = _mm256_mul_pd(vy, _mm256_sub_pd(one, vy));
    _mm256_storeu_pd(dx + i,
                     _mm256_fmadd_pd(_mm256_loadu_pd(dy + i), deriv, _mm256_loadu_pd(dx + i)));
  }
  for (; i < n; ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
}

}  // namespace avx2

const Ops* avx2_ops() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const Ops ops = {
      "avx2",       avx2::dot,          avx2::axpy,         avx2::scale,
      avx2::add,    avx2::mul,          avx2::mul_acc,      avx2::gemv,
      avx2::gemv_t, avx2::ger,          avx2::sum,          avx2::max,
      avx2::relu,   avx2::relu_bwd_acc, avx2::tanh_bwd_acc, avx2::sigmoid_bwd_acc,
  };
  return &ops;
}

}  // namespace icsf::kernels

#else

namespace icsf::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace icsf::kernels

#endif
