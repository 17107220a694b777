#pragma once

// Double-precision math kernels behind the neural module. A scalar reference
// implementation always exists; an AVX2 variant is selected at runtime when
// the CPU supports it (and the build enabled it). The two are equivalence-
// tested against each other; summation order differs, so results agree to
// rounding, not bitwise.
//
// Selection: automatic, overridable with the ICSF_KERNELS environment
// variable ("scalar", "avx2", "auto") or force_backend().
//
// Transcendentals (exp, tanh) stay on libm in every backend so that a given
// machine produces identical numbers regardless of vector width elsewhere.

#include <cstddef>

namespace icsf::kernels {

struct Ops {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double k, const double* x, double* y, std::size_t n);  // y += k*x
  void (*scale)(double k, const double* x, double* y, std::size_t n); // y = k*x
  void (*add)(const double* a, const double* b, double* y, std::size_t n);
  void (*mul)(const double* a, const double* b, double* y, std::size_t n);
  void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);  // y += a*b

  // Row-major W of shape rows x cols.
  void (*gemv)(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);    // y = W x
  void (*gemv_t)(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols);  // y += W^T x
  void (*ger)(const double* u, const double* v, double* w, std::size_t rows, std::size_t cols);     // W += u v^T

  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);  // n >= 1

  void (*relu)(const double* x, double* y, std::size_t n);
  void (*relu_bwd_acc)(const double* dy, const double* x, double* dx, std::size_t n);
  void (*tanh_bwd_acc)(const double* dy, const double* y, double* dx, std::size_t n);     // dx += dy*(1-y^2)
  void (*sigmoid_bwd_acc)(const double* dy, const double* y, double* dx, std::size_t n);  // dx += dy*y*(1-y)
};

const Ops& scalar_ops();

// Null when this build has no AVX2 translation unit or the CPU lacks
// AVX2+FMA.
const Ops* avx2_ops();

// The active backend. First call resolves ICSF_KERNELS; defaults to the
// fastest available.
const Ops& ops();

// "scalar", "avx2", or "auto". Throws std::invalid_argument on unknown or
// unavailable names.
void force_backend(const char* name);

}  // namespace icsf::kernels
