#include "icsf/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace icsf::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double k, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += k * x[i];
}

void scale(double k, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = k * x[i];
}

void add(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void mul_acc(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
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
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double max(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_acc(const double* dy, const double* x, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

void tanh_bwd_acc(const double* dy, const double* y, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void sigmoid_bwd_acc(const double* dy, const double* y, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
}

}  // namespace scalar

const Ops& scalar_ops() {
  static const Ops ops = {
      "scalar",       scalar::dot,          scalar::axpy,         scalar::scale,
      scalar::add,    scalar::mul,          scalar::mul_acc,      scalar::gemv,
      scalar::gemv_t, scalar::ger,          scalar::sum,          scalar::max,
      scalar::relu,   scalar::relu_bwd_acc, scalar::tanh_bwd_acc, scalar::sigmoid_bwd_acc,
  };
  return ops;
}

namespace {

const Ops* g_active = nullptr;

const Ops* pick_default() {
  if (const Ops* avx2 = avx2_ops()) return avx2;
  return &scalar_ops();
}

const Ops* resolve_env() {
  const char* env = std::getenv("ICSF_KERNELS");
  if (!env || std::strcmp(env, "auto") == 0) return pick_default();
  if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
  if (std::strcmp(env, "avx2") == 0) {
    if (const Ops* avx2 = avx2_ops()) return avx2;
    throw std::invalid_argument("ICSF_KERNELS=avx2 but AVX2 is unavailable");
  }
  throw std::invalid_argument(std::string("unknown ICSF_KERNELS value: ") + env);
}

}  // namespace

const Ops& ops() {
  if (!g_active) g_active = resolve_env();
  return *g_active;
}

void force_backend(const char* name) {
  if (std::strcmp(name, "auto") == 0) {
    g_active = pick_default();
    return;
  }
  if (std::strcmp(name, "scalar") == 0) {
    g_active = &scalar_ops();
    return;
  }
  if (std::strcmp(name, "avx2") == 0) {
    if (const Ops* avx2 = avx2_ops()) {
      g_active = avx2;
      return;
    }
    throw std::invalid_argument("AVX2 backend unavailable on this machine/build");
  }
  throw std::invalid_argument(std::string("unknown kernel backend: ") + name);
}

}  // namespace icsf::kernels
