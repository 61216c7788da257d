#include <cmath>
#include <cstddef>

#include "txd/kernels.hpp"

// Scalar reference kernels. These define the arithmetic contract every SIMD
// backend must reproduce bit-for-bit.

namespace txd::kernels {
namespace {

// Summation contract: two groups of four lanes. Lane j accumulates elements
// with index ≡ j (mod 4) of its group stride; concretely, iteration step is 8
// and the groups see offsets {0..3} and {4..7}. Groups combine lanewise
// first (t_j = s_j + s_{j+4}), then (t0+t2)+(t1+t3), then the tail (< 8
// leftover elements) is added sequentially. Products are rounded before
// accumulation (no fused multiply-add anywhere).
double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  const double t0 = s0 + s4, t1 = s1 + s5, t2 = s2 + s6, t3 = s3 + s7;
  double s = (t0 + t2) + (t1 + t3);
  for (std::size_t i = n8; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double* x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_scalar(double* g, const double* pre, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(pre[i] > 0.0)) g[i] = 0.0;
}

void adam_scalar(double* p, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + c1 * gi;
    v[i] = beta2 * v[i] + c2 * (gi * gi);
    const double mhat = m[i] * bc1;
    const double vhat = v[i] * bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {"scalar",       dot_scalar,       axpy_scalar, scale_scalar,
                          relu_scalar,    relu_grad_scalar, adam_scalar};
  return ops;
}

}  // namespace txd::kernels
