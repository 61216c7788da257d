// AVX2 backend. Compiled with -mavx2 (no -mfma: products must round before
// accumulation, exactly like the scalar reference). Only ever called after
// the dispatcher has confirmed CPU support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "txd/kernels.hpp"

namespace txd::kernels {
namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  // lanewise t_j = s_j + s_{j+4}, then (t0+t2)+(t1+t3): same order as scalar
  const __m256d t = _mm256_add_pd(acc0, acc1);
  const __m128d lo = _mm256_castpd256_pd128(t);
  const __m128d hi = _mm256_extractf128_pd(t, 1);
  const __m128d u = _mm_add_pd(lo, hi);
  double s = _mm_cvtsd_f64(u) + _mm_cvtsd_f64(_mm_unpackhi_pd(u, u));
  for (std::size_t i = n8; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, yv);
  }
  for (std::size_t i = n4; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double* x, double a, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
  for (std::size_t i = n4; i < n; ++i) x[i] *= a;
}

void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (std::size_t i = n4; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_avx2(double* g, const double* pre, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(g + i, _mm256_and_pd(_mm256_loadu_pd(g + i), mask));
  }
  for (std::size_t i = n4; i < n; ++i)
    if (!(pre[i] > 0.0)) g[i] = 0.0;
}

void adam_avx2(double* p, double* m, double* v, const double* g, std::size_t n, double lr,
               double beta1, double beta2, double eps, double bc1, double bc2) {
  const double c1s = 1.0 - beta1;
  const double c2s = 1.0 - beta2;
  const __m256d b1 = _mm256_set1_pd(beta1), b2 = _mm256_set1_pd(beta2);
  const __m256d c1 = _mm256_set1_pd(c1s), c2 = _mm256_set1_pd(c2s);
  const __m256d bc1v = _mm256_set1_pd(bc1), bc2v = _mm256_set1_pd(bc2);
  const __m256d lrv = _mm256_set1_pd(lr), epsv = _mm256_set1_pd(eps);
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_add_pd(_mm256_mul_pd(b1, mv), _mm256_mul_pd(c1, gv));
    vv = _mm256_add_pd(_mm256_mul_pd(b2, vv), _mm256_mul_pd(c2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, bc1v);
    const __m256d vhat = _mm256_mul_pd(vv, bc2v);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    const __m256d upd = _mm256_mul_pd(lrv, _mm256_div_pd(mhat, denom));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (std::size_t i = n4; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + c1s * gi;
    v[i] = beta2 * v[i] + c2s * (gi * gi);
    const double mhat = m[i] * bc1;
    const double vhat = v[i] * bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Ops* avx2_ops() {
  static const Ops ops = {"avx2",      dot_avx2,       axpy_avx2, scale_avx2,
                          relu_avx2,   relu_grad_avx2, adam_avx2};
  return &ops;
}

}  // namespace txd::kernels

#else

namespace txd::kernels {
struct Ops;
const Ops* avx2_ops() { return nullptr; }
}  // namespace txd::kernels

#endif
