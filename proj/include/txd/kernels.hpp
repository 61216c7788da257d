#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

// Dense double-precision inner loops behind a runtime-dispatched table.
//
// Every backend must be bit-identical to the scalar reference: elementwise
// kernels use the same rounding sequence per element, and reductions follow
// the 8-lane blocked summation contract documented next to dot_scalar in
// kernels_scalar.cpp. Equivalence is enforced by tests, so training runs give
// byte-identical results whichever backend the host selects.

namespace txd::kernels {

struct Ops {
  const char* name;

  // sum_i a[i]*b[i], 8-lane blocked summation contract
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[i] += a * x[i]
  void (*axpy)(double* y, double a, const double* x, std::size_t n);

  // x[i] *= a
  void (*scale)(double* x, double a, std::size_t n);

  // x[i] = max(x[i], 0)
  void (*relu)(double* x, std::size_t n);

  // g[i] = pre[i] > 0 ? g[i] : 0
  void (*relu_grad)(double* g, const double* pre, std::size_t n);

  // Adam moment update with bias correction folded into bc1 = 1/(1-beta1^t),
  // bc2 = 1/(1-beta2^t):
  //   m = beta1*m + (1-beta1)*g; v = beta2*v + (1-beta2)*g*g
  //   p -= lr * (m*bc1) / (sqrt(v*bc2) + eps)
  void (*adam_update)(double* p, double* m, double* v, const double* g, std::size_t n, double lr,
                      double beta1, double beta2, double eps, double bc1, double bc2);
};

// Backend currently in use. Picked once on first call: the fastest backend
// the CPU supports, unless overridden via select() or the TXD_KERNELS
// environment variable ("scalar", "avx2", "auto").
const Ops& active();

const Ops& scalar_ops();

// Force a backend by name; "auto" re-runs detection. Returns false (and
// leaves the selection unchanged) if the backend is unknown or unsupported
// on this CPU.
bool select(std::string_view name);

// All backends usable on this host, scalar first.
std::vector<const Ops*> available();

}  // namespace txd::kernels
