#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace txd {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  double* row(std::size_t r) { return v.data() + r * cols; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }
  std::span<const double> row_span(std::size_t r) const { return {row(r), cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { relu, identity };

struct DenseLayer {
  Matrix w;                // out x in
  std::vector<double> b;   // out
  Activation act = Activation::identity;

  std::size_t in_dim() const { return w.cols; }
  std::size_t out_dim() const { return w.rows; }
};

struct MlpModel {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  // dims = {input, hidden..., output}; hidden layers get `hidden_act`, the
  // final layer is always identity (it emits logits). Weights are seeded
  // uniform in ±sqrt(6/(in+out)), biases zero.
  static MlpModel make(const std::vector<std::size_t>& dims, Activation hidden_act, std::uint64_t seed);

  bool operator==(const MlpModel&) const = default;
};

// Activations retained by a training-mode forward pass; consumed by backward.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer (post.back() = output)
  bool valid = false;
};

// Inference forward: deterministic, no state.
Matrix forward(const MlpModel& model, const Matrix& batch);

// Training forward: also fills `cache` for backward.
Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache& cache);

struct Gradients {
  std::vector<Matrix> gw;
  std::vector<std::vector<double>> gb;

  static Gradients zeros_like(const MlpModel& model);
};

// Reverse accumulation through the cached forward pass. `upstream` is
// dLoss/dLogits (B x output_dim). The cache is consumed (marked stale).
Gradients backward(const MlpModel& model, ForwardCache& cache, const Matrix& upstream);

// Adam with decoupled weight decay; decay touches weight matrices only.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<Matrix> mw, vw;
  std::vector<std::vector<double>> mb, vb;

  static AdamState init(const MlpModel& model, const AdamConfig& cfg);
};

// One optimizer step: bias-corrected moment update, then w *= (1 - lr*wd)
// on weights. Throws naming the parameter on a non-finite gradient.
void adam_step(AdamState& state, MlpModel& model, const Gradients& grads);

// Central-difference check of `analytic` against `loss_fn` evaluated while
// perturbing params[i] in place. Returns the worst relative error, with
// denominators floored at 1e-8.
double grad_check(std::span<double* const> params, std::span<const double> analytic,
                  const std::function<double()>& loss_fn, double h);

// Addresses of every parameter coordinate (layer by layer, weights then
// bias), matching flatten_gradients order.
std::vector<double*> param_coords(MlpModel& model);
std::vector<double> flatten_gradients(const Gradients& grads);

}  // namespace txd
