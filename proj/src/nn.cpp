#include "txd/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "txd/common.hpp"
#include "txd/kernels.hpp"

namespace txd {

MlpModel MlpModel::make(const std::vector<std::size_t>& dims, Activation hidden_act, std::uint64_t seed) {
  if (dims.size() < 2) throw ValidationError("MlpModel: need at least input and output dims");
  Rng rng(seed);
  MlpModel model;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    const std::size_t in = dims[l], out = dims[l + 1];
    if (in == 0 || out == 0) throw ValidationError("MlpModel: zero layer dimension");
    layer.w = Matrix(out, in);
    layer.b.assign(out, 0.0);
    const double bound = std::sqrt(6.0 / double(in + out));
    for (double& x : layer.w.v) x = rng.uniform(-bound, bound);
    layer.act = (l + 2 < dims.size()) ? hidden_act : Activation::identity;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace {

void check_input(const MlpModel& model, const Matrix& batch) {
  if (model.layers.empty()) throw std::runtime_error("forward: empty model");
  if (batch.cols != model.input_dim())
    throw std::runtime_error("forward: batch width " + std::to_string(batch.cols) +
                             " != model input dim " + std::to_string(model.input_dim()));
}

// out[b,o] = dot(w.row(o), in.row(b)) + bias[o], then activation.
void layer_forward(const DenseLayer& layer, const Matrix& in, Matrix& pre, Matrix& post) {
  const auto& k = kernels::active();
  const std::size_t B = in.rows, out = layer.out_dim();
  pre = Matrix(B, out);
  for (std::size_t b = 0; b < B; ++b) {
    double* prow = pre.row(b);
    const double* xrow = in.row(b);
    for (std::size_t o = 0; o < out; ++o) prow[o] = k.dot(layer.w.row(o), xrow, layer.in_dim()) + layer.b[o];
  }
  post = pre;
  if (layer.act == Activation::relu) k.relu(post.v.data(), post.v.size());
}

}  // namespace

Matrix forward(const MlpModel& model, const Matrix& batch) {
  check_input(model, batch);
  Matrix pre, post, cur = batch;
  for (const DenseLayer& layer : model.layers) {
    layer_forward(layer, cur, pre, post);
    cur = std::move(post);
  }
  return cur;
}

Matrix forward(const MlpModel& model, const Matrix& batch, ForwardCache& cache) {
  check_input(model, batch);
  cache.input = batch;
  cache.pre.assign(model.layers.size(), Matrix{});
  cache.post.assign(model.layers.size(), Matrix{});
  const Matrix* cur = &cache.input;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    layer_forward(model.layers[l], *cur, cache.pre[l], cache.post[l]);
    cur = &cache.post[l];
  }
  cache.valid = true;
  return cache.post.back();
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (const DenseLayer& layer : model.layers) {
    g.gw.emplace_back(layer.out_dim(), layer.in_dim());
    g.gb.emplace_back(layer.out_dim(), 0.0);
  }
  return g;
}

Gradients backward(const MlpModel& model, ForwardCache& cache, const Matrix& upstream) {
  if (!cache.valid) throw std::runtime_error("backward: forward cache is stale or missing");
  if (cache.pre.size() != model.layers.size())
    throw std::runtime_error("backward: cache does not match model layer count");
  if (upstream.rows != cache.input.rows || upstream.cols != model.output_dim())
    throw std::runtime_error("backward: upstream gradient shape mismatch");
  cache.valid = false;

  const auto& k = kernels::active();
  const std::size_t B = cache.input.rows;
  Gradients grads = Gradients::zeros_like(model);

  Matrix delta = upstream;  // dLoss/dPre of the current layer, once masked
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const DenseLayer& layer = model.layers[li];
    const Matrix& in = (li == 0) ? cache.input : cache.post[li - 1];

    if (layer.act == Activation::relu)
      k.relu_grad(delta.v.data(), cache.pre[li].v.data(), delta.v.size());

    Matrix& gw = grads.gw[li];
    auto& gb = grads.gb[li];
    for (std::size_t b = 0; b < B; ++b) {
      const double* drow = delta.row(b);
      const double* xrow = in.row(b);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        gb[o] += drow[o];
        k.axpy(gw.row(o), drow[o], xrow, layer.in_dim());
      }
    }

    if (li == 0) break;
    Matrix next(B, layer.in_dim());
    for (std::size_t b = 0; b < B; ++b) {
      const double* drow = delta.row(b);
      double* nrow = next.row(b);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) k.axpy(nrow, drow[o], layer.w.row(o), layer.in_dim());
    }
    delta = std::move(next);
  }
  return grads;
}

AdamState AdamState::init(const MlpModel& model, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const DenseLayer& layer : model.layers) {
    s.mw.emplace_back(layer.out_dim(), layer.in_dim());
    s.vw.emplace_back(layer.out_dim(), layer.in_dim());
    s.mb.emplace_back(layer.out_dim(), 0.0);
    s.vb.emplace_back(layer.out_dim(), 0.0);
  }
  return s;
}

void adam_step(AdamState& state, MlpModel& model, const Gradients& grads) {
  if (grads.gw.size() != model.layers.size())
    throw std::runtime_error("adam_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!all_finite(grads.gw[l].v))
      throw std::runtime_error("adam_step: non-finite gradient in layer " + std::to_string(l) + " weights");
    if (!all_finite(grads.gb[l]))
      throw std::runtime_error("adam_step: non-finite gradient in layer " + std::to_string(l) + " bias");
  }

  const auto& k = kernels::active();
  const AdamConfig& c = state.cfg;
  ++state.step;
  const double bc1 = 1.0 / (1.0 - std::pow(c.beta1, double(state.step)));
  const double bc2 = 1.0 / (1.0 - std::pow(c.beta2, double(state.step)));
  const double decay = 1.0 - c.lr * c.weight_decay;

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    DenseLayer& layer = model.layers[l];
    k.adam_update(layer.w.v.data(), state.mw[l].v.data(), state.vw[l].v.data(), grads.gw[l].v.data(),
                  layer.w.v.size(), c.lr, c.beta1, c.beta2, c.eps, bc1, bc2);
    k.adam_update(layer.b.data(), state.mb[l].data(), state.vb[l].data(), grads.gb[l].data(),
                  layer.b.size(), c.lr, c.beta1, c.beta2, c.eps, bc1, bc2);
    // decoupled decay, weights only
    if (c.weight_decay != 0.0) k.scale(layer.w.v.data(), decay, layer.w.v.size());
  }
}

double grad_check(std::span<double* const> params, std::span<const double> analytic,
                  const std::function<double()>& loss_fn, double h) {
  if (params.size() != analytic.size()) throw std::runtime_error("grad_check: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& p = *params[i];
    const double saved = p;
    p = saved + h;
    const double up = loss_fn();
    p = saved - h;
    const double down = loss_fn();
    p = saved;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({1e-8, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

std::vector<double*> param_coords(MlpModel& model) {
  std::vector<double*> out;
  for (DenseLayer& layer : model.layers) {
    for (double& x : layer.w.v) out.push_back(&x);
    for (double& x : layer.b) out.push_back(&x);
  }
  return out;
}

std::vector<double> flatten_gradients(const Gradients& grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < grads.gw.size(); ++l) {
    out.insert(out.end(), grads.gw[l].v.begin(), grads.gw[l].v.end());
    out.insert(out.end(), grads.gb[l].begin(), grads.gb[l].end());
  }
  return out;
}

}  // namespace txd
