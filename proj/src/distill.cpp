#include "txd/distill.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "txd/common.hpp"
#include "txd/io_binary.hpp"

namespace txd {

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0, 1]");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(lr_student > 0.0) || !(lr_teacher > 0.0)) throw ValidationError("learning rates must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  for (std::size_t h : student_hidden)
    if (h == 0) throw ValidationError("student hidden widths must be positive");
  for (std::size_t h : teacher_hidden)
    if (h == 0) throw ValidationError("teacher hidden widths must be positive");
}

// ---------------------------------------------------------------------------

HierLoss hier_loss(const TaxTree& tree, const Matrix& logits, std::span<const int> target_nodes) {
  if (logits.rows != target_nodes.size()) throw std::runtime_error("hier_loss: batch size mismatch");
  if (logits.rows == 0) throw std::runtime_error("hier_loss: empty batch");
  const std::size_t B = logits.rows;
  const std::size_t n_leaves = logits.cols;

  HierLoss out;
  out.grad = Matrix(B, n_leaves);
  std::vector<double> coef(n_leaves);

  for (std::size_t i = 0; i < B; ++i) {
    const int target = target_nodes[i];
    if (target == TaxTree::kRoot) continue;  // unassigned: no supervision

    const std::vector<double> probs = leaf_probabilities(logits.row_span(i));
    const std::vector<double> node_p = node_probabilities(tree, probs);

    // d(-log P(u))/dz_k = p_k * c_u * P_u - p_k * c_u * [k in leaves(u)]
    // with c_u the derivative of log(max(P, clamp)).
    std::fill(coef.begin(), coef.end(), 0.0);
    double depth_term = 0.0;
    for (int u : tree.path_nodes(target)) {
      const double pu = node_p[static_cast<std::size_t>(u)];
      out.value -= std::log(std::max(pu, kProbClamp));
      const double cu = pu >= kProbClamp ? 1.0 / pu : 0.0;
      depth_term += cu * pu;
      const TaxNode& n = tree.node(u);
      for (int s = n.slot_begin; s < n.slot_end; ++s) coef[static_cast<std::size_t>(s)] += cu;
    }
    double* grow = out.grad.row(i);
    for (std::size_t k = 0; k < n_leaves; ++k) grow[k] = probs[k] * (depth_term - coef[k]);
  }

  out.value /= double(B);
  const double inv_b = 1.0 / double(B);
  for (double& g : out.grad.v) g *= inv_b;
  return out;
}

std::vector<double> soften(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw ValidationError("soften: tau must be positive");
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / tau;
  return leaf_probabilities(scaled);
}

KdLoss kd_loss(const Matrix& teacher_logits, const Matrix& student_logits, double tau) {
  if (!(tau > 0.0)) throw ValidationError("kd_loss: tau must be positive");
  if (teacher_logits.rows != student_logits.rows || teacher_logits.cols != student_logits.cols)
    throw std::runtime_error("kd_loss: logit shape mismatch");
  const std::size_t B = teacher_logits.rows;
  const std::size_t n = teacher_logits.cols;
  if (B == 0) throw std::runtime_error("kd_loss: empty batch");

  KdLoss out;
  out.student_grad = Matrix(B, n);
  const double tau_sq = tau * tau;

  for (std::size_t i = 0; i < B; ++i) {
    const std::vector<double> qt = soften(teacher_logits.row_span(i), tau);
    const std::vector<double> qs = soften(student_logits.row_span(i), tau);
    double kl = 0.0;
    for (std::size_t l = 0; l < n; ++l) kl += qt[l] * std::log(qt[l] / std::max(qs[l], kProbClamp));
    // KL is analytically non-negative; the floor only absorbs rounding from
    // nearly identical rows.
    out.value += tau_sq * std::max(kl, 0.0);
    double* grow = out.student_grad.row(i);
    for (std::size_t l = 0; l < n; ++l) grow[l] = tau * (qs[l] - qt[l]);
  }
  out.value /= double(B);
  const double inv_b = 1.0 / double(B);
  for (double& g : out.student_grad.v) g *= inv_b;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> resolve_targets(const TaxTree& tree, std::span<const RankedPath> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const RankedPath& p : labels) out.push_back(tree.resolve(p));
  return out;
}

namespace {

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> index) {
  Matrix out(index.size(), src.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double* s = src.row(index[i]);
    std::copy(s, s + src.cols, out.row(i));
  }
  return out;
}

}  // namespace

TrainState train(const TrainingData& data, const TaxTree& tree, const DistillConfig& config,
                 const EpochCallback& on_epoch) {
  config.validate();
  if (!data.features || !data.embeddings) throw std::runtime_error("train: missing features or embeddings");
  const std::size_t n = data.features->rows;
  if (n == 0) throw std::runtime_error("train: empty dataset");
  if (data.embeddings->rows != n || data.target_nodes.size() != n)
    throw std::runtime_error("train: features, embeddings and labels are not aligned");
  if (tree.leaf_count() < 2) throw std::runtime_error("train: need at least 2 leaves to classify");

  const std::size_t n_leaves = static_cast<std::size_t>(tree.leaf_count());

  TrainState state;
  std::vector<std::size_t> student_dims;
  student_dims.push_back(data.features->cols);
  student_dims.insert(student_dims.end(), config.student_hidden.begin(), config.student_hidden.end());
  student_dims.push_back(n_leaves);
  const std::uint64_t student_seed =
      config.student_init_seed ? *config.student_init_seed : derive_seed(config.seed, 0x557);
  state.student = MlpModel::make(student_dims, Activation::relu, student_seed);
  std::vector<std::size_t> teacher_dims;
  teacher_dims.push_back(data.embeddings->cols);
  teacher_dims.insert(teacher_dims.end(), config.teacher_hidden.begin(), config.teacher_hidden.end());
  teacher_dims.push_back(n_leaves);
  state.teacher_head = MlpModel::make(teacher_dims, Activation::relu, derive_seed(config.seed, 0x7e));

  state.opt_student = AdamState::init(
      state.student, AdamConfig{config.lr_student, 0.9, 0.999, 1e-8, config.weight_decay});
  state.opt_teacher = AdamState::init(
      state.teacher_head, AdamConfig{config.lr_teacher, 0.9, 0.999, 1e-8, config.weight_decay});

  Rng shuffle_rng(derive_seed(config.seed, 0x5f));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  ForwardCache cache;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochLoss epoch_loss;

    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      const std::span<const std::size_t> index(order.data() + start, b);

      const Matrix emb = gather_rows(*data.embeddings, index);
      const Matrix feat = gather_rows(*data.features, index);
      std::vector<int> targets(b);
      for (std::size_t i = 0; i < b; ++i) targets[i] = data.target_nodes[index[i]];

      // Teacher step: hierarchical loss on its own logits only.
      const Matrix t_logits = forward(state.teacher_head, emb, cache);
      const HierLoss t_loss = hier_loss(tree, t_logits, targets);
      adam_step(state.opt_teacher, state.teacher_head, backward(state.teacher_head, cache, t_loss.grad));

      // Student step, distilling from the freshly updated teacher.
      const Matrix t_fresh = forward(state.teacher_head, emb);
      const Matrix s_logits = forward(state.student, feat, cache);
      const HierLoss s_hier = hier_loss(tree, s_logits, targets);
      const KdLoss s_kd = kd_loss(t_fresh, s_logits, config.tau);

      Matrix upstream(b, n_leaves);
      for (std::size_t i = 0; i < upstream.v.size(); ++i)
        upstream.v[i] = config.alpha * s_hier.grad.v[i] + (1.0 - config.alpha) * s_kd.student_grad.v[i];
      adam_step(state.opt_student, state.student, backward(state.student, cache, upstream));

      const double student_obj = config.alpha * s_hier.value + (1.0 - config.alpha) * s_kd.value;
      const double total = t_loss.value + student_obj;
      if (!std::isfinite(total))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(start / batch));
      state.batch_history.push_back(BatchLoss{t_loss.value, s_hier.value, s_kd.value, total});

      epoch_loss.hier_teacher += t_loss.value * double(b);
      epoch_loss.hier_student += s_hier.value * double(b);
      epoch_loss.kd += s_kd.value * double(b);
    }

    epoch_loss.hier_teacher /= double(n);
    epoch_loss.hier_student /= double(n);
    epoch_loss.kd /= double(n);
    state.history.push_back(epoch_loss);
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
  return state;
}

// ---------------------------------------------------------------------------

namespace {

void write_model(std::ostream& out, const MlpModel& model) {
  io::put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const DenseLayer& layer : model.layers) {
    io::put_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
    io::put_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
    io::put_u32(out, layer.act == Activation::relu ? 1 : 0);
  }
  for (const DenseLayer& layer : model.layers) {
    for (double x : layer.w.v) io::put_f64(out, x);
    for (double x : layer.b) io::put_f64(out, x);
  }
}

MlpModel read_model(std::istream& in) {
  MlpModel model;
  const std::uint32_t n_layers = io::get_u32(in);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    DenseLayer layer;
    const std::uint32_t out_dim = io::get_u32(in);
    const std::uint32_t in_dim = io::get_u32(in);
    layer.w = Matrix(out_dim, in_dim);
    layer.b.assign(out_dim, 0.0);
    layer.act = io::get_u32(in) == 1 ? Activation::relu : Activation::identity;
    model.layers.push_back(std::move(layer));
  }
  for (DenseLayer& layer : model.layers) {
    for (double& x : layer.w.v) x = io::get_f64(in);
    for (double& x : layer.b) x = io::get_f64(in);
  }
  return model;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& cp) {
  out.write("TXDM", 4);
  io::put_u32(out, 1);

  const std::vector<std::string> paths = cp.tree.leaf_paths();
  io::put_u32(out, static_cast<std::uint32_t>(paths.size()));
  for (const std::string& p : paths) io::put_string(out, p);

  const DistillConfig& c = cp.config;
  io::put_f64(out, c.alpha);
  io::put_f64(out, c.tau);
  io::put_u32(out, static_cast<std::uint32_t>(c.epochs));
  io::put_u32(out, static_cast<std::uint32_t>(c.batch_size));
  io::put_f64(out, c.lr_student);
  io::put_f64(out, c.lr_teacher);
  io::put_f64(out, c.weight_decay);
  io::put_u64(out, c.seed);
  io::put_u32(out, c.deterministic ? 1 : 0);

  write_model(out, cp.student);
  write_model(out, cp.teacher_head);

  io::put_u32(out, static_cast<std::uint32_t>(cp.history.size()));
  for (std::size_t e = 0; e < cp.history.size(); ++e) {
    io::put_u32(out, static_cast<std::uint32_t>(e + 1));
    io::put_f64(out, cp.history[e].hier_teacher);
    io::put_f64(out, cp.history[e].hier_student);
    io::put_f64(out, cp.history[e].kd);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  io::expect_magic(in, "TXDM", "checkpoint");
  const std::uint32_t version = io::get_u32(in);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint cp;
  const std::uint32_t n_paths = io::get_u32(in);
  std::vector<RankedPath> paths;
  paths.reserve(n_paths);
  for (std::uint32_t i = 0; i < n_paths; ++i) paths.push_back(RankedPath::parse(io::get_string(in)));
  cp.tree = TaxTree::build(paths);

  cp.config.alpha = io::get_f64(in);
  cp.config.tau = io::get_f64(in);
  cp.config.epochs = static_cast<int>(io::get_u32(in));
  cp.config.batch_size = static_cast<int>(io::get_u32(in));
  cp.config.lr_student = io::get_f64(in);
  cp.config.lr_teacher = io::get_f64(in);
  cp.config.weight_decay = io::get_f64(in);
  cp.config.seed = io::get_u64(in);
  cp.config.deterministic = io::get_u32(in) == 1;

  cp.student = read_model(in);
  cp.teacher_head = read_model(in);

  const std::uint32_t n_hist = io::get_u32(in);
  cp.history.resize(n_hist);
  for (std::uint32_t e = 0; e < n_hist; ++e) {
    io::get_u32(in);  // epoch number, implied by position
    cp.history[e].hier_teacher = io::get_f64(in);
    cp.history[e].hier_student = io::get_f64(in);
    cp.history[e].kd = io::get_f64(in);
  }
  return cp;
}

}  // namespace txd
