#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "txd/nn.hpp"
#include "txd/taxonomy.hpp"

namespace txd {

struct DistillConfig {
  double alpha = 0.3;       // weight on the student's hard-label loss
  double tau = 4.0;         // distillation temperature
  int epochs = 100;
  int batch_size = 64;
  double lr_student = 1e-3;
  double lr_teacher = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::vector<std::size_t> student_hidden = {512, 512};
  // Hidden widths of the teacher's classification head. A purely linear
  // head cannot reach calibrated high confidence within a small step
  // budget; one hidden layer restores that headroom.
  std::vector<std::size_t> teacher_hidden = {512};
  // Test hook: overrides the derived student weight seed so the teacher's
  // independence from the student's starting point can be exercised.
  std::optional<std::uint64_t> student_init_seed;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;  // throws ValidationError on out-of-range fields
};

// One aligned training instance view: features and embeddings row i belong
// to the contig whose pseudo-label is targets[i] (empty = unassigned).
struct TrainingData {
  const Matrix* features = nullptr;
  const Matrix* embeddings = nullptr;
  std::vector<int> target_nodes;  // node id in the tree; kRoot for unassigned
};

struct EpochLoss {
  double hier_teacher = 0;
  double hier_student = 0;
  double kd = 0;
};

struct BatchLoss {
  double hier_teacher = 0;
  double hier_student = 0;
  double kd = 0;
  double total = 0;  // teacher objective + student objective
};

struct TrainState {
  MlpModel student;
  MlpModel teacher_head;
  AdamState opt_student;
  AdamState opt_teacher;
  int epoch = 0;
  std::vector<EpochLoss> history;        // one entry per completed epoch
  std::vector<BatchLoss> batch_history;  // every batch, in execution order
};

// Deep hierarchical loss: value = -(1/B) sum_i path_log_likelihood(i), with
// the analytic gradient w.r.t. the logits. Unassigned rows (target = root)
// contribute nothing to either.
struct HierLoss {
  double value = 0;
  Matrix grad;  // B x |N|
};
HierLoss hier_loss(const TaxTree& tree, const Matrix& logits, std::span<const int> target_nodes);

// Temperature-softened distribution softmax(logits / tau); tau = 1 is
// exactly the plain leaf softmax.
std::vector<double> soften(std::span<const double> logits, double tau);

// KL(teacher softened || student softened) scaled by tau^2, averaged over
// the batch. Teacher logits are constants here: the result carries a
// gradient for the student logits only (the stop-gradient contract).
struct KdLoss {
  double value = 0;
  Matrix student_grad;  // B x |N|
};
KdLoss kd_loss(const Matrix& teacher_logits, const Matrix& student_logits, double tau);

// Transductive joint training on the target dataset itself. Per batch the
// teacher head is updated from its own hierarchical loss, then the student
// from alpha * hier + (1 - alpha) * KD against the refreshed teacher logits.
// `on_epoch` (when given) runs after each completed epoch, e.g. for
// periodic checkpoints.
using EpochCallback = std::function<void(const TrainState&)>;
TrainState train(const TrainingData& data, const TaxTree& tree, const DistillConfig& config,
                 const EpochCallback& on_epoch = {});

// Convenience: resolve label paths against the tree (root id for empty).
std::vector<int> resolve_targets(const TaxTree& tree, std::span<const RankedPath> labels);

// TXDM checkpoint, little-endian: magic "TXDM", u32 version=1, tree as its
// canonical leaf-path list, config echo, layer dims, all parameters as f64
// in declaration order, loss history as (u32 epoch, 3 f64) records.
struct Checkpoint {
  TaxTree tree;
  DistillConfig config;
  MlpModel student;
  MlpModel teacher_head;
  std::vector<EpochLoss> history;
};

void write_checkpoint(std::ostream& out, const Checkpoint& cp);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace txd
