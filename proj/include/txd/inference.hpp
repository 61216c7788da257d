#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "txd/nn.hpp"
#include "txd/taxonomy.hpp"

namespace txd {

struct Prediction {
  std::string contig_id;
  RankedPath path;        // empty = unassigned
  double node_prob = 1.0; // probability of the reported node
  int leaf_argmax = 0;    // leaf slot with maximal probability
};

// Threshold decode: starting at the root, repeatedly move to the child of
// maximal marginal probability while that probability exceeds 0.5 (strict;
// ties broken toward the lower leaf slot), then report the deepest visited
// node with probability >= 0.80. Only the root qualifying means unassigned.
Prediction decode(const TaxTree& tree, std::span<const double> leaf_probs);

inline constexpr double kDescendGate = 0.5;
inline constexpr double kReportGate = 0.80;

enum class Status { correct = 0, wrong = 1, no_label = 2 };

// Status of a predicted path against truth at a 0-based rank: correct/wrong
// when the prediction reaches the rank (a deeper call counts by its ancestor
// at the rank), no_label when truncated above it.
Status status_at_rank(const RankedPath& predicted, const RankedPath& truth, std::size_t rank);

struct EvalCounts {
  std::int64_t correct = 0;
  std::int64_t wrong = 0;
  std::int64_t no_label = 0;
  std::int64_t total() const { return correct + wrong + no_label; }
};

// Deepest rank index present in the ground truth (0-based); this is the
// default evaluation rank ("species level" for full lineages).
std::size_t deepest_rank(const std::map<std::string, RankedPath>& truth);

// Tally predictions against ground truth at `rank`. Every prediction id must
// have ground truth reaching the rank; offenders are listed in the error.
EvalCounts evaluate(std::span<const Prediction> predictions,
                    const std::map<std::string, RankedPath>& truth, std::size_t rank);

struct Metrics {
  double recall = 0;     // C / (C + W + U)
  double precision = 0;  // C / (C + W), 0 when undefined
  double f1 = 0;         // harmonic mean, 0 when undefined
};
Metrics metrics(const EvalCounts& counts);

// before -> after transition counts over {correct, wrong, no_label}.
using TransitionMatrix = std::array<std::array<std::int64_t, 3>, 3>;
TransitionMatrix transitions(const std::map<std::string, Status>& before,
                             const std::map<std::string, Status>& after);

EvalCounts marginal_before(const TransitionMatrix& m);
EvalCounts marginal_after(const TransitionMatrix& m);

// ---- TSV emission / ingestion --------------------------------------------

// contig_id<TAB>path<TAB>node_prob, 6-decimal probability, one header line.
void write_predictions_tsv(std::ostream& out, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions_tsv(std::istream& in);

// One header + one data row: counts, then recall/precision/f1.
void write_eval_tsv(std::ostream& out, const EvalCounts& counts, const Metrics& m, std::size_t rank);

// Header-labeled 3x3 grid.
void write_transitions_tsv(std::ostream& out, const TransitionMatrix& m);

}  // namespace txd
