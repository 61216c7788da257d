#include "txd/inference.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace txd {

Prediction decode(const TaxTree& tree, std::span<const double> leaf_probs) {
  if (tree.leaf_count() == 0) throw std::runtime_error("decode: degenerate tree with no leaves");
  const std::vector<double> node_p = node_probabilities(tree, leaf_probs);

  Prediction pred;
  {
    double best = -1.0;
    for (int s = 0; s < tree.leaf_count(); ++s) {
      const double p = leaf_probs[static_cast<std::size_t>(s)];
      if (p > best) {
        best = p;
        pred.leaf_argmax = s;
      }
    }
  }

  // Greedy descent through the argmax child while it clears the 0.5 gate.
  std::vector<int> chain{TaxTree::kRoot};
  int cur = TaxTree::kRoot;
  while (true) {
    const TaxNode& n = tree.node(cur);
    if (n.children.empty()) break;
    int best_child = -1;
    double best_p = -1.0;
    for (int child : n.children) {  // child order = ascending slot; first win = lower slot
      const double p = node_p[static_cast<std::size_t>(child)];
      if (p > best_p) {
        best_p = p;
        best_child = child;
      }
    }
    if (!(best_p > kDescendGate)) break;
    // Marginalization makes the chain non-increasing; guarded here because
    // decode's contract depends on it.
    if (best_p > node_p[static_cast<std::size_t>(cur)])
      throw std::runtime_error("decode: non-monotone probability chain");
    chain.push_back(best_child);
    cur = best_child;
  }

  // Deepest visited node clearing the report gate; the root alone means
  // unassigned.
  for (std::size_t i = chain.size(); i-- > 0;) {
    const int id = chain[i];
    if (id == TaxTree::kRoot) break;
    if (node_p[static_cast<std::size_t>(id)] >= kReportGate) {
      pred.path = tree.path_of(id);
      pred.node_prob = node_p[static_cast<std::size_t>(id)];
      return pred;
    }
  }
  pred.node_prob = node_p[TaxTree::kRoot];
  return pred;
}

Status status_at_rank(const RankedPath& predicted, const RankedPath& truth, std::size_t rank) {
  if (truth.depth() <= rank)
    throw std::runtime_error("status_at_rank: ground truth does not reach rank " + std::to_string(rank));
  if (predicted.depth() <= rank) return Status::no_label;
  for (std::size_t r = 0; r <= rank; ++r)  // node identity is the whole prefix
    if (predicted.names[r] != truth.names[r]) return Status::wrong;
  return Status::correct;
}

std::size_t deepest_rank(const std::map<std::string, RankedPath>& truth) {
  std::size_t deepest = 0;
  for (const auto& [id, path] : truth)
    if (!path.empty()) deepest = std::max(deepest, path.depth() - 1);
  return deepest;
}

EvalCounts evaluate(std::span<const Prediction> predictions,
                    const std::map<std::string, RankedPath>& truth, std::size_t rank) {
  std::string missing;
  for (const Prediction& p : predictions) {
    auto it = truth.find(p.contig_id);
    if (it == truth.end() || it->second.depth() <= rank)
      missing += missing.empty() ? p.contig_id : ", " + p.contig_id;
  }
  if (!missing.empty())
    throw std::runtime_error("evaluate: no ground truth at rank " + std::to_string(rank) +
                             " for contigs: " + missing);

  EvalCounts counts;
  for (const Prediction& p : predictions) {
    switch (status_at_rank(p.path, truth.at(p.contig_id), rank)) {
      case Status::correct: ++counts.correct; break;
      case Status::wrong: ++counts.wrong; break;
      case Status::no_label: ++counts.no_label; break;
    }
  }
  return counts;
}

Metrics metrics(const EvalCounts& counts) {
  if (counts.total() <= 0) throw std::runtime_error("metrics: empty evaluation");
  Metrics m;
  m.recall = double(counts.correct) / double(counts.total());
  const std::int64_t assigned = counts.correct + counts.wrong;
  m.precision = assigned > 0 ? double(counts.correct) / double(assigned) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

TransitionMatrix transitions(const std::map<std::string, Status>& before,
                             const std::map<std::string, Status>& after) {
  if (before.size() != after.size())
    throw std::runtime_error("transitions: id sets differ in size");
  TransitionMatrix m{};
  for (const auto& [id, b] : before) {
    auto it = after.find(id);
    if (it == after.end()) throw std::runtime_error("transitions: id \"" + id + "\" missing from after set");
    ++m[static_cast<std::size_t>(b)][static_cast<std::size_t>(it->second)];
  }
  return m;
}

EvalCounts marginal_before(const TransitionMatrix& m) {
  EvalCounts c;
  c.correct = m[0][0] + m[0][1] + m[0][2];
  c.wrong = m[1][0] + m[1][1] + m[1][2];
  c.no_label = m[2][0] + m[2][1] + m[2][2];
  return c;
}

EvalCounts marginal_after(const TransitionMatrix& m) {
  EvalCounts c;
  c.correct = m[0][0] + m[1][0] + m[2][0];
  c.wrong = m[0][1] + m[1][1] + m[2][1];
  c.no_label = m[0][2] + m[1][2] + m[2][2];
  return c;
}

// ---------------------------------------------------------------------------

void write_predictions_tsv(std::ostream& out, std::span<const Prediction> predictions) {
  out << "contig_id\tpath\tnode_prob\n";
  char buf[32];
  for (const Prediction& p : predictions) {
    std::snprintf(buf, sizeof buf, "%.6f", p.node_prob);
    out << p.contig_id << '\t' << p.path.str() << '\t' << buf << '\n';
  }
  if (!out) throw std::runtime_error("predictions: write failed");
}

std::vector<Prediction> read_predictions_tsv(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    std::string id = t1 == std::string::npos ? line : line.substr(0, t1);
    if (lineno == 1 && id == "contig_id") continue;
    Prediction p;
    p.contig_id = std::move(id);
    if (t1 != std::string::npos) {
      const std::size_t t2 = line.find('\t', t1 + 1);
      p.path = RankedPath::parse(line.substr(t1 + 1, t2 == std::string::npos ? std::string::npos : t2 - t1 - 1));
      if (t2 != std::string::npos) p.node_prob = std::stod(line.substr(t2 + 1));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_eval_tsv(std::ostream& out, const EvalCounts& counts, const Metrics& m, std::size_t rank) {
  out << "rank\tcorrect\twrong\tno_label\tn_total\trecall\tprecision\tf1\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", m.recall, m.precision, m.f1);
  out << rank << '\t' << counts.correct << '\t' << counts.wrong << '\t' << counts.no_label << '\t'
      << counts.total() << '\t' << buf << '\n';
  if (!out) throw std::runtime_error("eval report: write failed");
}

void write_transitions_tsv(std::ostream& out, const TransitionMatrix& m) {
  static constexpr const char* kNames[3] = {"Correct", "Wrong", "NoLabel"};
  out << "before\\after\tCorrect\tWrong\tNoLabel\n";
  for (std::size_t b = 0; b < 3; ++b)
    out << kNames[b] << '\t' << m[b][0] << '\t' << m[b][1] << '\t' << m[b][2] << '\n';
  if (!out) throw std::runtime_error("transitions: write failed");
}

}  // namespace txd
