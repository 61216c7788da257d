#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace txd {

// A hierarchical label path: rank i of the lineage is names[i]. Rank indices
// are positional (0, 1, 2, ... with no gaps), so only the names are stored.
// The empty path is legal and means "unassigned".
struct RankedPath {
  std::vector<std::string> names;

  // Parses the canonical semicolon-separated form, e.g.
  // "d__Bacteria;p__Firmicutes;...;s__X". Empty/whitespace input yields the
  // empty path. Throws on empty name tokens and on GTDB-style rank prefixes
  // that disagree with their position (a rank gap such as a species token
  // right after the domain is rejected, not imputed).
  static RankedPath parse(std::string_view text);

  // Canonical text form; inverse of parse.
  std::string str() const;

  bool empty() const { return names.empty(); }
  std::size_t depth() const { return names.size(); }

  // Path truncated to its first `ranks` names.
  RankedPath prefix(std::size_t ranks) const;

  bool operator==(const RankedPath&) const = default;
};

struct TaxNode {
  int id = 0;
  int parent = -1;  // -1 only for the root
  std::string name;
  int depth = 0;
  std::vector<int> children;  // sorted by name
  // Leaf slots under this node form the contiguous range [slot_begin, slot_end).
  int slot_begin = 0;
  int slot_end = 0;
};

// The label tree built from the paths present in one dataset. Node identity
// is the full path from the root, so equal names under different parents are
// distinct nodes. Immutable after build; concurrent reads are safe.
class TaxTree {
 public:
  // Builds the tree containing the union of all prefixes of `paths` plus the
  // root. Node ids follow first-appearance order; leaf slots follow a
  // depth-first walk with children sorted by name, which makes slot
  // assignment independent of input order.
  static TaxTree build(const std::vector<RankedPath>& paths);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return static_cast<int>(slot_to_node_.size()); }
  const TaxNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  static constexpr int kRoot = 0;

  bool is_leaf(int id) const { return node(id).children.empty(); }
  int leaf_slot(int id) const;              // throws unless id is a leaf
  int leaf_node(int slot) const { return slot_to_node_.at(static_cast<std::size_t>(slot)); }

  // Node id for a path, or -1 when absent. Empty path resolves to the root.
  int find(const RankedPath& path) const;
  // Same, but throws an unknown-label error naming the path.
  int resolve(const RankedPath& path) const;

  // Node ids from the root (exclusive) down to `id` (inclusive); empty for
  // the root itself.
  std::span<const int> path_nodes(int id) const;

  RankedPath path_of(int id) const;

  // Canonical paths of all leaves in slot order. Rebuilding from these
  // yields an isomorphic tree with identical slot assignment.
  std::vector<std::string> leaf_paths() const;

 private:
  std::vector<TaxNode> nodes_;
  std::vector<int> slot_to_node_;
  std::vector<std::vector<int>> path_cache_;
};

// Softmax over leaf logits, max-subtracted. Throws on an empty vector
// (degenerate tree) and on non-finite logits.
std::vector<double> leaf_probabilities(std::span<const double> logits);

// Probability of every node given normalized leaf probabilities, indexed by
// node id. Computed leaves-up: an internal node's value is the sum of its
// children's values in child order, so parent == sum(children) holds exactly
// (not merely within rounding).
std::vector<double> node_probabilities(const TaxTree& tree, std::span<const double> leaf_probs);

// Single-node marginal; identical arithmetic to node_probabilities.
double node_probability(const TaxTree& tree, std::span<const double> leaf_probs, int node_id);

// Sum of log P(u) over the nodes of `target`'s path, root excluded (its log
// is identically zero). Probabilities are clamped at 1e-12 before the log.
// The empty path scores 0.
double path_log_likelihood(const TaxTree& tree, std::span<const double> leaf_probs,
                           const RankedPath& target);

inline constexpr double kProbClamp = 1e-12;

// Reads "id<TAB>path" lines (path may be empty; a "contig_id" header line is
// skipped). Parse failures name the offending line number.
std::vector<std::pair<std::string, RankedPath>> load_label_tsv(std::istream& in);

}  // namespace txd
