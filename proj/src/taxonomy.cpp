#include "txd/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <stdexcept>

#include "txd/common.hpp"

namespace txd {

namespace {

constexpr std::string_view kGtdbPrefixes[] = {"d__", "p__", "c__", "o__", "f__", "g__", "s__"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

RankedPath RankedPath::parse(std::string_view text) {
  RankedPath path;
  text = trim(text);
  if (text.empty()) return path;
  std::size_t pos = 0;
  while (true) {
    const std::size_t sep = text.find(';', pos);
    std::string_view token = trim(sep == std::string_view::npos ? text.substr(pos)
                                                                : text.substr(pos, sep - pos));
    if (token.empty())
      throw ValidationError("path parse error: empty name token in \"" + std::string(text) + "\"");
    const std::size_t rank = path.names.size();
    // A recognized GTDB prefix pins the token to a rank; a mismatch is a
    // rank gap or out-of-order lineage.
    for (std::size_t r = 0; r < std::size(kGtdbPrefixes); ++r) {
      if (token.substr(0, 3) == kGtdbPrefixes[r] && r != rank)
        throw ValidationError("path parse error: token \"" + std::string(token) + "\" implies rank " +
                              std::to_string(r) + " but appears at rank " + std::to_string(rank) +
                              " in \"" + std::string(text) + "\"");
    }
    path.names.emplace_back(token);
    if (sep == std::string_view::npos) break;
    pos = sep + 1;
  }
  return path;
}

std::string RankedPath::str() const {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ';';
    out += names[i];
  }
  return out;
}

RankedPath RankedPath::prefix(std::size_t ranks) const {
  RankedPath out;
  out.names.assign(names.begin(), names.begin() + std::min(ranks, names.size()));
  return out;
}

// ---------------------------------------------------------------------------

TaxTree TaxTree::build(const std::vector<RankedPath>& paths) {
  if (paths.empty()) throw ValidationError("build_tree: no paths given");

  TaxTree tree;
  tree.nodes_.push_back(TaxNode{0, -1, "", 0, {}, 0, 0});
  // Children looked up by (parent, name) during construction.
  std::map<std::pair<int, std::string>, int> child_index;

  for (const RankedPath& path : paths) {
    int cur = kRoot;
    for (const std::string& name : path.names) {
      auto it = child_index.find({cur, name});
      if (it != child_index.end()) {
        cur = it->second;
        continue;
      }
      const int id = static_cast<int>(tree.nodes_.size());
      tree.nodes_.push_back(TaxNode{id, cur, name, tree.nodes_[static_cast<std::size_t>(cur)].depth + 1, {}, 0, 0});
      tree.nodes_[static_cast<std::size_t>(cur)].children.push_back(id);
      child_index.emplace(std::pair<int, std::string>{cur, name}, id);
      cur = id;
    }
  }

  for (TaxNode& n : tree.nodes_)
    std::sort(n.children.begin(), n.children.end(),
              [&](int a, int b) { return tree.nodes_[static_cast<std::size_t>(a)].name < tree.nodes_[static_cast<std::size_t>(b)].name; });

  // Iterative DFS in sorted-child order assigns contiguous slot ranges.
  int next_slot = 0;
  std::vector<std::pair<int, std::size_t>> stack{{kRoot, 0}};
  while (!stack.empty()) {
    auto& [id, child_pos] = stack.back();
    TaxNode& n = tree.nodes_[static_cast<std::size_t>(id)];
    if (child_pos == 0) {
      n.slot_begin = next_slot;
      if (n.children.empty() && id != kRoot) {
        tree.slot_to_node_.push_back(id);
        ++next_slot;
      }
    }
    if (child_pos < n.children.size()) {
      const int child = n.children[child_pos];
      ++child_pos;
      stack.emplace_back(child, 0);
    } else {
      n.slot_end = next_slot;
      stack.pop_back();
    }
  }

  tree.path_cache_.resize(tree.nodes_.size());
  for (std::size_t id = 1; id < tree.nodes_.size(); ++id) {
    const TaxNode& n = tree.nodes_[id];
    auto& cache = tree.path_cache_[id];
    cache = tree.path_cache_[static_cast<std::size_t>(n.parent)];
    cache.push_back(static_cast<int>(id));
  }
  return tree;
}

int TaxTree::leaf_slot(int id) const {
  const TaxNode& n = node(id);
  if (!n.children.empty() || id == kRoot)
    throw std::runtime_error("leaf_slot: node " + std::to_string(id) + " is not a leaf");
  return n.slot_begin;
}

int TaxTree::find(const RankedPath& path) const {
  int cur = kRoot;
  for (const std::string& name : path.names) {
    const TaxNode& n = node(cur);
    int next = -1;
    for (int child : n.children) {
      if (node(child).name == name) {
        next = child;
        break;
      }
    }
    if (next < 0) return -1;
    cur = next;
  }
  return cur;
}

int TaxTree::resolve(const RankedPath& path) const {
  const int id = find(path);
  if (id < 0) throw std::runtime_error("unknown label: path \"" + path.str() + "\" is not in the tree");
  return id;
}

std::span<const int> TaxTree::path_nodes(int id) const {
  return path_cache_.at(static_cast<std::size_t>(id));
}

RankedPath TaxTree::path_of(int id) const {
  RankedPath out;
  for (int n : path_nodes(id)) out.names.push_back(node(n).name);
  return out;
}

std::vector<std::string> TaxTree::leaf_paths() const {
  std::vector<std::string> out;
  out.reserve(slot_to_node_.size());
  for (int id : slot_to_node_) out.push_back(path_of(id).str());
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> leaf_probabilities(std::span<const double> logits) {
  if (logits.empty()) throw std::runtime_error("leaf_probabilities: degenerate tree with no leaves");
  double mx = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::runtime_error("leaf_probabilities: non-finite logit");
    mx = std::max(mx, z);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> node_probabilities(const TaxTree& tree, std::span<const double> leaf_probs) {
  if (static_cast<int>(leaf_probs.size()) != tree.leaf_count())
    throw std::runtime_error("node_probabilities: leaf vector size mismatch");
  std::vector<double> value(static_cast<std::size_t>(tree.node_count()), 0.0);
  // Children always carry larger ids than their parent, so a reverse-id
  // sweep is leaves-up.
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    const TaxNode& n = tree.node(id);
    if (n.children.empty() && id != TaxTree::kRoot) {
      value[static_cast<std::size_t>(id)] = leaf_probs[static_cast<std::size_t>(n.slot_begin)];
    } else {
      double s = 0.0;
      for (int child : n.children) s += value[static_cast<std::size_t>(child)];
      value[static_cast<std::size_t>(id)] = s;
    }
  }
  return value;
}

double node_probability(const TaxTree& tree, std::span<const double> leaf_probs, int node_id) {
  if (node_id < 0 || node_id >= tree.node_count())
    throw std::runtime_error("node_probability: invalid node id " + std::to_string(node_id));
  const TaxNode& n = tree.node(node_id);
  if (n.children.empty() && node_id != TaxTree::kRoot)
    return leaf_probs[static_cast<std::size_t>(n.slot_begin)];
  double s = 0.0;
  for (int child : n.children) s += node_probability(tree, leaf_probs, child);
  return s;
}

double path_log_likelihood(const TaxTree& tree, std::span<const double> leaf_probs,
                           const RankedPath& target) {
  const int id = tree.resolve(target);
  if (id == TaxTree::kRoot) return 0.0;
  const std::vector<double> value = node_probabilities(tree, leaf_probs);
  double ll = 0.0;
  for (int u : tree.path_nodes(id)) ll += std::log(std::max(value[static_cast<std::size_t>(u)], kProbClamp));
  return ll;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, RankedPath>> load_label_tsv(std::istream& in) {
  std::vector<std::pair<std::string, RankedPath>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    std::string id = tab == std::string::npos ? line : line.substr(0, tab);
    if (lineno == 1 && id == "contig_id") continue;
    if (id.empty())
      throw ValidationError("label file line " + std::to_string(lineno) + ": empty contig id");
    // Extra columns (e.g. a probability) are ignored.
    std::string path_text;
    if (tab != std::string::npos) {
      const std::size_t tab2 = line.find('\t', tab + 1);
      path_text = line.substr(tab + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab - 1);
    }
    try {
      out.emplace_back(std::move(id), RankedPath::parse(path_text));
    } catch (const ValidationError& e) {
      throw ValidationError("label file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace txd
