#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "txd/fasta.hpp"
#include "txd/nn.hpp"
#include "txd/taxonomy.hpp"

namespace txd {

// Synthetic labeled metagenome with injected pseudo-label noise, so the full
// correction loop runs at desk scale with no external data.
struct SimConfig {
  std::vector<int> tree_shape = {2, 2, 5};  // branching per rank; 20 species
  int n_species = 20;                       // must equal the product of tree_shape
  int n_contigs = 3000;
  std::pair<int, int> length_range = {2000, 10000};  // bp
  int n_samples = 4;                                 // K
  int markov_order = 3;
  double p_wrong = 0.0;  // relabeled to another species
  double p_drop = 0.0;   // truncated to a random ancestor or unassigned
  bool siblings_only = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimData {
  std::vector<ContigRecord> records;        // ids sim_0 ... sim_{n-1}
  std::vector<RankedPath> truth;            // per contig
  std::vector<RankedPath> noisy;            // per contig, possibly truncated/empty
  std::vector<int> species_of;              // bookkeeping: genome each contig was cut from
  std::vector<RankedPath> species_paths;    // per species leaf path
  Matrix abundance;                         // n x K raw depth values
  std::vector<std::string> sample_names;
};

// Per species, a seeded order-k Markov chain emits one genome of 10x the
// maximum contig length; contigs are uniform substrings. Per-sample species
// abundances are Dirichlet(1); each contig row is its species profile with
// lognormal(0, 0.25) depth noise. Same seed, same bytes.
SimData simulate(const SimConfig& config);

// Writes contigs.fasta, labels.tsv (noisy), abundances.tsv, truth.tsv and
// manifest.json into `dir` (created if absent).
void write_simulation(const std::filesystem::path& dir, const SimConfig& config, const SimData& data);

}  // namespace txd
