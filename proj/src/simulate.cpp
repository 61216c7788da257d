#include "txd/simulate.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "txd/common.hpp"

namespace txd {

namespace {

constexpr const char* kRankPrefixes[] = {"d__", "p__", "c__", "o__", "f__", "g__", "s__"};
constexpr char kBases[] = {'A', 'C', 'G', 'T'};

// Lineage names encode the index path, e.g. d__Sim2;p__Sim2_1;c__Sim2_1_3.
std::vector<RankedPath> make_species_paths(const std::vector<int>& shape) {
  std::vector<RankedPath> paths;
  std::vector<int> index(shape.size(), 1);
  while (true) {
    RankedPath p;
    std::string suffix;
    for (std::size_t r = 0; r < shape.size(); ++r) {
      suffix += (r ? "_" : "") + std::to_string(index[r]);
      p.names.push_back(std::string(kRankPrefixes[r]) + "Sim" + suffix);
    }
    paths.push_back(std::move(p));
    std::size_t r = shape.size();
    while (r-- > 0) {
      if (++index[r] <= shape[r]) break;
      index[r] = 1;
      if (r == 0) return paths;
    }
  }
}

std::string markov_genome(int order, std::size_t length, Rng& rng) {
  const std::size_t contexts = std::size_t(1) << (2 * order);
  // Dirichlet(1) transition rows, stored as cumulative probabilities.
  std::vector<double> cumulative(contexts * 4);
  for (std::size_t c = 0; c < contexts; ++c) {
    const std::vector<double> row = rng.dirichlet_uniform(4);
    double acc = 0.0;
    for (int b = 0; b < 4; ++b) {
      acc += row[b];
      cumulative[c * 4 + b] = acc;
    }
  }

  std::string genome(length, 'A');
  std::size_t context = 0;
  const std::size_t mask = contexts - 1;
  for (std::size_t i = 0; i < length; ++i) {
    int base;
    if (i < std::size_t(order)) {
      base = static_cast<int>(rng.uniform_index(4));
    } else {
      const double u = rng.uniform01();
      const double* row = cumulative.data() + context * 4;
      base = 3;
      for (int b = 0; b < 3; ++b) {
        if (u < row[b]) {
          base = b;
          break;
        }
      }
    }
    genome[i] = kBases[base];
    context = ((context << 2) | std::size_t(base)) & mask;
  }
  return genome;
}

}  // namespace

void SimConfig::validate() const {
  if (tree_shape.empty() || tree_shape.size() > std::size(kRankPrefixes))
    throw ValidationError("simulate: tree_shape must have 1 to 7 ranks");
  long long product = 1;
  for (int b : tree_shape) {
    if (b < 1) throw ValidationError("simulate: branching factors must be >= 1");
    product *= b;
  }
  if (product != n_species)
    throw ValidationError("simulate: n_species (" + std::to_string(n_species) +
                          ") != product of tree_shape (" + std::to_string(product) + ")");
  if (n_species < 2) throw ValidationError("simulate: need at least 2 species");
  if (n_contigs < 1) throw ValidationError("simulate: n_contigs must be >= 1");
  if (length_range.first < 4 || length_range.second < length_range.first)
    throw ValidationError("simulate: invalid length_range (min >= 4, min <= max)");
  if (n_samples < 1) throw ValidationError("simulate: n_samples must be >= 1");
  if (markov_order < 1 || markov_order > 8) throw ValidationError("simulate: markov_order must be in [1, 8]");
  if (p_wrong < 0 || p_drop < 0 || p_wrong + p_drop > 1.0)
    throw ValidationError("simulate: need p_wrong, p_drop >= 0 and p_wrong + p_drop <= 1");
}

SimData simulate(const SimConfig& config) {
  config.validate();

  SimData data;
  data.species_paths = make_species_paths(config.tree_shape);

  const std::size_t genome_len = 10u * std::size_t(config.length_range.second);
  if (genome_len < std::size_t(config.length_range.second))
    throw ValidationError("simulate: genome shorter than the longest contig");
  std::vector<std::string> genomes(static_cast<std::size_t>(config.n_species));
  for (int s = 0; s < config.n_species; ++s) {
    Rng genome_rng(derive_seed(config.seed, 0x9e000 + std::uint64_t(s)));
    genomes[static_cast<std::size_t>(s)] = markov_genome(config.markov_order, genome_len, genome_rng);
  }

  Rng rng(derive_seed(config.seed, 0x51));
  const std::size_t k = static_cast<std::size_t>(config.n_samples);

  // Per-sample species profiles.
  std::vector<std::vector<double>> species_abund(k);
  for (std::size_t j = 0; j < k; ++j)
    species_abund[j] = rng.dirichlet_uniform(static_cast<std::size_t>(config.n_species));

  const std::size_t n = static_cast<std::size_t>(config.n_contigs);
  data.records.resize(n);
  data.truth.resize(n);
  data.noisy.resize(n);
  data.species_of.resize(n);
  data.abundance = Matrix(n, k);
  data.sample_names.resize(k);
  for (std::size_t j = 0; j < k; ++j) data.sample_names[j] = "s" + std::to_string(j + 1);

  for (std::size_t i = 0; i < n; ++i) {
    const int species = static_cast<int>(rng.uniform_index(std::uint64_t(config.n_species)));
    const std::size_t len = std::size_t(config.length_range.first) +
                            rng.uniform_index(std::uint64_t(config.length_range.second - config.length_range.first + 1));
    const std::string& genome = genomes[static_cast<std::size_t>(species)];
    const std::size_t start = rng.uniform_index(genome.size() - len + 1);

    data.records[i].id = "sim_" + std::to_string(i);
    data.records[i].sequence = genome.substr(start, len);
    data.species_of[i] = species;
    data.truth[i] = data.species_paths[static_cast<std::size_t>(species)];

    for (std::size_t j = 0; j < k; ++j)
      data.abundance(i, j) =
          species_abund[j][static_cast<std::size_t>(species)] * rng.lognormal(0.0, 0.25);

    // Label noise: relabel, truncate, or keep.
    const double u = rng.uniform01();
    if (u < config.p_wrong) {
      int other;
      if (config.siblings_only) {
        // Same parent lineage, different species; falls back to any other
        // species when the parent has a single child.
        const int last = config.tree_shape.back();
        if (last > 1) {
          const int within = species % last;
          int pick = static_cast<int>(rng.uniform_index(std::uint64_t(last - 1)));
          if (pick >= within) ++pick;
          other = species - within + pick;
        } else {
          other = static_cast<int>(rng.uniform_index(std::uint64_t(config.n_species - 1)));
          if (other >= species) ++other;
        }
      } else {
        other = static_cast<int>(rng.uniform_index(std::uint64_t(config.n_species - 1)));
        if (other >= species) ++other;
      }
      data.noisy[i] = data.species_paths[static_cast<std::size_t>(other)];
    } else if (u < config.p_wrong + config.p_drop) {
      const std::size_t keep = rng.uniform_index(data.truth[i].depth());  // 0 = unassigned
      data.noisy[i] = data.truth[i].prefix(keep);
    } else {
      data.noisy[i] = data.truth[i];
    }
  }
  return data;
}

void write_simulation(const std::filesystem::path& dir, const SimConfig& config, const SimData& data) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "contigs.fasta");
    write_fasta(out, data.records);
    if (!out) throw std::runtime_error("simulate: failed writing contigs.fasta");
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (std::size_t i = 0; i < data.records.size(); ++i)
      out << data.records[i].id << '\t' << data.noisy[i].str() << '\n';
    if (!out) throw std::runtime_error("simulate: failed writing labels.tsv");
  }
  {
    std::ofstream out(dir / "truth.tsv");
    for (std::size_t i = 0; i < data.records.size(); ++i)
      out << data.records[i].id << '\t' << data.truth[i].str() << '\n';
    if (!out) throw std::runtime_error("simulate: failed writing truth.tsv");
  }
  {
    std::ofstream out(dir / "abundances.tsv");
    out << "contig_id";
    for (const auto& s : data.sample_names) out << '\t' << s;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      out << data.records[i].id;
      for (std::size_t j = 0; j < data.abundance.cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.8f", data.abundance(i, j));
        out << '\t' << buf;
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("simulate: failed writing abundances.tsv");
  }
  {
    nlohmann::json manifest;
    manifest["tree_shape"] = config.tree_shape;
    manifest["n_species"] = config.n_species;
    manifest["n_contigs"] = config.n_contigs;
    manifest["length_min"] = config.length_range.first;
    manifest["length_max"] = config.length_range.second;
    manifest["n_samples"] = config.n_samples;
    manifest["markov_order"] = config.markov_order;
    manifest["p_wrong"] = config.p_wrong;
    manifest["p_drop"] = config.p_drop;
    manifest["siblings_only"] = config.siblings_only;
    manifest["seed"] = config.seed;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("simulate: failed writing manifest.json");
  }
}

}  // namespace txd
