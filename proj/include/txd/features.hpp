#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "txd/fasta.hpp"
#include "txd/nn.hpp"
#include "txd/tnf.hpp"

namespace txd {

// Per-contig student inputs, one row per contig: [tnf(D) | abundance(K) | total].
struct FeatureMatrix {
  std::vector<std::string> contig_ids;
  Matrix data;          // n x (D + K + 1)
  std::size_t tnf_dim = 0;
  std::size_t n_samples = 0;  // K

  std::size_t width() const { return tnf_dim + n_samples + 1; }
};

struct AbundanceTable {
  std::vector<std::string> sample_names;
  Matrix rows;                 // n x K, row-normalized to sum 1 (zero rows stay zero)
  std::vector<double> totals;  // n, log1p of the raw row sum, z-scored over the dataset
};

// Reads the abundance TSV (header: contig_id<TAB>s1...<TAB>sK) and aligns
// rows to `contig_ids`. Throws listing ids without a row, and on negative or
// non-finite values.
AbundanceTable load_abundances(std::istream& in, const std::vector<std::string>& contig_ids);

struct AssembleResult {
  FeatureMatrix features;
  std::vector<std::string> dropped;  // contigs with no valid 4-mer window
};

struct AssembleOptions {
  unsigned threads = 1;
  // Standardize the TNF block per column over the dataset. Raw projected
  // frequencies sit around 5e-3, two orders below the abundance block, which
  // starves the student's first layer; standardization is on by default and
  // can be disabled for raw projections.
  bool zscore_tnf = true;
};

// Length filtering is expected to have happened at ingest; this drops only
// contigs whose tnf cannot be computed at all. Throws when nothing survives.
AssembleResult assemble_features(const std::vector<ContigRecord>& records, const TnfKernel& kernel,
                                 const AbundanceTable& abundances, const AssembleOptions& opts = {});

// TXDF feature cache, little-endian: magic "TXDF", u32 version=1, u32 n,
// u32 width, u32 K, n*width f64 row-major, id table (u32 count, {u32 len,
// bytes} per id).
void write_feature_cache(std::ostream& out, const FeatureMatrix& fm);
FeatureMatrix read_feature_cache(std::istream& in);

}  // namespace txd
