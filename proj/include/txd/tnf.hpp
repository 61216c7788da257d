#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "txd/fasta.hpp"

namespace txd {

// Projection basis that maps raw tetranucleotide frequencies (256-dim) to a
// strand- and composition-invariant subspace. Columns are an orthonormal
// null-space basis of the constraint system:
//   - 120 reverse-complement rows  e_w - e_rc(w)
//   -   1 all-ones row
//   -  64 overlap rows             sum_x e_{sx} - sum_x e_{xs}  (3-mer s)
struct TnfKernel {
  std::size_t dim = 0;                // projected width D (103 for this system)
  std::vector<double> basis;          // 256 x dim, row-major
  std::size_t constraint_rows = 0;    // 185
  double sv_threshold = 0.0;          // relative singular-value cutoff

  double at(std::size_t word, std::size_t col) const { return basis[word * dim + col]; }
};

// Builds the basis via SVD of the constraint matrix. Throws if the singular
// spectrum has no clean gap at the threshold (relative gap < 1e-12).
TnfKernel build_tnf_kernel();

// Raw 4-mer window counts, windows containing N skipped. Index of word
// b0b1b2b3 is sum 4^(3-i)*code(bi) with A,C,G,T -> 0..3.
std::array<std::uint64_t, 256> count_tetramers(std::string_view sequence);

// Projected tetranucleotide feature: basis^T (f - 1/256) where f are the
// window frequencies. Throws a too-short error when the sequence has no
// valid window (length < 4 or all windows contain N).
std::vector<double> tnf(const ContigRecord& record, const TnfKernel& kernel);

std::string reverse_complement(std::string_view sequence);

}  // namespace txd
