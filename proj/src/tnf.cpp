#include "txd/tnf.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <stdexcept>

namespace txd {

namespace {

constexpr int kWords = 256;

inline int base_code(char c) {
  switch (c) {
    case 'A': return 0;
    case 'C': return 1;
    case 'G': return 2;
    case 'T': return 3;
    default: return -1;
  }
}

int rc_word(int w) {
  int out = 0;
  for (int i = 0; i < 4; ++i) {
    const int code = (w >> (2 * i)) & 3;
    out = (out << 2) | (3 - code);
  }
  // reading the complemented codes low-to-high reverses the word
  return out;
}

}  // namespace

std::string reverse_complement(std::string_view sequence) {
  std::string out(sequence.size(), 'N');
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    char c;
    switch (sequence[sequence.size() - 1 - i]) {
      case 'A': c = 'T'; break;
      case 'C': c = 'G'; break;
      case 'G': c = 'C'; break;
      case 'T': c = 'A'; break;
      default: c = 'N';
    }
    out[i] = c;
  }
  return out;
}

TnfKernel build_tnf_kernel() {
  const int kConstraints = 185;
  Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(kConstraints, kWords);
  int row = 0;

  // 120 reverse-complement difference rows, one per unordered non-palindromic pair
  for (int w = 0; w < kWords; ++w) {
    const int r = rc_word(w);
    if (w < r) {
      constraints(row, w) = 1.0;
      constraints(row, r) = -1.0;
      ++row;
    }
  }
  // all-ones row
  constraints.row(row++).setOnes();
  // 64 overlap rows
  for (int s = 0; s < 64; ++s) {
    for (int x = 0; x < 4; ++x) {
      constraints(row, s * 4 + x) += 1.0;  // s followed by x
      constraints(row, x * 64 + s) -= 1.0; // x followed by s
    }
    ++row;
  }
  if (row != kConstraints) throw std::runtime_error("tnf kernel: constraint row miscount");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(constraints, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv(0);
  const double cutoff = 1e-10 * smax;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (std::abs(sv(i) - cutoff) < 1e-12 * smax)
      throw std::runtime_error("tnf kernel construction error: singular value straddles the rank cutoff");
    if (sv(i) > cutoff) ++rank;
  }
  const int dim = kWords - rank;

  TnfKernel kernel;
  kernel.dim = static_cast<std::size_t>(dim);
  kernel.constraint_rows = static_cast<std::size_t>(kConstraints);
  kernel.sv_threshold = 1e-10;
  kernel.basis.resize(static_cast<std::size_t>(kWords) * kernel.dim);
  const auto& V = svd.matrixV();  // 256 x 256, null space in the trailing columns
  for (int w = 0; w < kWords; ++w)
    for (int c = 0; c < dim; ++c) kernel.basis[static_cast<std::size_t>(w) * kernel.dim + c] = V(w, rank + c);
  return kernel;
}

std::array<std::uint64_t, 256> count_tetramers(std::string_view sequence) {
  std::array<std::uint64_t, 256> counts{};
  int word = 0;
  int valid = 0;  // consecutive valid bases ending here
  for (char c : sequence) {
    const int code = base_code(c);
    if (code < 0) {
      valid = 0;
      word = 0;
      continue;
    }
    word = ((word << 2) | code) & 0xff;
    if (++valid >= 4) ++counts[static_cast<std::size_t>(word)];
  }
  return counts;
}

std::vector<double> tnf(const ContigRecord& record, const TnfKernel& kernel) {
  const auto counts = count_tetramers(record.sequence);
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0)
    throw std::runtime_error("tnf: contig \"" + record.id + "\" too short: no valid 4-mer window");

  std::array<double, 256> centered;
  for (int w = 0; w < 256; ++w)
    centered[static_cast<std::size_t>(w)] = double(counts[static_cast<std::size_t>(w)]) / double(total) - 1.0 / 256.0;

  std::vector<double> out(kernel.dim, 0.0);
  for (int w = 0; w < 256; ++w) {
    const double f = centered[static_cast<std::size_t>(w)];
    if (f == 0.0) continue;
    const double* brow = kernel.basis.data() + static_cast<std::size_t>(w) * kernel.dim;
    for (std::size_t c = 0; c < kernel.dim; ++c) out[c] += f * brow[c];
  }
  return out;
}

}  // namespace txd
