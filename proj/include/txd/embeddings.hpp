#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "txd/fasta.hpp"
#include "txd/nn.hpp"

namespace txd {

// Uniform interface over the teacher's sequence embeddings: either vectors
// precomputed by an external foundation model (file-backed) or the built-in
// k-mer projection stand-in. Providers are read-only after construction and
// safe for concurrent lookups.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual const char* kind() const = 0;
  // Exactly dim() finite values; deterministic per contig.
  virtual std::vector<double> embed(const ContigRecord& record) const = 0;
};

// Embeddings keyed by contig id, loaded from TSV ("contig_id" + dim floats
// per line) or the TXDE binary format. Width is inferred from the first
// record and enforced; duplicate ids and unknown lookups throw.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  static std::unique_ptr<FileEmbeddingProvider> from_tsv(std::istream& in);
  static std::unique_ptr<FileEmbeddingProvider> from_binary(std::istream& in);

  std::size_t dim() const override { return dim_; }
  const char* kind() const override { return "file_backed"; }
  std::vector<double> embed(const ContigRecord& record) const override;

  const std::vector<std::string>& ids() const { return ids_; }

  // TXDE, little-endian: magic "TXDE", u32 version=1, u32 dim, u64 count,
  // per record {u32 id-length, id bytes, dim f32}.
  void write_binary(std::ostream& out) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;  // count x dim
  std::unordered_map<std::string, std::size_t> index_;
};

// Deterministic stand-in for a frozen sequence model: 6-mer frequencies
// (4096-dim, N windows skipped) pushed through a fixed seeded Gaussian
// projection, L2-normalized.
class KmerProjectionProvider final : public EmbeddingProvider {
 public:
  KmerProjectionProvider(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  const char* kind() const override { return "kmer_projection"; }
  std::vector<double> embed(const ContigRecord& record) const override;

  std::uint64_t seed() const { return seed_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::vector<double> projection_;  // 4096 x dim, entries N(0,1)/sqrt(4096)
};

// Teacher head application: plain forward pass producing leaf logits.
Matrix teacher_logits(const MlpModel& head, const Matrix& embeddings);

// Embedding matrix for a batch of records, rows in input order.
Matrix embed_all(const EmbeddingProvider& provider, const std::vector<ContigRecord>& records,
                 unsigned threads = 1);

}  // namespace txd
