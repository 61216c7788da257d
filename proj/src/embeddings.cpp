#include "txd/embeddings.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "txd/common.hpp"
#include "txd/io_binary.hpp"
#include "txd/kernels.hpp"

namespace txd {

std::unique_ptr<FileEmbeddingProvider> FileEmbeddingProvider::from_tsv(std::istream& in) {
  auto provider = std::unique_ptr<FileEmbeddingProvider>(new FileEmbeddingProvider());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id;
    std::getline(fields, id, '\t');
    if (lineno == 1 && id == "contig_id") continue;
    std::vector<float> row;
    std::string field;
    while (std::getline(fields, field, '\t')) {
      try {
        row.push_back(std::stof(field));
      } catch (const std::exception&) {
        throw ValidationError("embedding file line " + std::to_string(lineno) + ": bad value \"" + field + "\"");
      }
    }
    if (row.empty())
      throw ValidationError("embedding file line " + std::to_string(lineno) + ": no values for id " + id);
    if (provider->dim_ == 0)
      provider->dim_ = row.size();
    else if (row.size() != provider->dim_)
      throw ValidationError("embedding file line " + std::to_string(lineno) + ": width " +
                            std::to_string(row.size()) + " != established width " +
                            std::to_string(provider->dim_));
    if (!provider->index_.emplace(id, provider->ids_.size()).second)
      throw ValidationError("embedding file line " + std::to_string(lineno) + ": duplicate id " + id);
    provider->ids_.push_back(std::move(id));
    provider->values_.insert(provider->values_.end(), row.begin(), row.end());
  }
  if (provider->ids_.empty()) throw ValidationError("embedding file: no records");
  return provider;
}

std::unique_ptr<FileEmbeddingProvider> FileEmbeddingProvider::from_binary(std::istream& in) {
  io::expect_magic(in, "TXDE", "embedding file");
  const std::uint32_t version = io::get_u32(in);
  if (version != 1) throw std::runtime_error("embedding file: unsupported version " + std::to_string(version));
  auto provider = std::unique_ptr<FileEmbeddingProvider>(new FileEmbeddingProvider());
  provider->dim_ = io::get_u32(in);
  const std::uint64_t count = io::get_u64(in);
  if (provider->dim_ == 0 || count == 0) throw std::runtime_error("embedding file: empty");
  provider->values_.reserve(count * provider->dim_);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = io::get_string(in);
    if (!provider->index_.emplace(id, provider->ids_.size()).second)
      throw std::runtime_error("embedding file: duplicate id " + id);
    provider->ids_.push_back(std::move(id));
    for (std::size_t j = 0; j < provider->dim_; ++j) provider->values_.push_back(io::get_f32(in));
  }
  return provider;
}

std::vector<double> FileEmbeddingProvider::embed(const ContigRecord& record) const {
  auto it = index_.find(record.id);
  if (it == index_.end())
    throw std::runtime_error("missing embedding for contig \"" + record.id + "\"");
  const float* row = values_.data() + it->second * dim_;
  std::vector<double> out(dim_);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = double(row[j]);
  return out;
}

void FileEmbeddingProvider::write_binary(std::ostream& out) const {
  out.write("TXDE", 4);
  io::put_u32(out, 1);
  io::put_u32(out, static_cast<std::uint32_t>(dim_));
  io::put_u64(out, ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    io::put_string(out, ids_[i]);
    const float* row = values_.data() + i * dim_;
    for (std::size_t j = 0; j < dim_; ++j) io::put_f32(out, row[j]);
  }
  if (!out) throw std::runtime_error("embedding file: write failed");
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kKmerSpace = 4096;  // 6-mers

inline int base_code6(char c) {
  switch (c) {
    case 'A': return 0;
    case 'C': return 1;
    case 'G': return 2;
    case 'T': return 3;
    default: return -1;
  }
}
}  // namespace

KmerProjectionProvider::KmerProjectionProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed), projection_(kKmerSpace * dim) {
  if (dim == 0) throw ValidationError("kmer projection: dim must be positive");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(double(kKmerSpace));
  for (double& x : projection_) x = rng.normal() * scale;
}

std::vector<double> KmerProjectionProvider::embed(const ContigRecord& record) const {
  std::vector<double> freq(kKmerSpace, 0.0);
  int word = 0;
  int valid = 0;
  std::uint64_t total = 0;
  for (char c : record.sequence) {
    const int code = base_code6(c);
    if (code < 0) {
      valid = 0;
      word = 0;
      continue;
    }
    word = ((word << 2) | code) & 0xfff;
    if (++valid >= 6) {
      freq[static_cast<std::size_t>(word)] += 1.0;
      ++total;
    }
  }
  if (total == 0)
    throw std::runtime_error("embed: contig \"" + record.id + "\" too short: no valid 6-mer window");

  const auto& k = kernels::active();
  std::vector<double> out(dim_, 0.0);
  for (std::size_t w = 0; w < kKmerSpace; ++w) {
    // centered against the uniform composition, like the tetramer features;
    // the shared mean component would otherwise dominate the unit norm
    const double f = freq[w] / double(total) - 1.0 / double(kKmerSpace);
    if (f == 0.0) continue;
    k.axpy(out.data(), f, projection_.data() + w * dim_, dim_);
  }
  const double norm = std::sqrt(k.dot(out.data(), out.data(), dim_));
  if (norm > 0.0) k.scale(out.data(), 1.0 / norm, dim_);
  return out;
}

// ---------------------------------------------------------------------------

Matrix teacher_logits(const MlpModel& head, const Matrix& embeddings) {
  return forward(head, embeddings);
}

Matrix embed_all(const EmbeddingProvider& provider, const std::vector<ContigRecord>& records,
                 unsigned threads) {
  Matrix out(records.size(), provider.dim());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const std::vector<double> e = provider.embed(records[i]);
    double* row = out.row(i);
    for (std::size_t j = 0; j < e.size(); ++j) row[j] = e[j];
  });
  return out;
}

}  // namespace txd
