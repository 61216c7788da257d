#include "txd/features.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "txd/common.hpp"
#include "txd/io_binary.hpp"

namespace txd {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
    if (tab == std::string::npos) break;
    pos = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

double parse_value(const std::string& field, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("abundance file line " + std::to_string(lineno) + ": bad value \"" + field + "\"");
  }
}

}  // namespace

AbundanceTable load_abundances(std::istream& in, const std::vector<std::string>& contig_ids) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("abundance file: empty");
  auto header = split_tabs(line);
  if (header.size() < 2 || header[0] != "contig_id")
    throw ValidationError("abundance file: header must be contig_id<TAB>s1<TAB>...<TAB>sK");

  AbundanceTable table;
  table.sample_names.assign(header.begin() + 1, header.end());
  const std::size_t k = table.sample_names.size();

  std::unordered_map<std::string, std::vector<double>> raw;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_tabs(line);
    if (fields.size() != k + 1)
      throw ValidationError("abundance file line " + std::to_string(lineno) + ": expected " +
                            std::to_string(k + 1) + " columns, got " + std::to_string(fields.size()));
    std::vector<double> row(k);
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = parse_value(fields[j + 1], lineno);
      if (!std::isfinite(row[j]) || row[j] < 0.0)
        throw ValidationError("abundance file line " + std::to_string(lineno) +
                              ": negative or non-finite value in sample " + table.sample_names[j]);
    }
    raw[fields[0]] = std::move(row);
  }

  std::string missing;
  for (const auto& id : contig_ids)
    if (!raw.count(id)) missing += missing.empty() ? id : ", " + id;
  if (!missing.empty()) throw ValidationError("abundance file: missing rows for contigs: " + missing);

  const std::size_t n = contig_ids.size();
  table.rows = Matrix(n, k);
  table.totals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = raw[contig_ids[i]];
    double sum = 0.0;
    for (double v : row) sum += v;
    table.totals[i] = std::log1p(sum);
    if (sum > 0.0)
      for (std::size_t j = 0; j < k; ++j) table.rows(i, j) = row[j] / sum;
  }

  // z-score the log1p totals over the dataset; a constant column maps to zeros
  double mean = 0.0;
  for (double t : table.totals) mean += t;
  mean /= double(n);
  double var = 0.0;
  for (double t : table.totals) var += (t - mean) * (t - mean);
  var /= double(n);
  const double sd = std::sqrt(var);
  for (double& t : table.totals) t = sd > 0.0 ? (t - mean) / sd : 0.0;
  return table;
}

AssembleResult assemble_features(const std::vector<ContigRecord>& records, const TnfKernel& kernel,
                                 const AbundanceTable& abundances, const AssembleOptions& opts) {
  if (abundances.rows.rows != records.size())
    throw std::runtime_error("assemble_features: abundance rows do not match record count");

  const std::size_t k = abundances.rows.cols;
  const std::size_t d = kernel.dim;

  std::vector<std::vector<double>> tnfs(records.size());
  std::vector<char> ok(records.size(), 0);
  parallel_for(records.size(), opts.threads, [&](std::size_t i) {
    try {
      tnfs[i] = tnf(records[i], kernel);
      ok[i] = 1;
    } catch (const std::runtime_error&) {
      ok[i] = 0;  // too short; dropped below
    }
  });

  AssembleResult result;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (ok[i])
      ++survivors;
    else
      result.dropped.push_back(records[i].id);
  }
  if (survivors == 0) throw std::runtime_error("assemble_features: empty dataset, no contig has usable features");

  FeatureMatrix& fm = result.features;
  fm.tnf_dim = d;
  fm.n_samples = k;
  fm.data = Matrix(survivors, d + k + 1);
  fm.contig_ids.reserve(survivors);

  std::size_t r = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!ok[i]) continue;
    fm.contig_ids.push_back(records[i].id);
    double* row = fm.data.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] = tnfs[i][c];
    for (std::size_t j = 0; j < k; ++j) row[d + j] = abundances.rows(i, j);
    row[d + k] = abundances.totals[i];
    ++r;
  }

  if (opts.zscore_tnf) {
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < survivors; ++i) mean += fm.data(i, c);
      mean /= double(survivors);
      double var = 0.0;
      for (std::size_t i = 0; i < survivors; ++i) {
        const double dlt = fm.data(i, c) - mean;
        var += dlt * dlt;
      }
      const double sd = std::sqrt(var / double(survivors));
      for (std::size_t i = 0; i < survivors; ++i)
        fm.data(i, c) = sd > 0.0 ? (fm.data(i, c) - mean) / sd : 0.0;
    }
  }

  for (double x : fm.data.v)
    if (!std::isfinite(x)) throw std::runtime_error("assemble_features: non-finite feature value");
  return result;
}

void write_feature_cache(std::ostream& out, const FeatureMatrix& fm) {
  out.write("TXDF", 4);
  io::put_u32(out, 1);
  io::put_u32(out, static_cast<std::uint32_t>(fm.data.rows));
  io::put_u32(out, static_cast<std::uint32_t>(fm.width()));
  io::put_u32(out, static_cast<std::uint32_t>(fm.n_samples));
  for (double x : fm.data.v) io::put_f64(out, x);
  io::put_u32(out, static_cast<std::uint32_t>(fm.contig_ids.size()));
  for (const auto& id : fm.contig_ids) io::put_string(out, id);
  if (!out) throw std::runtime_error("feature cache: write failed");
}

FeatureMatrix read_feature_cache(std::istream& in) {
  io::expect_magic(in, "TXDF", "feature cache");
  const std::uint32_t version = io::get_u32(in);
  if (version != 1) throw std::runtime_error("feature cache: unsupported version " + std::to_string(version));
  const std::uint32_t n = io::get_u32(in);
  const std::uint32_t width = io::get_u32(in);
  const std::uint32_t k = io::get_u32(in);
  if (width < k + 1) throw std::runtime_error("feature cache: inconsistent width/K");

  FeatureMatrix fm;
  fm.n_samples = k;
  fm.tnf_dim = width - k - 1;
  fm.data = Matrix(n, width);
  for (double& x : fm.data.v) x = io::get_f64(in);
  const std::uint32_t ids = io::get_u32(in);
  if (ids != n) throw std::runtime_error("feature cache: id count does not match row count");
  fm.contig_ids.reserve(ids);
  for (std::uint32_t i = 0; i < ids; ++i) fm.contig_ids.push_back(io::get_string(in));
  return fm;
}

}  // namespace txd
