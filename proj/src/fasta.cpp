#include "txd/fasta.hpp"

#include <cctype>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

namespace txd {

FastaParseResult parse_fasta(std::istream& in) {
  FastaParseResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  bool have_record = false;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (line[0] == '>') {
      std::size_t end = 1;
      while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
      std::string id = line.substr(1, end - 1);
      if (id.empty())
        throw std::runtime_error("FASTA format error: empty record id at line " + std::to_string(lineno));
      if (!seen.insert(id).second)
        throw std::runtime_error("FASTA duplicate id: \"" + id + "\" at line " + std::to_string(lineno));
      result.records.push_back(ContigRecord{std::move(id), {}});
      have_record = true;
      continue;
    }

    if (!have_record)
      throw std::runtime_error("FASTA format error: sequence data before any header at line " +
                               std::to_string(lineno));

    std::string& seq = result.records.back().sequence;
    seq.reserve(seq.size() + line.size());
    for (char raw : line) {
      char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
      switch (c) {
        case 'A':
        case 'C':
        case 'G':
        case 'T':
        case 'N':
          break;
        default:
          c = 'N';
          ++result.replaced;
      }
      seq.push_back(c);
    }
  }
  return result;
}

void write_fasta(std::ostream& out, const std::vector<ContigRecord>& records, std::size_t line_width) {
  for (const ContigRecord& rec : records) {
    out << '>' << rec.id << '\n';
    for (std::size_t pos = 0; pos < rec.sequence.size(); pos += line_width)
      out << rec.sequence.substr(pos, line_width) << '\n';
  }
}

}  // namespace txd
