#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace txd {

struct ContigRecord {
  std::string id;        // FASTA header up to the first whitespace
  std::string sequence;  // uppercase, alphabet {A,C,G,T,N}

  std::size_t length() const { return sequence.size(); }
};

struct FastaParseResult {
  std::vector<ContigRecord> records;
  std::size_t replaced = 0;  // characters outside {A,C,G,T,N} mapped to N
};

// Multi-line records, CR/LF tolerated, header truncated at the first
// whitespace. Throws on sequence data before any header and on duplicate ids.
FastaParseResult parse_fasta(std::istream& in);

void write_fasta(std::ostream& out, const std::vector<ContigRecord>& records, std::size_t line_width = 80);

}  // namespace txd
