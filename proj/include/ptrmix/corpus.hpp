#pragma once

// Preprocessed corpus: programs encoded as (augmented type id, value ref,
// parent offset) triples over shared string tables, the binary file format
// for them, and segmentation into fixed-length training pieces.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ptrmix/ast.hpp"

namespace ptrmix {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// value_ref meanings: 0 is the EMPTY value (node carries no text); the
// all-ones sentinel marks EOF padding tokens, which never occur in encoded
// programs themselves; anything else is 1 + index into Corpus::value_strings.
inline constexpr std::uint32_t kEmptyValueRef = 0;
inline constexpr std::uint32_t kEofValueRef = 0xFFFFFFFFu;

struct CorpusToken {
  std::uint32_t type_id = 0;
  std::uint32_t value_ref = kEmptyValueRef;
  std::uint32_t parent_offset = 1;

  bool operator==(const CorpusToken&) const = default;
};

struct EncodedProgram {
  std::uint64_t id = 0;
  std::vector<CorpusToken> tokens;
};

struct Corpus {
  // Augmented type names in order of first appearance; token type_id indexes
  // this table. The EOF padding type is virtual: one past the last entry.
  std::vector<std::string> type_names;
  // Value strings in order of first appearance, referenced 1-based.
  std::vector<std::string> value_strings;
  std::vector<EncodedProgram> programs;

  std::uint32_t eof_type_id() const { return static_cast<std::uint32_t>(type_names.size()); }

  // The value string of a token, or nullopt for EMPTY. EOF tokens never reach
  // this call path in normal use; they also return nullopt.
  std::optional<std::string_view> value_of(const CorpusToken& tok) const {
    if (tok.value_ref == kEmptyValueRef || tok.value_ref == kEofValueRef) return std::nullopt;
    return std::string_view(value_strings[tok.value_ref - 1]);
  }

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& p : programs) n += p.tokens.size();
    return n;
  }
};

// Incrementally interns flattened programs into a Corpus, so preprocessing
// can stream a large file line by line.
class CorpusBuilder {
 public:
  void add(const ProgramSeq& seq);
  Corpus finish() { return std::move(corpus_); }
  const Corpus& peek() const { return corpus_; }

 private:
  Corpus corpus_;
  std::unordered_map<std::string, std::uint32_t> type_index_;
  std::unordered_map<std::string, std::uint32_t> value_index_;
};

// Binary round-trip, format documented in docs/formats.md.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// One fixed-length piece of a program. The first real_len tokens come from
// the program; the rest are EOF padding.
struct Segment {
  std::uint64_t program_id = 0;
  std::uint32_t seg_index = 0;
  bool is_first = false;
  std::size_t real_len = 0;
  std::vector<CorpusToken> tokens;
};

// Splits a program into ceil(n / seg_len) segments of exactly seg_len tokens,
// the last one EOF-padded. An empty program yields no segments.
std::vector<Segment> segment_program(const EncodedProgram& program, std::size_t seg_len,
                                     std::uint32_t eof_type_id);

}  // namespace ptrmix
