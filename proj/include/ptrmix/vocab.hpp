#pragma once

// Value vocabulary (K most frequent training values plus UNK/EOF/EMPTY),
// target labeling against a copy window, and corpus OoV/localness statistics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ptrmix/corpus.hpp"

namespace ptrmix {

struct Vocabulary {
  // The K most frequent value strings, id = rank position. Specials follow:
  // UNK = words.size(), EOF = +1, EMPTY = +2.
  std::vector<std::string> words;
  std::vector<std::uint64_t> frequencies;  // parallel to words
  std::size_t configured_k = 0;

  std::uint32_t unk_id() const { return static_cast<std::uint32_t>(words.size()); }
  std::uint32_t eof_id() const { return static_cast<std::uint32_t>(words.size() + 1); }
  std::uint32_t empty_id() const { return static_cast<std::uint32_t>(words.size() + 2); }
  // Total id count including the three specials.
  std::size_t size() const { return words.size() + 3; }

  std::optional<std::uint32_t> id_of(std::string_view value) const {
    auto it = index_.find(std::string(value));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void rebuild_index();

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Counts value frequencies over the first `train_programs` programs (all by
// default) and keeps the K most frequent, ties broken toward the
// lexicographically smaller string. EMPTY positions carry no string and are
// not counted. If fewer than K distinct values exist, all of them are kept.
Vocabulary build_vocab(const Corpus& corpus, std::size_t k,
                       std::size_t train_programs = static_cast<std::size_t>(-1));

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

// How one prediction target is supervised: a vocabulary id, a copyable
// window offset (1 = most recent eligible position), or masked out.
struct TrainingTarget {
  enum class Kind : std::uint8_t { VocabId, WindowPos, MaskedUnk };
  Kind kind = Kind::MaskedUnk;
  std::uint32_t index = 0;

  static TrainingTarget vocab_id(std::uint32_t id) { return {Kind::VocabId, id}; }
  static TrainingTarget window_pos(std::uint32_t offset) { return {Kind::WindowPos, offset}; }
  static TrainingTarget masked() { return {Kind::MaskedUnk, 0}; }
  bool operator==(const TrainingTarget&) const = default;
};

// Labels one target value against the window of previous values (oldest
// first; entries without a value are EMPTY positions). Precedence: in-vocab
// values — including EMPTY — are always VocabId; an out-of-vocabulary value
// matching the window yields the offset of the most recent match; otherwise
// the target is masked.
TrainingTarget label_target(const std::optional<std::string>& target,
                            std::span<const std::optional<std::string>> window,
                            const Vocabulary& vocab);

// Maps every value_ref of a corpus to its vocabulary id (UNK when absent).
// Index 0 is the EMPTY ref; the EOF sentinel is handled by the caller.
std::vector<std::uint32_t> map_refs_to_vocab(const Corpus& corpus, const Vocabulary& vocab);

// Ref-based fast path equivalent to label_target: within one corpus, equal
// strings have equal refs, so matching compares refs. `window` is oldest
// first; EMPTY refs never match. The EOF ref labels as VocabId(EOF).
TrainingTarget label_target_ref(std::uint32_t target_ref, std::span<const std::uint32_t> window,
                                const std::vector<std::uint32_t>& ref_vocab_ids,
                                const Vocabulary& vocab);

struct CorpusStats {
  std::size_t node_count = 0;
  std::size_t oov_count = 0;    // nodes whose value is outside the vocabulary
  std::size_t local_count = 0;  // OoV nodes whose value occurs in their window

  double oov_rate() const {
    return node_count ? static_cast<double>(oov_count) / static_cast<double>(node_count) : 0.0;
  }
  double localness() const {
    return node_count ? static_cast<double>(local_count) / static_cast<double>(node_count) : 0.0;
  }
};

// Exact node-level counts. The window of the node at flat position p is
// positions [p - window - 1, p - 2]: the tokens whose states a model with
// memory length `window` can still copy from when p is predicted (the state
// of p - 1 is not yet in memory at prediction time). Windows never cross
// program boundaries. `program_begin`/`program_end` select a split.
CorpusStats compute_stats(const Corpus& corpus, const Vocabulary& vocab, std::size_t window,
                          std::size_t program_begin = 0,
                          std::size_t program_end = static_cast<std::size_t>(-1));

}  // namespace ptrmix
