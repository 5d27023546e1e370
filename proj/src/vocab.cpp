#include "ptrmix/vocab.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace ptrmix {

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i)
    index_.emplace(words[i], static_cast<std::uint32_t>(i));
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t k, std::size_t train_programs) {
  const std::size_t n_programs = std::min(train_programs, corpus.programs.size());
  // Frequencies per value_ref (1-based; slot 0 unused).
  std::vector<std::uint64_t> counts(corpus.value_strings.size() + 1, 0);
  for (std::size_t p = 0; p < n_programs; ++p)
    for (const CorpusToken& tok : corpus.programs[p].tokens)
      if (tok.value_ref != kEmptyValueRef && tok.value_ref != kEofValueRef)
        ++counts[tok.value_ref];

  std::vector<std::uint32_t> refs;
  refs.reserve(corpus.value_strings.size());
  for (std::uint32_t r = 1; r < counts.size(); ++r)
    if (counts[r] > 0) refs.push_back(r);
  std::sort(refs.begin(), refs.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return corpus.value_strings[a - 1] < corpus.value_strings[b - 1];
  });
  if (refs.size() > k) refs.resize(k);

  Vocabulary vocab;
  vocab.configured_k = k;
  vocab.words.reserve(refs.size());
  vocab.frequencies.reserve(refs.size());
  for (std::uint32_t r : refs) {
    vocab.words.push_back(corpus.value_strings[r - 1]);
    vocab.frequencies.push_back(counts[r]);
  }
  vocab.rebuild_index();
  return vocab;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  nlohmann::json doc;
  doc["k"] = vocab.configured_k;
  doc["specials"] = {{"unk", vocab.unk_id()}, {"eof", vocab.eof_id()}, {"empty", vocab.empty_id()}};
  auto& words = doc["words"] = nlohmann::json::array();
  for (std::size_t i = 0; i < vocab.words.size(); ++i)
    words.push_back({vocab.words[i], vocab.frequencies[i]});
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << doc.dump(1, '\t') << '\n';
  if (!out) throw IoError(path + ": write failed");
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": not a vocabulary file: " + e.what());
  }
  Vocabulary vocab;
  vocab.configured_k = doc.at("k").get<std::size_t>();
  for (const auto& entry : doc.at("words")) {
    vocab.words.push_back(entry.at(0).get<std::string>());
    vocab.frequencies.push_back(entry.at(1).get<std::uint64_t>());
  }
  vocab.rebuild_index();
  return vocab;
}

TrainingTarget label_target(const std::optional<std::string>& target,
                            std::span<const std::optional<std::string>> window,
                            const Vocabulary& vocab) {
  if (!target) return TrainingTarget::vocab_id(vocab.empty_id());
  if (auto id = vocab.id_of(*target)) return TrainingTarget::vocab_id(*id);
  for (std::size_t off = 1; off <= window.size(); ++off) {
    const auto& candidate = window[window.size() - off];
    if (candidate && *candidate == *target)
      return TrainingTarget::window_pos(static_cast<std::uint32_t>(off));
  }
  return TrainingTarget::masked();
}

std::vector<std::uint32_t> map_refs_to_vocab(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<std::uint32_t> ids(corpus.value_strings.size() + 1);
  ids[0] = vocab.empty_id();
  for (std::size_t r = 0; r < corpus.value_strings.size(); ++r) {
    auto id = vocab.id_of(corpus.value_strings[r]);
    ids[r + 1] = id ? *id : vocab.unk_id();
  }
  return ids;
}

TrainingTarget label_target_ref(std::uint32_t target_ref, std::span<const std::uint32_t> window,
                                const std::vector<std::uint32_t>& ref_vocab_ids,
                                const Vocabulary& vocab) {
  if (target_ref == kEofValueRef) return TrainingTarget::vocab_id(vocab.eof_id());
  const std::uint32_t id = ref_vocab_ids[target_ref];
  if (id != vocab.unk_id()) return TrainingTarget::vocab_id(id);
  for (std::size_t off = 1; off <= window.size(); ++off) {
    const std::uint32_t candidate = window[window.size() - off];
    if (candidate != kEmptyValueRef && candidate != kEofValueRef && candidate == target_ref)
      return TrainingTarget::window_pos(static_cast<std::uint32_t>(off));
  }
  return TrainingTarget::masked();
}

CorpusStats compute_stats(const Corpus& corpus, const Vocabulary& vocab, std::size_t window,
                          std::size_t program_begin, std::size_t program_end) {
  const auto ref_ids = map_refs_to_vocab(corpus, vocab);
  const std::size_t end = std::min(program_end, corpus.programs.size());
  CorpusStats stats;
  for (std::size_t p = program_begin; p < end; ++p) {
    const auto& toks = corpus.programs[p].tokens;
    stats.node_count += toks.size();
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const std::uint32_t ref = toks[i].value_ref;
      if (ref == kEmptyValueRef || ref_ids[ref] != vocab.unk_id()) continue;
      ++stats.oov_count;
      const std::size_t lo = i >= window + 1 ? i - window - 1 : 0;
      for (std::size_t q = lo; q + 2 <= i; ++q) {
        if (toks[q].value_ref == ref) {
          ++stats.local_count;
          break;
        }
      }
    }
  }
  return stats;
}

}  // namespace ptrmix
