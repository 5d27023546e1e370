#include "ptrmix/batch.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ptrmix {

BatchStream::BatchStream(const Corpus& corpus, const Vocabulary& vocab, Task task,
                         std::size_t window, std::size_t batch, std::size_t unroll,
                         std::size_t program_begin, std::size_t program_end)
    : corpus_(&corpus),
      vocab_(&vocab),
      task_(task),
      window_(window),
      batch_(batch),
      unroll_(unroll) {
  if (batch_ == 0) throw std::invalid_argument("batch size must be positive");
  if (unroll_ == 0) throw std::invalid_argument("unroll length must be positive");
  const std::size_t end = std::min(program_end, corpus.programs.size());
  const std::size_t begin = std::min(program_begin, end);

  ref_vocab_ids_ = map_refs_to_vocab(corpus, vocab);

  // Longest programs first, each onto the currently least-loaded lane. Ties
  // break toward the earlier program / lower lane, keeping the plan
  // deterministic.
  std::vector<std::size_t> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.programs[a].tokens.size() > corpus.programs[b].tokens.size();
  });
  lanes_.assign(batch_, {});
  std::vector<std::size_t> load(batch_, 0);
  for (std::size_t p : order) {
    const std::size_t lane =
        std::min_element(load.begin(), load.end()) - load.begin();
    lanes_[lane].push_back(p);
    load[lane] += corpus.programs[p].tokens.size();
    total_queries_ += corpus.programs[p].tokens.size();
  }

  lane_segments_.assign(batch_, {});
  for (std::size_t lane = 0; lane < batch_; ++lane) {
    for (std::size_t p : lanes_[lane]) {
      const std::size_t n = corpus.programs[p].tokens.size();
      const std::size_t segs = (n + unroll_ - 1) / unroll_;
      for (std::size_t s = 0; s < segs; ++s)
        lane_segments_[lane].push_back({static_cast<std::uint32_t>(p),
                                        static_cast<std::uint32_t>(s), s == 0});
    }
    num_batches_ = std::max(num_batches_, lane_segments_[lane].size());
  }
}

std::uint32_t BatchStream::vocab_id_of_ref(std::uint32_t ref) const {
  if (ref == kEofValueRef) return vocab_->eof_id();
  return ref_vocab_ids_[ref];
}

Batch BatchStream::make_batch(std::size_t index) const {
  if (index >= num_batches_) throw std::out_of_range("batch index past the end of the stream");
  const std::size_t B = batch_, T = unroll_;
  const std::uint32_t eof_type = corpus_->eof_type_id();

  Batch out;
  out.input.batch = B;
  out.input.steps = T;
  out.input.type_ids.assign(T * B, eof_type);
  out.input.value_ids.assign(T * B, vocab_->eof_id());
  out.input.value_refs.assign(T * B, kEofValueRef);
  out.input.parent_offsets.assign(T * B, 1);
  out.input.reset.assign(B, 1);
  out.targets.assign(T * B, TrainingTarget::masked());
  out.target_refs.assign(T * B, kEofValueRef);
  out.scored.assign(T * B, 0);
  out.oov.assign(T * B, 0);

  std::vector<std::uint32_t> window_refs;
  window_refs.reserve(window_);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& lane = lane_segments_[b];
    if (index >= lane.size()) continue;  // exhausted lane: EOF padding, masked throughout
    const SegRef sr = lane[index];
    const auto& prog = corpus_->programs[sr.program];
    const std::size_t n = prog.tokens.size();
    out.input.reset[b] = sr.first;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t g = sr.seg * T + t;  // program-local index of the consumed token
      if (g >= n) break;                     // the rest of this segment is EOF padding
      const std::size_t at = t * B + b;
      const CorpusToken& tok = prog.tokens[g];
      out.input.type_ids[at] = tok.type_id;
      out.input.value_ids[at] = vocab_id_of_ref(tok.value_ref);
      out.input.value_refs[at] = tok.value_ref;
      out.input.parent_offsets[at] = tok.parent_offset;
      out.scored[at] = 1;
      ++out.scored_count;

      if (g + 1 == n) {  // final query of the program: predict EOF
        out.targets[at] = TrainingTarget::vocab_id(
            task_ == Task::type_prediction ? eof_type : vocab_->eof_id());
        continue;
      }
      const CorpusToken& next = prog.tokens[g + 1];
      if (task_ == Task::type_prediction) {
        out.targets[at] = TrainingTarget::vocab_id(next.type_id);
        continue;
      }
      out.target_refs[at] = next.value_ref;
      // Window of the predicted position p = g + 1: tokens [p - L - 1, p - 2],
      // exactly the ones whose states sit in the model's memory at that step.
      const std::size_t p = g + 1;
      const std::size_t lo = p > window_ ? p - window_ - 1 : 0;
      window_refs.clear();
      for (std::size_t q = lo; q + 1 < p; ++q) window_refs.push_back(prog.tokens[q].value_ref);
      out.targets[at] = label_target_ref(next.value_ref, window_refs, ref_vocab_ids_, *vocab_);
      out.oov[at] = next.value_ref != kEmptyValueRef &&
                    ref_vocab_ids_[next.value_ref] == vocab_->unk_id();
    }
  }
  return out;
}

}  // namespace ptrmix
