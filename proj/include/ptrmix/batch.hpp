#pragma once

// Deterministic batching: whole programs are packed onto parallel lanes
// (longest first onto the least-loaded lane), each lane serves its programs'
// fixed-length segments in order, and every consumed real token carries a
// supervision target for the token that follows it.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ptrmix/corpus.hpp"
#include "ptrmix/model.hpp"
#include "ptrmix/vocab.hpp"

namespace ptrmix {

// One aligned batch of segments plus per-position supervision, step-major
// [steps * batch] like SegmentInput.
struct Batch {
  SegmentInput input;
  // Pad positions (EOF inputs, idle lanes) are masked; the last real token of
  // a program is supervised with the EOF id so every program yields exactly
  // as many queries as it has nodes.
  std::vector<TrainingTarget> targets;
  // Raw value ref of each target token (kEofValueRef for EOF targets and
  // unscored positions); evaluation uses it to credit copies by string.
  std::vector<std::uint32_t> target_refs;
  std::vector<std::uint8_t> scored;  // 1 where a real query is evaluated
  std::vector<std::uint8_t> oov;     // 1 where the target value is out of vocabulary
  std::size_t scored_count = 0;
};

class BatchStream {
 public:
  // Serves programs [program_begin, program_end) of the corpus. `window` is
  // the memory length of the model that will consume the batches; value-task
  // labels are computed against exactly that window.
  BatchStream(const Corpus& corpus, const Vocabulary& vocab, Task task, std::size_t window,
              std::size_t batch, std::size_t unroll, std::size_t program_begin = 0,
              std::size_t program_end = static_cast<std::size_t>(-1));

  std::size_t num_batches() const { return num_batches_; }
  std::size_t batch_size() const { return batch_; }
  std::size_t unroll() const { return unroll_; }
  // One query per token of every served program (EOF queries included).
  std::size_t total_queries() const { return total_queries_; }
  // Program indices per lane in serving order, exposed for inspection.
  const std::vector<std::vector<std::size_t>>& lanes() const { return lanes_; }

  // Deterministic and stateless: the same index always yields the same batch.
  Batch make_batch(std::size_t index) const;

 private:
  struct SegRef {
    std::uint32_t program = 0;  // index into corpus.programs
    std::uint32_t seg = 0;      // segment ordinal within that program
    std::uint8_t first = 0;     // segment 0 of its program: reset the lane
  };

  std::uint32_t vocab_id_of_ref(std::uint32_t ref) const;

  const Corpus* corpus_;
  const Vocabulary* vocab_;
  Task task_;
  std::size_t window_;
  std::size_t batch_;
  std::size_t unroll_;
  std::vector<std::uint32_t> ref_vocab_ids_;
  std::vector<std::vector<std::size_t>> lanes_;
  std::vector<std::vector<SegRef>> lane_segments_;
  std::size_t num_batches_ = 0;
  std::size_t total_queries_ = 0;
};

}  // namespace ptrmix
