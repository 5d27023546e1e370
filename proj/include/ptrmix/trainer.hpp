#pragma once

// Training loop (Adam, per-epoch learning-rate decay, global-norm clipping,
// masked cross-entropy, cross-segment state carryover), the evaluation
// protocol where UNK-target queries always count as wrong, and the
// same-seed ablation harness over the four model modes.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptrmix/batch.hpp"
#include "ptrmix/model.hpp"
#include "ptrmix/optim.hpp"
#include "ptrmix/rng.hpp"

namespace ptrmix {

struct TrainConfig {
  double lr = 0.001;
  double decay = 0.6;   // learning-rate multiplier applied after every epoch
  double clip = 5.0;    // global gradient-norm ceiling
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  std::string loss_csv;       // when set, appends one "step,epoch,lr,loss" row per step
  bool record_norms = false;  // keep per-step pre/post-clip norms in the stats
};

struct TrainStats {
  std::vector<double> epoch_mean_loss;  // query-weighted mean loss per epoch
  std::vector<double> step_loss;        // per optimizer step
  std::vector<double> step_lr;
  std::vector<double> pre_clip_norm;    // only when record_norms
  std::vector<double> post_clip_norm;   // only when record_norms
  std::size_t steps = 0;
  std::size_t skipped_fully_masked = 0;
};

struct EvalReport {
  std::string mode;
  std::size_t queries = 0, correct = 0;
  std::size_t oov_queries = 0, oov_correct = 0;
  std::size_t invocab_queries = 0, invocab_correct = 0;
  std::size_t masked_queries = 0;  // OoV targets absent from their window

  double accuracy() const { return queries ? double(correct) / double(queries) : 0.0; }
  double oov_accuracy() const {
    return oov_queries ? double(oov_correct) / double(oov_queries) : 0.0;
  }
  double invocab_accuracy() const {
    return invocab_queries ? double(invocab_correct) / double(invocab_queries) : 0.0;
  }
};

namespace detail {

// Maps one batch position's target onto the concatenated output space of a
// step that exposed `slots` pointer dimensions: VocabId keeps its dimension,
// WindowPos offset o becomes pointer dimension V + slots - o (pointer modes
// only; elsewhere it is unsupervisable and masked), MaskedUnk stays masked.
inline std::int64_t target_dim(const TrainingTarget& tgt, const ModelConfig& cfg,
                               std::size_t slots) {
  switch (tgt.kind) {
    case TrainingTarget::Kind::VocabId:
      return static_cast<std::int64_t>(tgt.index);
    case TrainingTarget::Kind::WindowPos: {
      if (!cfg.uses_pointer()) return Tape<double>::kMaskedTarget;
      if (tgt.index == 0 || tgt.index > slots)
        throw std::logic_error("window offset " + std::to_string(tgt.index) +
                               " has no slot among " + std::to_string(slots));
      return static_cast<std::int64_t>(cfg.vocab_out_dim() + slots - tgt.index);
    }
    case TrainingTarget::Kind::MaskedUnk:
      return Tape<double>::kMaskedTarget;
  }
  return Tape<double>::kMaskedTarget;
}

inline Rng pointer_rng_for(std::uint64_t seed) {
  // Distinct stream from everything seeded directly with `seed`; only the
  // pointer_random control consumes it.
  return Rng(seed ^ 0x70bcd5f3a61239c4ull);
}

}  // namespace detail

struct StepResult {
  double loss = 0;
  std::size_t queries = 0;  // unmasked targets that contributed to the loss
  double pre_clip_norm = 0;
  double post_clip_norm = 0;
};

// One optimizer step on one batch: forward, masked cross-entropy averaged
// over unmasked targets, backward, clip, Adam. The carry is advanced either
// way; a batch whose every target is masked returns nullopt and leaves
// parameters and Adam moments untouched.
template <class Real>
std::optional<StepResult> train_step(ModelParams<Real>& params, const Batch& batch,
                                     CarryState<Real>& carry, double lr, double clip,
                                     Rng* pointer_rng) {
  const ModelConfig& cfg = params.config;
  Tape<Real> tp;
  auto bound = bind_params(tp, params);
  auto fwd = forward_segment(tp, cfg, bound, batch.input, carry, pointer_rng);

  typename Tape<Real>::Id total{};
  std::size_t live = 0;
  bool have_total = false;
  std::vector<std::int64_t> dims(batch.input.batch);
  for (std::size_t t = 0; t < batch.input.steps; ++t) {
    std::size_t step_live = 0;
    for (std::size_t b = 0; b < batch.input.batch; ++b) {
      dims[b] =
          detail::target_dim(batch.targets[t * batch.input.batch + b], cfg, fwd.steps[t].slots);
      if (dims[b] != Tape<Real>::kMaskedTarget) ++step_live;
    }
    if (step_live == 0) continue;
    auto ce = tp.cross_entropy_masked(fwd.steps[t].y, dims, Tape<Real>::Reduction::Sum);
    total = have_total ? tp.add(total, ce) : ce;
    have_total = true;
    live += step_live;
  }
  carry = std::move(fwd.carry);
  if (!have_total) return std::nullopt;  // nothing supervised: no update at all

  auto mean = tp.scale(total, Real(1) / static_cast<Real>(live));
  StepResult res;
  res.loss = static_cast<double>(tp.value(mean)[0]);
  res.queries = live;
  if (!std::isfinite(res.loss)) return res;  // caller reports the divergence
  tp.backward(mean);
  params.store.zero_grads();
  harvest_grads(tp, bound);
  res.pre_clip_norm = clip_global_norm(params.store, clip);
  res.post_clip_norm = global_grad_norm(params.store);
  adam_step(params.store, static_cast<Real>(lr));
  return res;
}

// Trains in place over the stream's batches, one optimizer step per batch,
// repeating the same deterministic batch order every epoch. lr(e) is exactly
// lr * decay^e.
template <class Real>
TrainStats train_model(ModelParams<Real>& params, const BatchStream& stream,
                       const TrainConfig& tc) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  if (tc.epochs == 0) throw std::invalid_argument("train_model: epochs must be positive");
  if (tc.decay <= 0 || tc.decay > 1)
    throw std::invalid_argument("train_model: decay must lie in (0, 1]");

  std::ofstream csv;
  if (!tc.loss_csv.empty()) {
    csv.open(tc.loss_csv);
    if (!csv) throw IoError("cannot write " + tc.loss_csv);
    csv << "step,epoch,lr,loss\n";
    csv.precision(17);
  }

  TrainStats stats;
  Rng prng = detail::pointer_rng_for(tc.seed);
  Rng* prng_ptr = cfg.mode == Mode::pointer_random ? &prng : nullptr;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr * std::pow(tc.decay, static_cast<double>(epoch));
    auto carry = CarryState<Real>::fresh(stream.batch_size(), cfg.hidden, cfg.window);
    double epoch_loss_weighted = 0;
    std::size_t epoch_queries = 0;

    for (std::size_t bi = 0; bi < stream.num_batches(); ++bi) {
      const Batch batch = stream.make_batch(bi);
      auto res = train_step(params, batch, carry, lr, tc.clip, prng_ptr);
      if (!res) {
        ++stats.skipped_fully_masked;
        continue;
      }
      if (!std::isfinite(res->loss))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(global_step) + " (epoch " +
                                 std::to_string(epoch) + ", lr " + std::to_string(lr) + ")");
      if (tc.record_norms) {
        stats.pre_clip_norm.push_back(res->pre_clip_norm);
        stats.post_clip_norm.push_back(res->post_clip_norm);
      }
      if (csv.is_open())
        csv << global_step << ',' << epoch << ',' << lr << ',' << res->loss << '\n';
      stats.step_loss.push_back(res->loss);
      stats.step_lr.push_back(lr);
      epoch_loss_weighted += res->loss * static_cast<double>(res->queries);
      epoch_queries += res->queries;
      ++global_step;
    }
    stats.epoch_mean_loss.push_back(epoch_queries ? epoch_loss_weighted / double(epoch_queries)
                                                  : std::numeric_limits<double>::quiet_NaN());
  }
  stats.steps = global_step;
  return stats;
}

// Top-1 accuracy under the protocol: a VocabId target is correct only on its
// own dimension; a WindowPos target is correct when the argmax is any pointer
// dimension whose remembered value equals the target's (value match, not slot
// match); a masked-UNK target is wrong unconditionally; padding positions are
// not queries. Ties resolve toward the lower dimension, matching decode.
template <class Real>
EvalReport evaluate_model(const ModelParams<Real>& params, const BatchStream& stream,
                          std::uint64_t seed = 1) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  EvalReport rep;
  rep.mode = mode_name(cfg.mode);
  Rng prng = detail::pointer_rng_for(seed);
  auto carry = CarryState<Real>::fresh(stream.batch_size(), cfg.hidden, cfg.window);
  const std::size_t V = cfg.vocab_out_dim();

  // bind_params needs a mutable reference only to reach the value buffers.
  auto& mut = const_cast<ModelParams<Real>&>(params);
  for (std::size_t bi = 0; bi < stream.num_batches(); ++bi) {
    const Batch batch = stream.make_batch(bi);
    Tape<Real> tp;
    auto bound = bind_params(tp, mut);
    auto fwd = forward_segment(tp, cfg, bound, batch.input, carry,
                               cfg.mode == Mode::pointer_random ? &prng : nullptr);
    for (std::size_t t = 0; t < batch.input.steps; ++t) {
      const auto& step = fwd.steps[t];
      const auto& y = tp.value(step.y);
      const std::size_t cols = V + step.slots;
      for (std::size_t b = 0; b < batch.input.batch; ++b) {
        const std::size_t at = t * batch.input.batch + b;
        if (!batch.scored[at]) continue;
        std::size_t arg = 0;
        for (std::size_t c = 1; c < cols; ++c)
          if (y[b * cols + c] > y[b * cols + arg]) arg = c;

        const TrainingTarget& tgt = batch.targets[at];
        bool correct = false;
        switch (tgt.kind) {
          case TrainingTarget::Kind::VocabId:
            correct = arg == tgt.index;
            break;
          case TrainingTarget::Kind::WindowPos:
            if (arg >= V) {
              const std::size_t j = arg - V;
              correct = step.slot_valid[b * step.slots + j] &&
                        step.slot_refs[b * step.slots + j] == batch.target_refs[at];
            }
            break;
          case TrainingTarget::Kind::MaskedUnk:
            ++rep.masked_queries;
            break;
        }
        ++rep.queries;
        rep.correct += correct;
        if (batch.oov[at]) {
          ++rep.oov_queries;
          rep.oov_correct += correct;
        } else {
          ++rep.invocab_queries;
          rep.invocab_correct += correct;
        }
      }
    }
    carry = std::move(fwd.carry);
  }
  return rep;
}

// Trains every requested mode from the same seed on the same batch order and
// evaluates each on the same held-out range. `base` supplies everything but
// the mode.
template <class Real>
std::vector<EvalReport> run_ablation(const Corpus& corpus, const Vocabulary& vocab,
                                     ModelConfig base, const TrainConfig& tc,
                                     std::span<const Mode> modes, std::size_t batch,
                                     std::size_t unroll, std::size_t train_programs,
                                     std::vector<TrainStats>* train_stats = nullptr) {
  const BatchStream train_stream(corpus, vocab, base.task, base.window, batch, unroll, 0,
                                 train_programs);
  const BatchStream test_stream(corpus, vocab, base.task, base.window, batch, unroll,
                                train_programs);
  std::vector<EvalReport> reports;
  for (Mode mode : modes) {
    ModelConfig cfg = base;
    cfg.mode = mode;
    Rng init_rng(tc.seed);
    auto params = ModelParams<Real>::init(cfg, init_rng);
    auto stats = train_model(params, train_stream, tc);
    if (train_stats) train_stats->push_back(std::move(stats));
    reports.push_back(evaluate_model(params, test_stream, tc.seed));
  }
  return reports;
}

}  // namespace ptrmix
