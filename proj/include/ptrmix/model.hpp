#pragma once

// The model family: an LSTM over (type, value) embeddings with optional
// context attention over the last L hidden states, parent-state retrieval,
// and a pointer mixture head that can copy an out-of-vocabulary value from
// the attention window instead of generating from the vocabulary.

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptrmix/optim.hpp"
#include "ptrmix/rng.hpp"
#include "ptrmix/tensor.hpp"
#include "ptrmix/vocab.hpp"

namespace ptrmix {

enum class Mode { vanilla, attentional, pointer_mixture, pointer_random };
enum class Task { type_prediction, value_prediction };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::attentional: return "attn";
    case Mode::pointer_mixture: return "pointer";
    case Mode::pointer_random: return "pointer-random";
  }
  return "?";
}

inline std::optional<Mode> mode_from_name(std::string_view name) {
  if (name == "vanilla") return Mode::vanilla;
  if (name == "attn" || name == "attentional") return Mode::attentional;
  if (name == "pointer" || name == "pointer-mixture") return Mode::pointer_mixture;
  if (name == "pointer-random") return Mode::pointer_random;
  return std::nullopt;
}

inline const char* task_name(Task t) {
  return t == Task::type_prediction ? "type" : "value";
}

inline std::optional<Task> task_from_name(std::string_view name) {
  if (name == "type") return Task::type_prediction;
  if (name == "value") return Task::value_prediction;
  return std::nullopt;
}

struct ModelConfig {
  std::size_t hidden = 128;  // k
  std::size_t window = 50;   // L, attention/copy span
  std::size_t type_dim = 32;
  std::size_t value_dim = 96;
  std::size_t type_vocab = 0;   // embedding rows, including the EOF padding type
  std::size_t value_vocab = 0;  // V, including UNK/EOF/EMPTY
  Mode mode = Mode::pointer_mixture;
  Task task = Task::value_prediction;
  bool use_parent_attention = true;

  bool uses_attention() const { return mode != Mode::vanilla; }
  bool uses_pointer() const {
    return mode == Mode::pointer_mixture || mode == Mode::pointer_random;
  }
  std::size_t input_dim() const { return type_dim + value_dim; }
  // [h; c] or [h; c; p] feeding the output stage
  std::size_t concat_dim() const { return hidden * (use_parent_attention ? 3 : 2); }
  std::size_t vocab_out_dim() const {
    return task == Task::type_prediction ? type_vocab : value_vocab;
  }

  void validate() const {
    if (!hidden || !window || !type_dim || !value_dim || !type_vocab || !value_vocab)
      throw std::invalid_argument("model config: all sizes must be at least 1");
    if (uses_pointer() && task != Task::value_prediction)
      throw std::invalid_argument(
          "model config: pointer modes require the value task (types have no OoV problem)");
  }
};

// All trainable parameters. Everything is uniform in [-0.05, 0.05] except the
// initial states h0/c0, which start at zero but are trained.
template <class Real>
struct ModelParams {
  ModelConfig config;
  ParamStore<Real> store;

  Param<Real>* type_emb = nullptr;
  Param<Real>* value_emb = nullptr;
  Param<Real>* lstm_wx = nullptr;  // [input_dim x 4k], gate order i,f,g,o
  Param<Real>* lstm_wh = nullptr;  // [k x 4k]
  Param<Real>* lstm_b = nullptr;   // [4k]
  Param<Real>* attn_wm = nullptr;  // [k x k], memory projection
  Param<Real>* attn_wh = nullptr;  // [k x k], query projection
  Param<Real>* attn_v = nullptr;   // [k], scoring vector
  Param<Real>* out_wg = nullptr;   // [concat_dim x k]
  Param<Real>* out_wv = nullptr;   // [k x V_out]
  Param<Real>* out_bv = nullptr;   // [V_out]
  Param<Real>* sw_w = nullptr;     // [2k x 1], switcher
  Param<Real>* sw_b = nullptr;     // [1]
  Param<Real>* h0 = nullptr;       // [k]
  Param<Real>* c0 = nullptr;       // [k]

  static ModelParams init(const ModelConfig& config, Rng& rng) {
    config.validate();
    const double half = 0.05;
    const std::size_t k = config.hidden;
    ModelParams p;
    p.config = config;
    p.type_emb = &p.store.add_uniform("type_emb", {config.type_vocab, config.type_dim}, rng, half);
    p.value_emb =
        &p.store.add_uniform("value_emb", {config.value_vocab, config.value_dim}, rng, half);
    p.lstm_wx = &p.store.add_uniform("lstm_wx", {config.input_dim(), 4 * k}, rng, half);
    p.lstm_wh = &p.store.add_uniform("lstm_wh", {k, 4 * k}, rng, half);
    p.lstm_b = &p.store.add_uniform("lstm_b", {4 * k}, rng, half);
    if (config.uses_attention()) {
      p.attn_wm = &p.store.add_uniform("attn_wm", {k, k}, rng, half);
      p.attn_wh = &p.store.add_uniform("attn_wh", {k, k}, rng, half);
      p.attn_v = &p.store.add_uniform("attn_v", {k}, rng, half);
      p.out_wg = &p.store.add_uniform("out_wg", {config.concat_dim(), k}, rng, half);
    }
    p.out_wv = &p.store.add_uniform("out_wv", {k, config.vocab_out_dim()}, rng, half);
    p.out_bv = &p.store.add_uniform("out_bv", {config.vocab_out_dim()}, rng, half);
    if (config.uses_pointer()) {
      p.sw_w = &p.store.add_uniform("sw_w", {2 * k, 1}, rng, half);
      p.sw_b = &p.store.add_uniform("sw_b", {1}, rng, half);
    }
    p.h0 = &p.store.add_zeros("h0", {k});
    p.c0 = &p.store.add_zeros("c0", {k});
    return p;
  }
};

// Tape leaves for one pass over the current parameter values, with the
// mapping back to the ParamStore for gradient harvesting.
template <class Real>
struct BoundParams {
  using Id = typename Tape<Real>::Id;
  std::vector<std::pair<Param<Real>*, Id>> entries;
  Id type_emb{}, value_emb{}, lstm_wx{}, lstm_wh{}, lstm_b{};
  Id attn_wm{}, attn_wh{}, attn_v{}, out_wg{}, out_wv{}, out_bv{};
  Id sw_w{}, sw_b{}, h0{}, c0{};
};

template <class Real>
BoundParams<Real> bind_params(Tape<Real>& tp, ModelParams<Real>& params) {
  BoundParams<Real> bound;
  auto leaf = [&](Param<Real>* p, typename Tape<Real>::Id& field) {
    if (!p) return;
    field = tp.leaf(p->shape, p->value);
    bound.entries.push_back({p, field});
  };
  leaf(params.type_emb, bound.type_emb);
  leaf(params.value_emb, bound.value_emb);
  leaf(params.lstm_wx, bound.lstm_wx);
  leaf(params.lstm_wh, bound.lstm_wh);
  leaf(params.lstm_b, bound.lstm_b);
  leaf(params.attn_wm, bound.attn_wm);
  leaf(params.attn_wh, bound.attn_wh);
  leaf(params.attn_v, bound.attn_v);
  leaf(params.out_wg, bound.out_wg);
  leaf(params.out_wv, bound.out_wv);
  leaf(params.out_bv, bound.out_bv);
  leaf(params.sw_w, bound.sw_w);
  leaf(params.sw_b, bound.sw_b);
  leaf(params.h0, bound.h0);
  leaf(params.c0, bound.c0);
  return bound;
}

// Adds each bound leaf's tape gradient into its Param's grad buffer.
template <class Real>
void harvest_grads(Tape<Real>& tp, const BoundParams<Real>& bound) {
  for (const auto& [param, id] : bound.entries) {
    const auto& g = tp.at(id).grad;
    if (g.empty()) continue;
    for (std::size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
  }
}

// One remembered hidden state: detached values plus, per batch lane, whether
// the state belongs to the lane's current program and which source token
// (value ref) it consumed.
template <class Real>
struct MemorySlot {
  std::vector<Real> h;              // B x k
  std::vector<std::uint8_t> valid;  // B
  std::vector<std::uint32_t> refs;  // B
};

// Everything carried from one segment to the next: final hidden/cell values
// and up to L remembered states (oldest first). Values are detached, so
// backpropagation truncates at segment boundaries.
template <class Real>
struct CarryState {
  std::size_t batch = 0, hidden = 0, window = 0;
  std::vector<Real> h, c;  // B x k
  std::deque<MemorySlot<Real>> memory;

  static CarryState fresh(std::size_t batch, std::size_t hidden, std::size_t window) {
    CarryState s;
    s.batch = batch;
    s.hidden = hidden;
    s.window = window;
    s.h.assign(batch * hidden, Real(0));
    s.c.assign(batch * hidden, Real(0));
    return s;
  }
};

// One segment of batched inputs, step-major: index (t, b) = t * batch + b.
// `reset` lanes start a new program at this segment and take h0/c0.
struct SegmentInput {
  std::size_t batch = 0, steps = 0;
  std::vector<std::uint32_t> type_ids;
  std::vector<std::uint32_t> value_ids;       // embedding rows (OoV already UNK)
  std::vector<std::uint32_t> value_refs;      // corpus refs for copy matching
  std::vector<std::uint32_t> parent_offsets;  // of the consumed token
  std::vector<std::uint8_t> reset;            // B

  std::uint32_t at(const std::vector<std::uint32_t>& v, std::size_t t, std::size_t b) const {
    return v[t * batch + b];
  }
};

// Per-step output. `y` is the final distribution; in pointer modes it holds
// the vocab dims first, then `slots` pointer dims (oldest remembered state
// first); otherwise slots is 0. slot_valid/slot_refs snapshot the memory the
// pointer dims refer to, lane-major: (b, j) = b * slots + j. The optional
// handles expose the pre-mixture parts for inspection.
template <class Real>
struct StepOutput {
  using Id = typename Tape<Real>::Id;
  Id y{};
  std::size_t slots = 0;
  std::vector<std::uint8_t> slot_valid;
  std::vector<std::uint32_t> slot_refs;
  std::optional<Id> w;      // vocabulary distribution
  std::optional<Id> alpha;  // attention weights (when any slot exists)
  std::optional<Id> l;      // copy distribution fed into the mixture
  std::optional<Id> gate;   // switcher after the cold-start override, [B x 1]
};

// Which remembered state serves as the parent vector for one lane: the slot
// `pl` steps back when it is live, else slot 1 back, else the program-initial
// state (returned as index S, one past the newest slot).
template <class ValidFn>
std::size_t choose_parent_slot(std::uint32_t pl, std::size_t slot_count, std::size_t window,
                               ValidFn valid) {
  if (slot_count > 0) {
    if (pl >= 1 && pl <= window && pl <= slot_count && valid(slot_count - pl))
      return slot_count - pl;
    if (valid(slot_count - 1)) return slot_count - 1;
  }
  return slot_count;
}

template <class Real>
struct SegmentForward {
  std::vector<StepOutput<Real>> steps;
  CarryState<Real> carry;
};

// Runs one unrolled segment. Step t consumes token t and its distribution
// predicts token t+1; the new hidden state joins the memory only after the
// prediction, so a token never points at itself. `pointer_rng` drives the
// pointer_random control's per-step random copy distribution.
template <class Real>
SegmentForward<Real> forward_segment(Tape<Real>& tp, const ModelConfig& config,
                                     const BoundParams<Real>& P, const SegmentInput& in,
                                     const CarryState<Real>& carry, Rng* pointer_rng = nullptr) {
  using Id = typename Tape<Real>::Id;
  const std::size_t B = in.batch, k = config.hidden, L = config.window, T = in.steps;
  if (carry.batch != B || carry.hidden != k)
    throw ShapeError("forward_segment: carry is " + std::to_string(carry.batch) + "x" +
                     std::to_string(carry.hidden) + " but the segment needs " + std::to_string(B) +
                     "x" + std::to_string(k));

  // Initial states: carried values, with reset lanes replaced by h0/c0.
  Id h_prev = tp.compose_rows(tp.constant({B, k}, carry.h), P.h0, in.reset);
  Id c_prev = tp.compose_rows(tp.constant({B, k}, carry.c), P.c0, in.reset);
  const Id h_seg_init = h_prev;

  struct Live {
    Id h;
    Id wm;  // cached W^m projection, reused by every step's scoring
    std::vector<std::uint8_t> valid;
    std::vector<std::uint32_t> refs;
  };
  std::deque<Live> mem;
  if (config.uses_attention()) {
    for (const auto& slot : carry.memory) {
      std::vector<std::uint8_t> valid = slot.valid;
      for (std::size_t b = 0; b < B; ++b)
        if (in.reset[b]) valid[b] = 0;  // previous program's states are dead
      Id h = tp.constant({B, k}, slot.h);
      mem.push_back({h, tp.matmul(h, P.attn_wm), std::move(valid), slot.refs});
    }
    // Fully dead leading slots carry no information; dropping them keeps the
    // slot count small without disturbing offsets counted from the newest.
    while (!mem.empty() &&
           std::none_of(mem.front().valid.begin(), mem.front().valid.end(),
                        [](std::uint8_t v) { return v != 0; }))
      mem.pop_front();
  }

  SegmentForward<Real> out;
  out.steps.reserve(T);
  std::vector<std::uint32_t> tids(B), vids(B), vrefs(B);

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      tids[b] = in.at(in.type_ids, t, b);
      vids[b] = in.at(in.value_ids, t, b);
      vrefs[b] = in.at(in.value_refs, t, b);
    }

    // x_t = [type embedding; value embedding]
    Id x = tp.concat2(tp.embedding_lookup(P.type_emb, tids),
                      tp.embedding_lookup(P.value_emb, vids), 1);

    // LSTM cell, fused gate projection, order i,f,g,o
    Id gates = tp.add_rowvec(tp.add(tp.matmul(x, P.lstm_wx), tp.matmul(h_prev, P.lstm_wh)),
                             P.lstm_b);
    Id gi = tp.sigmoid(tp.slice_cols(gates, 0, k));
    Id gf = tp.sigmoid(tp.slice_cols(gates, k, 2 * k));
    Id gg = tp.tanh_op(tp.slice_cols(gates, 2 * k, 3 * k));
    Id go = tp.sigmoid(tp.slice_cols(gates, 3 * k, 4 * k));
    Id c_t = tp.add(tp.mul(gf, c_prev), tp.mul(gi, gg));
    Id h_t = tp.mul(go, tp.tanh_op(c_t));

    StepOutput<Real> step;
    const std::size_t S = mem.size();

    if (!config.uses_attention()) {
      // vanilla head: project the hidden state straight into the vocabulary
      step.y = tp.softmax_rows(tp.add_rowvec(tp.matmul(h_t, P.out_wv), P.out_bv));
      step.w = step.y;
    } else {
      // context attention over the remembered states
      Id alpha{};  // defined only when S > 0
      Id ctx{};
      std::vector<std::uint8_t> mask;
      if (S > 0) {
        std::vector<Id> wm_ids, h_ids;
        wm_ids.reserve(S);
        h_ids.reserve(S);
        mask.resize(B * S);
        for (std::size_t j = 0; j < S; ++j) {
          wm_ids.push_back(mem[j].wm);
          h_ids.push_back(mem[j].h);
          for (std::size_t b = 0; b < B; ++b) mask[b * S + j] = mem[j].valid[b];
        }
        Id q = tp.matmul(h_t, P.attn_wh);
        alpha = tp.masked_softmax_rows(tp.attn_logits(wm_ids, q, P.attn_v), mask);
        ctx = tp.attn_mix(h_ids, alpha);
      } else {
        ctx = tp.zeros({B, k});
      }

      // parent state p_t: the remembered state that consumed the parent of
      // the current input token; out-of-range or dead offsets fall back to
      // offset 1, and an empty window falls back to the program-initial state
      Id concat;
      if (config.use_parent_attention) {
        std::vector<Id> choices;
        choices.reserve(S + 1);
        for (std::size_t j = 0; j < S; ++j) choices.push_back(mem[j].h);
        choices.push_back(h_seg_init);
        std::vector<std::uint32_t> sel(B);
        for (std::size_t b = 0; b < B; ++b)
          sel[b] = static_cast<std::uint32_t>(
              choose_parent_slot(in.at(in.parent_offsets, t, b), S, L,
                                 [&](std::size_t j) { return mem[j].valid[b] != 0; }));
        Id p_t = tp.row_select(choices, sel);
        Id hc = tp.concat2(h_t, ctx, 1);
        concat = tp.concat2(hc, p_t, 1);
      } else {
        concat = tp.concat2(h_t, ctx, 1);
      }

      Id g_t = tp.tanh_op(tp.matmul(concat, P.out_wg));
      Id w_t = tp.softmax_rows(tp.add_rowvec(tp.matmul(g_t, P.out_wv), P.out_bv));
      step.w = w_t;
      if (S > 0) step.alpha = alpha;

      if (!config.uses_pointer() || S == 0) {
        // attentional head, or a pointer head before any state is copyable:
        // all mass stays on the vocabulary (the switcher is forced to 1)
        step.y = w_t;
      } else {
        Id s_raw = tp.sigmoid(tp.add(tp.matmul(tp.concat2(h_t, ctx, 1), P.sw_w), P.sw_b));
        std::vector<std::uint8_t> cold(B, 0);
        for (std::size_t b = 0; b < B; ++b) {
          bool any = false;
          for (std::size_t j = 0; j < S && !any; ++j) any = mem[j].valid[b] != 0;
          cold[b] = any ? 0 : 1;
        }
        Id s_t = tp.compose_rows(s_raw, tp.constant({1}, {Real(1)}), cold);

        Id l_t;
        if (config.mode == Mode::pointer_mixture) {
          l_t = alpha;
        } else {
          // pointer_random control: an arbitrary distribution over the valid
          // slots, resampled each step, carrying no gradient
          std::vector<Real> rnd(B * S, Real(0));
          for (std::size_t b = 0; b < B; ++b) {
            double sum = 0;
            for (std::size_t j = 0; j < S; ++j)
              if (mask[b * S + j]) {
                const double u = pointer_rng ? pointer_rng->uniform(0.01, 1.0) : 1.0;
                rnd[b * S + j] = static_cast<Real>(u);
                sum += u;
              }
            if (sum > 0)
              for (std::size_t j = 0; j < S; ++j)
                rnd[b * S + j] = static_cast<Real>(rnd[b * S + j] / sum);
          }
          l_t = tp.constant({B, S}, std::move(rnd));
        }
        step.l = l_t;
        step.gate = s_t;
        step.y = tp.concat2(tp.rowwise_scale(w_t, s_t),
                            tp.rowwise_scale(l_t, tp.affine(s_t, Real(-1), Real(1))), 1);
        step.slots = S;
        step.slot_valid.resize(B * S);
        step.slot_refs.resize(B * S);
        for (std::size_t j = 0; j < S; ++j)
          for (std::size_t b = 0; b < B; ++b) {
            step.slot_valid[b * S + j] = mem[j].valid[b];
            step.slot_refs[b * S + j] = mem[j].refs[b];
          }
      }

      // the new state joins the memory only now, after the prediction
      mem.push_back({h_t, tp.matmul(h_t, P.attn_wm), std::vector<std::uint8_t>(B, 1), vrefs});
      if (mem.size() > L) mem.pop_front();
    }

    out.steps.push_back(std::move(step));
    h_prev = h_t;
    c_prev = c_t;
  }

  out.carry = CarryState<Real>::fresh(B, k, L);
  out.carry.h = tp.value(h_prev);
  out.carry.c = tp.value(c_prev);
  for (const auto& slot : mem)
    out.carry.memory.push_back({tp.value(slot.h), slot.valid, slot.refs});
  return out;
}

// A ranked completion: the token text, its probability, and whether it came
// from the vocabulary or was copied from the window (offset 1 = most recent).
struct Prediction {
  std::string token;
  double probability = 0;
  bool from_copy = false;
  std::uint32_t offset = 0;
};

inline std::string vocab_token_name(const Vocabulary& vocab, std::size_t id) {
  if (id < vocab.words.size()) return vocab.words[id];
  if (id == vocab.unk_id()) return "<UNK>";
  if (id == vocab.eof_id()) return "<EOF>";
  if (id == vocab.empty_id()) return "<EMPTY>";
  return "<id:" + std::to_string(id) + ">";
}

// Ranks the dimensions of one concatenated distribution row. `slot_values`
// aligns to the pointer dims (oldest slot first); slots without a value can
// only carry zero probability. Ties rank the lower dimension first.
template <class Real>
std::vector<Prediction> rank_predictions(std::span<const Real> y,
                                         const Vocabulary& vocab,
                                         std::span<const std::optional<std::string>> slot_values,
                                         std::size_t top_k) {
  const std::size_t v_dims = y.size() - slot_values.size();
  std::vector<std::size_t> order(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < order.size() && out.size() < top_k; ++i) {
    const std::size_t dim = order[i];
    Prediction p;
    p.probability = static_cast<double>(y[dim]);
    if (dim < v_dims) {
      p.token = vocab_token_name(vocab, dim);
    } else {
      const std::size_t j = dim - v_dims;
      if (!slot_values[j]) continue;  // dead slot, necessarily zero mass
      p.token = *slot_values[j];
      p.from_copy = true;
      p.offset = static_cast<std::uint32_t>(slot_values.size() - j);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Argmax decode of one row, as shown to the user.
template <class Real>
Prediction decode(std::span<const Real> y, const Vocabulary& vocab,
                  std::span<const std::optional<std::string>> slot_values) {
  auto top = rank_predictions(y, vocab, slot_values, 1);
  return top.empty() ? Prediction{} : top.front();
}

}  // namespace ptrmix
