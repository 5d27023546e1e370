#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrmix {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// One dense n-dimensional array living on a tape. `grad` stays empty until
// backward() touches the tensor.
template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool needs_grad = false;
  std::uint32_t tape_id = 0;

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }
};

// Reverse-mode tape. Built fresh for every forward pass (define-by-run);
// backward() replays the recorded ops in exact reverse order. Every op
// records its input/output ids plus a closure holding the local rule.
template <class Real>
class Tape {
 public:
  using Id = std::uint32_t;

  static constexpr std::int64_t kMaskedTarget = -1;

  // ---- tensor creation ----------------------------------------------------

  Id constant(Shape shape, std::vector<Real> data) {
    return push(std::move(shape), std::move(data), false);
  }

  Id constant_scalar(Real v) { return constant({1}, {v}); }

  Id zeros(Shape shape, bool needs_grad = false) {
    std::vector<Real> d(shape_numel(shape), Real(0));
    return push(std::move(shape), std::move(d), needs_grad);
  }

  // Differentiable leaf (a parameter view copied onto the tape).
  Id leaf(Shape shape, std::vector<Real> data) {
    return push(std::move(shape), std::move(data), true);
  }

  Tensor<Real>& at(Id id) { return nodes_[id]; }
  const Tensor<Real>& at(Id id) const { return nodes_[id]; }
  const std::vector<Real>& value(Id id) const { return nodes_[id].data; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t num_ops() const { return ops_.size(); }

  // ---- ops ----------------------------------------------------------------

  Id matmul(Id a, Id b) {
    const auto& ta = nodes_[a];
    const auto& tb = nodes_[b];
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0]) {
      throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape) +
                       " and " + shape_str(tb.shape));
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    std::vector<Real> out(m * n, Real(0));
    gemm(ta.data.data(), tb.data.data(), out.data(), m, k, n);
    Id y = push({m, n}, std::move(out), ta.needs_grad || tb.needs_grad);
    record({a, b}, y, [this, a, b, y, m, k, n] {
      auto& na = nodes_[a];
      auto& nb = nodes_[b];
      const auto& gy = nodes_[y].grad;
      if (na.needs_grad) {
        // dA += dC * B^T, with B transposed up front so the inner loop walks
        // contiguous memory
        ensure_grad(na);
        std::vector<Real> bt(k * n);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = nb.data[p * n + j];
        gemm(gy.data(), bt.data(), na.grad.data(), m, n, k);
      }
      if (nb.needs_grad) {
        // dB += A^T * dC
        ensure_grad(nb);
        for (std::size_t i = 0; i < m; ++i) {
          const Real* arow = na.data.data() + i * k;
          const Real* gyrow = gy.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == Real(0)) continue;
            Real* brow = nb.grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * gyrow[j];
          }
        }
      }
    });
    return y;
  }

  // Elementwise add; operands must match exactly or one side may be a scalar.
  Id add(Id a, Id b) { return binary(a, b, "add", BinOp::Add); }
  Id mul(Id a, Id b) { return binary(a, b, "mul", BinOp::Mul); }

  Id tanh_op(Id x) {
    const auto& tx = nodes_[x];
    std::vector<Real> out(tx.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(tx.data[i]);
    Id y = push(tx.shape, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const auto& ny = nodes_[y];
      for (std::size_t i = 0; i < nx.grad.size(); ++i)
        nx.grad[i] += ny.grad[i] * (Real(1) - ny.data[i] * ny.data[i]);
    });
    return y;
  }

  Id sigmoid(Id x) {
    const auto& tx = nodes_[x];
    std::vector<Real> out(tx.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(tx.data[i]);
    Id y = push(tx.shape, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const auto& ny = nodes_[y];
      for (std::size_t i = 0; i < nx.grad.size(); ++i)
        nx.grad[i] += ny.grad[i] * ny.data[i] * (Real(1) - ny.data[i]);
    });
    return y;
  }

  // y = a*x + b, elementwise with scalar coefficients (gives 1-s via a=-1,b=1)
  Id affine(Id x, Real a, Real b) {
    const auto& tx = nodes_[x];
    std::vector<Real> out(tx.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * tx.data[i] + b;
    Id y = push(tx.shape, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y, a] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const auto& gy = nodes_[y].grad;
      for (std::size_t i = 0; i < nx.grad.size(); ++i) nx.grad[i] += a * gy[i];
    });
    return y;
  }

  Id scale(Id x, Real a) { return affine(x, a, Real(0)); }

  Id concat(std::span<const Id> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    const Shape& s0 = nodes_[parts[0]].shape;
    if (axis >= s0.size())
      throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
    Shape out_shape = s0;
    std::size_t axis_total = 0;
    bool needs = false;
    for (Id p : parts) {
      const Shape& sp = nodes_[p].shape;
      if (sp.size() != s0.size())
        throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(sp));
      for (std::size_t d = 0; d < sp.size(); ++d)
        if (d != axis && sp[d] != s0[d])
          throw ShapeError("concat: extent mismatch " + shape_str(s0) + " vs " + shape_str(sp));
      axis_total += sp[axis];
      needs = needs || nodes_[p].needs_grad;
    }
    out_shape[axis] = axis_total;
    // outer = product of dims before axis, inner = product after
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    std::vector<Real> out(shape_numel(out_shape));
    std::size_t col_off = 0;
    for (Id p : parts) {
      const auto& tp = nodes_[p];
      const std::size_t w = tp.shape[axis] * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        const Real* src = tp.data.data() + o * w;
        Real* dst = out.data() + o * axis_total * inner + col_off;
        std::copy(src, src + w, dst);
      }
      col_off += w;
    }
    Id y = push(std::move(out_shape), std::move(out), needs);
    std::vector<Id> part_ids(parts.begin(), parts.end());
    record(part_ids, y, [this, part_ids, y, outer, inner, axis_total, axis] {
      const auto& gy = nodes_[y].grad;
      std::size_t col_off = 0;
      for (Id p : part_ids) {
        auto& np = nodes_[p];
        const std::size_t w = np.shape[axis] * inner;
        if (np.needs_grad) {
          ensure_grad(np);
          for (std::size_t o = 0; o < outer; ++o) {
            const Real* src = gy.data() + o * axis_total * inner + col_off;
            Real* dst = np.grad.data() + o * w;
            for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
          }
        }
        col_off += w;
      }
    });
    return y;
  }

  Id concat2(Id a, Id b, std::size_t axis) {
    Id parts[2] = {a, b};
    return concat(std::span<const Id>(parts, 2), axis);
  }

  // columns [c0, c1) of a 2-D tensor
  Id slice_cols(Id x, std::size_t c0, std::size_t c1) {
    const auto& tx = nodes_[x];
    if (tx.shape.size() != 2 || c0 >= c1 || c1 > tx.shape[1])
      throw ShapeError("slice_cols: bad slice [" + std::to_string(c0) + "," +
                       std::to_string(c1) + ") of " + shape_str(tx.shape));
    const std::size_t rows = tx.shape[0], cols = tx.shape[1], w = c1 - c0;
    std::vector<Real> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(tx.data.data() + r * cols + c0, tx.data.data() + r * cols + c1,
                out.data() + r * w);
    Id y = push({rows, w}, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y, rows, cols, c0, w] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const auto& gy = nodes_[y].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j)
          nx.grad[r * cols + c0 + j] += gy[r * w + j];
    });
    return y;
  }

  // [R x C] + [C] row-vector broadcast (bias add)
  Id add_rowvec(Id m, Id v) {
    const auto& tm = nodes_[m];
    const auto& tv = nodes_[v];
    if (tm.shape.size() != 2 || tv.numel() != tm.shape[1])
      throw ShapeError("add_rowvec: " + shape_str(tm.shape) + " vs " + shape_str(tv.shape));
    const std::size_t rows = tm.shape[0], cols = tm.shape[1];
    std::vector<Real> out(tm.data);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += tv.data[c];
    Id y = push(tm.shape, std::move(out), tm.needs_grad || tv.needs_grad);
    record({m, v}, y, [this, m, v, y, rows, cols] {
      const auto& gy = nodes_[y].grad;
      auto& nm = nodes_[m];
      auto& nv = nodes_[v];
      if (nm.needs_grad) {
        ensure_grad(nm);
        for (std::size_t i = 0; i < gy.size(); ++i) nm.grad[i] += gy[i];
      }
      if (nv.needs_grad) {
        ensure_grad(nv);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) nv.grad[c] += gy[r * cols + c];
      }
    });
    return y;
  }

  // [R x C] scaled per row by s ([R] or [R x 1])
  Id rowwise_scale(Id m, Id s) {
    const auto& tm = nodes_[m];
    const auto& ts = nodes_[s];
    if (tm.shape.size() != 2 || ts.numel() != tm.shape[0])
      throw ShapeError("rowwise_scale: " + shape_str(tm.shape) + " vs " + shape_str(ts.shape));
    const std::size_t rows = tm.shape[0], cols = tm.shape[1];
    std::vector<Real> out(tm.numel());
    for (std::size_t r = 0; r < rows; ++r) {
      const Real sv = ts.data[r];
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = tm.data[r * cols + c] * sv;
    }
    Id y = push(tm.shape, std::move(out), tm.needs_grad || ts.needs_grad);
    record({m, s}, y, [this, m, s, y, rows, cols] {
      const auto& gy = nodes_[y].grad;
      auto& nm = nodes_[m];
      auto& ns = nodes_[s];
      if (nm.needs_grad) {
        ensure_grad(nm);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real sv = ns.data[r];
          for (std::size_t c = 0; c < cols; ++c) nm.grad[r * cols + c] += gy[r * cols + c] * sv;
        }
      }
      if (ns.needs_grad) {
        ensure_grad(ns);
        for (std::size_t r = 0; r < rows; ++r) {
          Real acc = 0;
          for (std::size_t c = 0; c < cols; ++c) acc += gy[r * cols + c] * nm.data[r * cols + c];
          ns.grad[r] += acc;
        }
      }
    });
    return y;
  }

  // row gather: table [V x d], ids in [0, V)  ->  [ids.size() x d]
  Id embedding_lookup(Id table, const std::vector<std::uint32_t>& ids) {
    const auto& tt = nodes_[table];
    if (tt.shape.size() != 2)
      throw ShapeError("embedding_lookup: table must be 2-D, got " + shape_str(tt.shape));
    const std::size_t v = tt.shape[0], d = tt.shape[1];
    for (std::uint32_t id : ids)
      if (id >= v)
        throw IndexError("embedding_lookup: id " + std::to_string(id) +
                         " out of range [0," + std::to_string(v) + ")");
    std::vector<Real> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(tt.data.data() + ids[i] * d, tt.data.data() + (ids[i] + 1) * d,
                out.data() + i * d);
    Id y = push({ids.size(), d}, std::move(out), tt.needs_grad);
    record({table}, y, [this, table, y, ids, d] {
      auto& nt = nodes_[table];
      if (!nt.needs_grad) return;
      ensure_grad(nt);
      const auto& gy = nodes_[y].grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        Real* dst = nt.grad.data() + ids[i] * d;
        const Real* src = gy.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
    return y;
  }

  // row-stable softmax over the last dimension
  Id softmax_rows(Id x) {
    const auto& tx = nodes_[x];
    if (tx.shape.empty() || tx.shape.back() < 1)
      throw ShapeError("softmax_rows: bad shape " + shape_str(tx.shape));
    const std::size_t cols = tx.shape.back();
    const std::size_t rows = tx.numel() / cols;
    std::vector<Real> out(tx.numel());
    for (std::size_t r = 0; r < rows; ++r)
      softmax_row(tx.data.data() + r * cols, out.data() + r * cols, cols);
    Id y = push(tx.shape, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y, rows, cols] { softmax_backward(x, y, rows, cols); });
    return y;
  }

  // softmax restricted to mask-true entries; rows with no valid entry come out
  // all-zero (not NaN). mask.size() == numel.
  Id masked_softmax_rows(Id x, std::vector<std::uint8_t> mask) {
    const auto& tx = nodes_[x];
    const std::size_t cols = tx.shape.back();
    const std::size_t rows = tx.numel() / cols;
    if (mask.size() != tx.numel())
      throw ShapeError("masked_softmax_rows: mask size mismatch");
    std::vector<Real> out(tx.numel(), Real(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* in = tx.data.data() + r * cols;
      const std::uint8_t* mk = mask.data() + r * cols;
      Real mx = -std::numeric_limits<Real>::infinity();
      bool any = false;
      for (std::size_t c = 0; c < cols; ++c)
        if (mk[c]) { any = true; mx = std::max(mx, in[c]); }
      if (!any) continue;
      Real sum = 0;
      Real* o = out.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        if (mk[c]) { o[c] = std::exp(in[c] - mx); sum += o[c]; }
      }
      for (std::size_t c = 0; c < cols; ++c)
        if (mk[c]) o[c] /= sum;
    }
    Id y = push(tx.shape, std::move(out), tx.needs_grad);
    record({x}, y, [this, x, y, rows, cols, mask = std::move(mask)] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const auto& ny = nodes_[y];
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* yv = ny.data.data() + r * cols;
        const Real* gy = ny.grad.data() + r * cols;
        const std::uint8_t* mk = mask.data() + r * cols;
        Real dot = 0;
        for (std::size_t c = 0; c < cols; ++c)
          if (mk[c]) dot += gy[c] * yv[c];
        Real* gx = nx.grad.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c)
          if (mk[c]) gx[c] += yv[c] * (gy[c] - dot);
      }
    });
    return y;
  }

  // Attention score block: out[b, j] = sum_k v[k] * tanh(slot_j[b,k] + q[b,k]).
  // Slots are L tensors of shape [B x k], q is [B x k], v is [k]. Fused into a
  // single node so a 50-slot window does not blow up the tape.
  Id attn_logits(std::span<const Id> slots, Id q, Id v) {
    const auto& tq = nodes_[q];
    const auto& tv = nodes_[v];
    if (tq.shape.size() != 2) throw ShapeError("attn_logits: q must be [B x k]");
    const std::size_t b = tq.shape[0], k = tq.shape[1];
    if (tv.numel() != k) throw ShapeError("attn_logits: v size mismatch");
    const std::size_t l = slots.size();
    bool needs = tq.needs_grad || tv.needs_grad;
    for (Id s : slots) {
      const auto& ts = nodes_[s];
      if (ts.shape != tq.shape)
        throw ShapeError("attn_logits: slot shape " + shape_str(ts.shape) +
                         " vs q " + shape_str(tq.shape));
      needs = needs || ts.needs_grad;
    }
    std::vector<Real> out(b * l, Real(0));
    // The tanh values are the expensive part; keep them for the backward pass
    // instead of recomputing b*l*k of them, laid out (j, r, c).
    std::shared_ptr<std::vector<Real>> cache;
    if (needs) cache = std::make_shared<std::vector<Real>>(b * l * k);
    for (std::size_t j = 0; j < l; ++j) {
      const auto& ts = nodes_[slots[j]];
      for (std::size_t r = 0; r < b; ++r) {
        const Real* srow = ts.data.data() + r * k;
        const Real* qrow = tq.data.data() + r * k;
        Real* crow = cache ? cache->data() + (j * b + r) * k : nullptr;
        Real acc = 0;
        for (std::size_t c = 0; c < k; ++c) {
          const Real u = std::tanh(srow[c] + qrow[c]);
          if (crow) crow[c] = u;
          acc += tv.data[c] * u;
        }
        out[r * l + j] = acc;
      }
    }
    Id y = push({b, l}, std::move(out), needs);
    std::vector<Id> in_ids(slots.begin(), slots.end());
    in_ids.push_back(q);
    in_ids.push_back(v);
    record(in_ids, y, [this, in_ids, y, b, k, l, q, v, cache] {
      const auto& gy = nodes_[y].grad;
      auto& nq = nodes_[q];
      auto& nv = nodes_[v];
      const bool gq = nq.needs_grad, gv = nv.needs_grad;
      if (gq) ensure_grad(nq);
      if (gv) ensure_grad(nv);
      for (std::size_t j = 0; j < l; ++j) {
        auto& ns = nodes_[in_ids[j]];
        const bool gs = ns.needs_grad;
        if (gs) ensure_grad(ns);
        if (!gs && !gq && !gv) continue;
        for (std::size_t r = 0; r < b; ++r) {
          const Real g = gy[r * l + j];
          if (g == Real(0)) continue;
          const Real* crow = cache->data() + (j * b + r) * k;
          for (std::size_t c = 0; c < k; ++c) {
            const Real u = crow[c];
            const Real du = g * nv.data[c] * (Real(1) - u * u);
            if (gs) ns.grad[r * k + c] += du;
            if (gq) nq.grad[r * k + c] += du;
            if (gv) nv.grad[c] += g * u;
          }
        }
      }
    });
    return y;
  }

  // Context mix: out[b,:] = sum_j alpha[b,j] * slot_j[b,:]. alpha is [B x L].
  Id attn_mix(std::span<const Id> slots, Id alpha) {
    const auto& ta = nodes_[alpha];
    if (ta.shape.size() != 2 || ta.shape[1] != slots.size())
      throw ShapeError("attn_mix: alpha " + shape_str(ta.shape) + " vs " +
                       std::to_string(slots.size()) + " slots");
    const std::size_t b = ta.shape[0], l = slots.size();
    const std::size_t k = nodes_[slots[0]].shape[1];
    bool needs = ta.needs_grad;
    for (Id s : slots) {
      if (nodes_[s].shape != Shape{b, k}) throw ShapeError("attn_mix: slot shape mismatch");
      needs = needs || nodes_[s].needs_grad;
    }
    std::vector<Real> out(b * k, Real(0));
    for (std::size_t j = 0; j < l; ++j) {
      const auto& ts = nodes_[slots[j]];
      for (std::size_t r = 0; r < b; ++r) {
        const Real a = ta.data[r * l + j];
        if (a == Real(0)) continue;
        const Real* srow = ts.data.data() + r * k;
        Real* orow = out.data() + r * k;
        for (std::size_t c = 0; c < k; ++c) orow[c] += a * srow[c];
      }
    }
    Id y = push({b, k}, std::move(out), needs);
    std::vector<Id> in_ids(slots.begin(), slots.end());
    in_ids.push_back(alpha);
    record(in_ids, y, [this, in_ids, y, b, k, l, alpha] {
      const auto& gy = nodes_[y].grad;
      auto& na = nodes_[alpha];
      const bool ga = na.needs_grad;
      if (ga) ensure_grad(na);
      for (std::size_t j = 0; j < l; ++j) {
        auto& ns = nodes_[in_ids[j]];
        const bool gs = ns.needs_grad;
        if (gs) ensure_grad(ns);
        if (!gs && !ga) continue;
        for (std::size_t r = 0; r < b; ++r) {
          const Real a = na.data[r * l + j];
          const Real* grow = gy.data() + r * k;
          if (gs && a != Real(0)) {
            Real* srow = ns.grad.data() + r * k;
            for (std::size_t c = 0; c < k; ++c) srow[c] += a * grow[c];
          }
          if (ga) {
            const Real* srow = ns.data.data() + r * k;
            Real acc = 0;
            for (std::size_t c = 0; c < k; ++c) acc += srow[c] * grow[c];
            na.grad[r * l + j] += acc;
          }
        }
      }
    });
    return y;
  }

  // Per-lane state at segment start: carried rows stay as-is, reset rows take
  // the trainable init vector. carried [B x k] (usually constant), init [k].
  Id compose_rows(Id carried, Id init, const std::vector<std::uint8_t>& reset) {
    const auto& tc = nodes_[carried];
    const auto& ti = nodes_[init];
    if (tc.shape.size() != 2 || ti.numel() != tc.shape[1] || reset.size() != tc.shape[0])
      throw ShapeError("compose_rows: " + shape_str(tc.shape) + " vs " + shape_str(ti.shape));
    const std::size_t b = tc.shape[0], k = tc.shape[1];
    std::vector<Real> out(tc.data);
    for (std::size_t r = 0; r < b; ++r)
      if (reset[r]) std::copy(ti.data.begin(), ti.data.end(), out.begin() + r * k);
    Id y = push(tc.shape, std::move(out), tc.needs_grad || ti.needs_grad);
    record({carried, init}, y, [this, carried, init, y, reset, b, k] {
      const auto& gy = nodes_[y].grad;
      auto& nc = nodes_[carried];
      auto& ni = nodes_[init];
      if (nc.needs_grad) {
        ensure_grad(nc);
        for (std::size_t r = 0; r < b; ++r)
          if (!reset[r])
            for (std::size_t c = 0; c < k; ++c) nc.grad[r * k + c] += gy[r * k + c];
      }
      if (ni.needs_grad) {
        ensure_grad(ni);
        for (std::size_t r = 0; r < b; ++r)
          if (reset[r])
            for (std::size_t c = 0; c < k; ++c) ni.grad[c] += gy[r * k + c];
      }
    });
    return y;
  }

  // Per-row gather across tensors: out[r] = slots[sel[r]][r]. All slots are
  // [B x k]; sel holds one slot index per row.
  Id row_select(std::span<const Id> slots, const std::vector<std::uint32_t>& sel) {
    if (slots.empty()) throw ShapeError("row_select: no slots");
    const auto& t0 = nodes_[slots[0]];
    if (t0.shape.size() != 2 || sel.size() != t0.shape[0])
      throw ShapeError("row_select: slots are " + shape_str(t0.shape) + " but " +
                       std::to_string(sel.size()) + " selectors given");
    const std::size_t b = t0.shape[0], k = t0.shape[1];
    bool needs = false;
    for (Id s : slots) {
      if (nodes_[s].shape != Shape{b, k}) throw ShapeError("row_select: slot shape mismatch");
      needs = needs || nodes_[s].needs_grad;
    }
    std::vector<Real> out(b * k);
    for (std::size_t r = 0; r < b; ++r) {
      if (sel[r] >= slots.size())
        throw IndexError("row_select: selector " + std::to_string(sel[r]) + " of " +
                         std::to_string(slots.size()) + " slots");
      const auto& src = nodes_[slots[sel[r]]].data;
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(r * k),
                src.begin() + static_cast<std::ptrdiff_t>((r + 1) * k), out.begin() + r * k);
    }
    Id y = push({b, k}, std::move(out), needs);
    std::vector<Id> in_ids(slots.begin(), slots.end());
    record(in_ids, y, [this, in_ids, y, sel, k] {
      const auto& gy = nodes_[y].grad;
      for (std::size_t r = 0; r < sel.size(); ++r) {
        auto& ns = nodes_[in_ids[sel[r]]];
        if (!ns.needs_grad) continue;
        ensure_grad(ns);
        for (std::size_t c = 0; c < k; ++c) ns.grad[r * k + c] += gy[r * k + c];
      }
    });
    return y;
  }

  enum class Reduction { Mean, Sum };

  // Masked negative log likelihood over already-normalized rows. Targets are
  // column indices; kMaskedTarget rows contribute exactly zero to value and
  // gradient. log is clamped at a 1e-12 probability floor.
  Id cross_entropy_masked(Id dist, const std::vector<std::int64_t>& targets,
                          Reduction red = Reduction::Mean) {
    const auto& td = nodes_[dist];
    if (td.shape.size() != 2 || targets.size() != td.shape[0])
      throw ShapeError("cross_entropy_masked: dist " + shape_str(td.shape) + " vs " +
                       std::to_string(targets.size()) + " targets");
    const std::size_t rows = td.shape[0], cols = td.shape[1];
    const Real floor = Real(1e-12);
    std::size_t live = 0;
    Real total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::int64_t t = targets[r];
      if (t == kMaskedTarget) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= cols)
        throw IndexError("cross_entropy_masked: target " + std::to_string(t) +
                         " out of range [0," + std::to_string(cols) + ")");
      ++live;
      total += -std::log(std::max(td.data[r * cols + t], floor));
    }
    const Real denom = (red == Reduction::Mean && live > 0) ? Real(live) : Real(1);
    Id y = push({1}, {live == 0 ? Real(0) : total / denom}, td.needs_grad);
    record({dist}, y, [this, dist, y, targets, cols, denom, floor] {
      auto& nd = nodes_[dist];
      if (!nd.needs_grad) return;
      ensure_grad(nd);
      const Real g = nodes_[y].grad[0];
      for (std::size_t r = 0; r < targets.size(); ++r) {
        const std::int64_t t = targets[r];
        if (t == kMaskedTarget) continue;
        const Real p = nd.data[r * cols + t];
        if (p > floor) nd.grad[r * cols + t] += -g / (p * denom);
      }
    });
    return y;
  }

  Id sum_all(Id x) {
    const auto& tx = nodes_[x];
    Real total = 0;
    for (Real v : tx.data) total += v;
    Id y = push({1}, {total}, tx.needs_grad);
    record({x}, y, [this, x, y] {
      auto& nx = nodes_[x];
      if (!nx.needs_grad) return;
      ensure_grad(nx);
      const Real g = nodes_[y].grad[0];
      for (Real& v : nx.grad) v += g;
    });
    return y;
  }

  // ---- backward -----------------------------------------------------------

  void backward(Id loss) {
    auto& nl = nodes_[loss];
    if (!nl.is_scalar())
      throw ShapeError("backward: loss must be scalar, got " + shape_str(nl.shape));
    ensure_grad(nl);
    nl.grad[0] = Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (nodes_[it->output].grad.empty()) continue;  // no gradient reached this op
      it->back();
    }
  }

 private:
  enum class BinOp { Add, Mul };

  struct OpRecord {
    std::vector<Id> inputs;
    Id output;
    std::function<void()> back;
  };

  static Real stable_sigmoid(Real x) {
    if (x >= Real(0)) {
      const Real e = std::exp(-x);
      return Real(1) / (Real(1) + e);
    }
    const Real e = std::exp(x);
    return e / (Real(1) + e);
  }

  static void softmax_row(const Real* in, Real* out, std::size_t n) {
    Real mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    Real sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - mx);
      sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
  }

  void softmax_backward(Id x, Id y, std::size_t rows, std::size_t cols) {
    auto& nx = nodes_[x];
    if (!nx.needs_grad) return;
    ensure_grad(nx);
    const auto& ny = nodes_[y];
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* yv = ny.data.data() + r * cols;
      const Real* gy = ny.grad.data() + r * cols;
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * yv[c];
      Real* gx = nx.grad.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gx[c] += yv[c] * (gy[c] - dot);
    }
  }

  Id binary(Id a, Id b, const char* name, BinOp op) {
    const auto& ta = nodes_[a];
    const auto& tb = nodes_[b];
    const bool a_scalar = ta.is_scalar(), b_scalar = tb.is_scalar();
    if (ta.shape != tb.shape && !a_scalar && !b_scalar)
      throw ShapeError(std::string(name) + ": incompatible shapes " +
                       shape_str(ta.shape) + " and " + shape_str(tb.shape));
    const Shape& out_shape = b_scalar || ta.shape == tb.shape ? ta.shape : tb.shape;
    const std::size_t n = shape_numel(out_shape);
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Real av = a_scalar ? ta.data[0] : ta.data[i];
      const Real bv = b_scalar ? tb.data[0] : tb.data[i];
      out[i] = op == BinOp::Add ? av + bv : av * bv;
    }
    Id y = push(out_shape, std::move(out), ta.needs_grad || tb.needs_grad);
    record({a, b}, y, [this, a, b, y, op, a_scalar, b_scalar, n] {
      const auto& gy = nodes_[y].grad;
      auto& na = nodes_[a];
      auto& nb = nodes_[b];
      if (na.needs_grad) {
        ensure_grad(na);
        for (std::size_t i = 0; i < n; ++i) {
          const Real g = op == BinOp::Add
                             ? gy[i]
                             : gy[i] * (b_scalar ? nb.data[0] : nb.data[i]);
          na.grad[a_scalar ? 0 : i] += g;
        }
      }
      if (nb.needs_grad) {
        ensure_grad(nb);
        for (std::size_t i = 0; i < n; ++i) {
          const Real g = op == BinOp::Add
                             ? gy[i]
                             : gy[i] * (a_scalar ? na.data[0] : na.data[i]);
          nb.grad[b_scalar ? 0 : i] += g;
        }
      }
    });
    return y;
  }

  // Plain i-k-j GEMM. Accumulation order over k is fixed per output cell, so a
  // row's result never depends on how many other rows share the batch. The
  // three buffers never overlap (outputs are always freshly allocated), which
  // the restrict qualifiers tell the vectorizer.
  static void gemm(const Real* __restrict a, const Real* __restrict b, Real* __restrict c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real* arow = a + i * k;
      Real* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = arow[p];
        if (av == Real(0)) continue;
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  static void ensure_grad(Tensor<Real>& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), Real(0));
  }

  Id push(Shape shape, std::vector<Real> data, bool needs_grad) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match buffer of " +
                       std::to_string(data.size()));
    Tensor<Real> t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    t.needs_grad = needs_grad;
    t.tape_id = static_cast<Id>(nodes_.size());
    nodes_.push_back(std::move(t));
    return nodes_.back().tape_id;
  }

  void record(std::vector<Id> inputs, Id output, std::function<void()> back) {
    if (!nodes_[output].needs_grad) return;  // constant subgraph, nothing to replay
    ops_.push_back({std::move(inputs), output, std::move(back)});
  }

  std::vector<Tensor<Real>> nodes_;
  std::vector<OpRecord> ops_;
};

}  // namespace ptrmix
