#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "ptrmix/optim.hpp"
#include "ptrmix/rng.hpp"
#include "ptrmix/tensor.hpp"

using namespace ptrmix;
using Tp = Tape<double>;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double half = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-half, half);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST_CASE("matmul identity and projection") {
  Tp tp;
  auto i2 = tp.constant({2, 2}, {1, 0, 0, 1});
  auto m = tp.constant({2, 2}, {1, 2, 3, 4});
  auto y = tp.matmul(i2, m);
  CHECK(tp.value(y) == std::vector<double>{1, 2, 3, 4});

  auto p = tp.constant({2, 2}, {1, 0, 0, 0});
  auto v = tp.constant({2, 1}, {5, 7});
  auto z = tp.matmul(p, v);
  CHECK(tp.value(z) == std::vector<double>{5, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tp tp;
  auto a = tp.constant({2, 3}, std::vector<double>(6, 1.0));
  auto b = tp.constant({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_WITH_AS(tp.matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
  try {
    tp.matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences") {
  Rng rng(7);
  std::vector<double> a_data = random_vec(rng, 12);
  std::vector<double> b_data = random_vec(rng, 8);

  auto loss_fn = [&] {
    Tp tp;
    auto a = tp.constant({3, 4}, a_data);
    auto b = tp.constant({4, 2}, b_data);
    auto y = tp.matmul(a, b);
    // weighted sum so the gradient is not uniform
    auto w = tp.constant({3, 2}, {0.3, -0.9, 1.4, 0.2, -0.6, 0.8});
    return tp.value(tp.sum_all(tp.mul(y, w)))[0];
  };

  Tp tp;
  auto a = tp.leaf({3, 4}, a_data);
  auto b = tp.leaf({4, 2}, b_data);
  auto y = tp.matmul(a, b);
  auto w = tp.constant({3, 2}, {0.3, -0.9, 1.4, 0.2, -0.6, 0.8});
  auto loss = tp.sum_all(tp.mul(y, w));
  tp.backward(loss);

  auto rep = testing::fd_check({{"a", &a_data}, {"b", &b_data}},
                               {&tp.at(a).grad, &tp.at(b).grad}, loss_fn);
  CHECK(rep.max_rel_err <= 1e-4);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST_CASE("softmax symmetry, stability, oracle value") {
  Tp tp;
  auto a = tp.softmax_rows(tp.constant({1, 2}, {0, 0}));
  CHECK(tp.value(a)[0] == doctest::Approx(0.5));
  CHECK(tp.value(a)[1] == doctest::Approx(0.5));

  auto b = tp.softmax_rows(tp.constant({1, 2}, {1000, 0}));
  CHECK(std::isfinite(tp.value(b)[0]));
  CHECK(tp.value(b)[0] == doctest::Approx(1.0));
  CHECK(tp.value(b)[1] == doctest::Approx(0.0));

  // frozen from an independent high-precision exp-normalize evaluation
  auto c = tp.softmax_rows(tp.constant({1, 3}, {1, 2, 3}));
  CHECK(tp.value(c)[0] == doctest::Approx(0.09003057317038046).epsilon(1e-12));
  CHECK(tp.value(c)[1] == doctest::Approx(0.24472847105479765).epsilon(1e-12));
  CHECK(tp.value(c)[2] == doctest::Approx(0.6652409557748219).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for large-magnitude inputs") {
  Rng rng(11);
  Tp tp;
  for (int trial = 0; trial < 50; ++trial) {
    auto x = tp.softmax_rows(tp.constant({4, 6}, random_vec(rng, 24, 1e3)));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) s += tp.value(x)[r * 6 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax backward matches finite differences") {
  Rng rng(13);
  std::vector<double> x_data = random_vec(rng, 10, 2.0);
  std::vector<double> w_data = random_vec(rng, 10);
  auto loss_fn = [&] {
    Tp tp;
    auto y = tp.softmax_rows(tp.constant({2, 5}, x_data));
    return tp.value(tp.sum_all(tp.mul(y, tp.constant({2, 5}, w_data))))[0];
  };
  Tp tp;
  auto x = tp.leaf({2, 5}, x_data);
  auto y = tp.softmax_rows(x);
  auto loss = tp.sum_all(tp.mul(y, tp.constant({2, 5}, w_data)));
  tp.backward(loss);
  auto rep = testing::fd_check({{"x", &x_data}}, {&tp.at(x).grad}, loss_fn);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("masked softmax zeroes invalid entries and empty rows") {
  Tp tp;
  auto x = tp.constant({2, 3}, {5, 1, 1, 2, 2, 2});
  auto y = tp.masked_softmax_rows(x, {1, 1, 0, 0, 0, 0});
  const auto& v = tp.value(y);
  CHECK(v[2] == 0.0);
  CHECK(v[0] + v[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v[3] == 0.0);
  CHECK(v[4] == 0.0);
  CHECK(v[5] == 0.0);
}

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

TEST_CASE("pointwise basics") {
  Tp tp;
  CHECK(tp.value(tp.sigmoid(tp.constant_scalar(0)))[0] == doctest::Approx(0.5));
  CHECK(tp.value(tp.tanh_op(tp.constant_scalar(0)))[0] == doctest::Approx(0.0));
  CHECK(tp.value(tp.sigmoid(tp.constant_scalar(-1000)))[0] == doctest::Approx(0.0));

  auto a = tp.constant({3}, {1, 2, 3});
  auto s = tp.constant_scalar(2);
  CHECK(tp.value(tp.mul(a, s)) == std::vector<double>{2, 4, 6});
  CHECK(tp.value(tp.add(s, a)) == std::vector<double>{3, 4, 5});

  auto b = tp.constant({2}, {1, 1});
  CHECK_THROWS_AS(tp.add(a, b), ShapeError);
}

TEST_CASE("tanh gradient at 0.3 vs finite difference") {
  std::vector<double> x_data = {0.3};
  auto loss_fn = [&] {
    Tp tp;
    return tp.value(tp.tanh_op(tp.constant({1}, x_data)))[0];
  };
  Tp tp;
  auto x = tp.leaf({1}, x_data);
  auto y = tp.tanh_op(x);
  tp.backward(y);
  const double h = 1e-6;
  x_data[0] = 0.3 + h;
  const double up = loss_fn();
  x_data[0] = 0.3 - h;
  const double dn = loss_fn();
  const double fd = (up - dn) / (2 * h);
  CHECK(std::fabs(tp.at(x).grad[0] - fd) / std::fabs(fd) <= 1e-6);
}

// ---------------------------------------------------------------------------
// concat / slice
// ---------------------------------------------------------------------------

TEST_CASE("concat values") {
  Tp tp;
  auto a = tp.constant({2}, {4, 5});
  Tp::Id one[1] = {a};
  CHECK(tp.value(tp.concat(one, 0)) == std::vector<double>{4, 5});

  auto b = tp.constant({2}, {1, 2});
  auto c = tp.constant({1}, {3});
  CHECK(tp.value(tp.concat2(b, c, 0)) == std::vector<double>{1, 2, 3});

  auto m = tp.constant({2, 2}, {1, 2, 3, 4});
  auto n = tp.constant({2, 1}, {9, 9});
  CHECK(tp.value(tp.concat2(m, n, 1)) == std::vector<double>{1, 2, 9, 3, 4, 9});

  auto bad = tp.constant({3, 1}, {0, 0, 0});
  CHECK_THROWS_AS(tp.concat2(m, bad, 1), ShapeError);
}

TEST_CASE("concat and slice backward match finite differences") {
  Rng rng(17);
  std::vector<double> a_data = random_vec(rng, 6);
  std::vector<double> b_data = random_vec(rng, 4);
  std::vector<double> w_data = random_vec(rng, 10);
  auto loss_fn = [&] {
    Tp tp;
    auto y = tp.concat2(tp.constant({2, 3}, a_data), tp.constant({2, 2}, b_data), 1);
    auto s = tp.slice_cols(y, 1, 5);
    return tp.value(tp.sum_all(tp.mul(s, tp.constant({2, 4}, std::vector<double>(w_data.begin(), w_data.begin() + 8)))))[0];
  };
  Tp tp;
  auto a = tp.leaf({2, 3}, a_data);
  auto b = tp.leaf({2, 2}, b_data);
  auto y = tp.concat2(a, b, 1);
  auto s = tp.slice_cols(y, 1, 5);
  auto loss = tp.sum_all(tp.mul(s, tp.constant({2, 4}, std::vector<double>(w_data.begin(), w_data.begin() + 8))));
  tp.backward(loss);
  auto rep = testing::fd_check({{"a", &a_data}, {"b", &b_data}},
                               {&tp.at(a).grad, &tp.at(b).grad}, loss_fn);
  CHECK(rep.max_rel_err <= 1e-4);
}

// ---------------------------------------------------------------------------
// embedding lookup
// ---------------------------------------------------------------------------

TEST_CASE("embedding lookup gather and scatter-add") {
  Tp tp;
  std::vector<double> table = {0, 0, 1, 2, 3, 4, 5, 6};  // 4 rows x 2
  auto t = tp.leaf({4, 2}, table);
  auto z = tp.embedding_lookup(t, {0});
  CHECK(tp.value(z) == std::vector<double>{0, 0});

  auto rows = tp.embedding_lookup(t, {1, 3});
  CHECK(tp.value(rows) == std::vector<double>{1, 2, 5, 6});

  auto dup = tp.embedding_lookup(t, {2, 2});
  auto loss = tp.sum_all(dup);
  tp.backward(loss);
  // duplicate ids accumulate twice into row 2
  CHECK(tp.at(t).grad[4] == doctest::Approx(2.0));
  CHECK(tp.at(t).grad[5] == doctest::Approx(2.0));
  CHECK(tp.at(t).grad[0] == doctest::Approx(0.0));

  CHECK_THROWS_WITH_AS(tp.embedding_lookup(t, {4}), doctest::Contains("4"), IndexError);
}

// ---------------------------------------------------------------------------
// cross entropy
// ---------------------------------------------------------------------------

TEST_CASE("cross entropy masked rows and values") {
  Tp tp;
  auto one_hot = tp.constant({1, 3}, {0, 1, 0});
  CHECK(tp.value(tp.cross_entropy_masked(one_hot, {1}))[0] == doctest::Approx(0.0));

  auto uniform = tp.constant({1, 4}, {0.25, 0.25, 0.25, 0.25});
  CHECK(tp.value(tp.cross_entropy_masked(uniform, {2}))[0] ==
        doctest::Approx(1.3862943611198906).epsilon(1e-12));

  auto two = tp.leaf({2, 2}, {0.8, 0.2, 0.5, 0.5});
  auto loss = tp.cross_entropy_masked(two, {0, Tp::kMaskedTarget});
  CHECK(tp.value(loss)[0] == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
  tp.backward(loss);
  // masked row contributes zero gradient
  CHECK(tp.at(two).grad[2] == 0.0);
  CHECK(tp.at(two).grad[3] == 0.0);
  CHECK(tp.at(two).grad[0] != 0.0);

  Tp tp2;
  auto all_masked = tp2.leaf({2, 2}, {0.5, 0.5, 0.5, 0.5});
  auto z = tp2.cross_entropy_masked(all_masked, {Tp::kMaskedTarget, Tp::kMaskedTarget});
  CHECK(tp2.value(z)[0] == 0.0);
  tp2.backward(z);
  for (double g : tp2.at(all_masked).grad) CHECK(g == 0.0);
}

// ---------------------------------------------------------------------------
// gradient clipping
// ---------------------------------------------------------------------------

TEST_CASE("clip_global_norm boundary, scaling, idempotence") {
  ParamStore<double> ps;
  auto& p = ps.add("w", {2}, {0, 0});
  p.grad = {3, 4};
  CHECK(clip_global_norm(ps, 5.0) == doctest::Approx(5.0));
  CHECK(p.grad == std::vector<double>{3, 4});  // norm exactly at the limit

  p.grad = {6, 8};
  CHECK(clip_global_norm(ps, 5.0) == doctest::Approx(10.0));
  CHECK(p.grad[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(p.grad[1] == doctest::Approx(4.0).epsilon(1e-12));

  ParamStore<double> ps2;
  auto& a = ps2.add("a", {2}, {0, 0});
  auto& b = ps2.add("b", {2}, {0, 0});
  a.grad = {6, 0};
  b.grad = {0, 8};
  clip_global_norm(ps2, 5.0);
  CHECK(a.grad[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(b.grad[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(global_grad_norm(ps2) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("clip_global_norm is idempotent on random gradients") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    ParamStore<double> ps;
    auto& p = ps.add("w", {16}, std::vector<double>(16, 0.0));
    p.grad = random_vec(rng, 16, 10.0);
    clip_global_norm(ps, 5.0);
    const auto once = p.grad;
    clip_global_norm(ps, 5.0);
    for (std::size_t i = 0; i < once.size(); ++i)
      CHECK(std::fabs(p.grad[i] - once[i]) <= 1e-12 * std::max(1.0, std::fabs(once[i])));
  }
}

// ---------------------------------------------------------------------------
// adam
// ---------------------------------------------------------------------------

TEST_CASE("adam zero gradient leaves fresh parameters unchanged") {
  ParamStore<double> ps;
  auto& p = ps.add("w", {3}, {1.5, -2.0, 0.25});
  adam_step(p, 0.01);
  CHECK(p.value == std::vector<double>{1.5, -2.0, 0.25});
}

TEST_CASE("adam constant gradient approaches lr-sized steps") {
  ParamStore<double> ps;
  auto& p = ps.add("w", {1}, {0.0});
  const double lr = 0.01;
  double prev = 0;
  for (int i = 0; i < 500; ++i) {
    prev = p.value[0];
    p.grad = {2.5};
    adam_step(p, lr);
  }
  CHECK(std::fabs(prev - p.value[0]) == doctest::Approx(lr).epsilon(1e-4));
}

TEST_CASE("adam single step equals the hand formula") {
  ParamStore<double> ps;
  auto& p = ps.add("w", {1}, {1.0});
  p.grad = {0.5};
  adam_step(p, 0.01);
  // independent evaluation of the bias-corrected update
  const double m = 0.1 * 0.5, v = 0.001 * 0.25;
  const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
  const double expect = 1.0 - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(std::fabs(p.value[0] - expect) <= 1e-12);
}

TEST_CASE("adam with lr zero is bitwise identity") {
  Rng rng(31);
  ParamStore<double> ps;
  auto& p = ps.add("w", {8}, random_vec(rng, 8));
  const auto before = p.value;
  p.grad = random_vec(rng, 8);
  adam_step(p, 0.0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(p.value[i] == before[i]);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

TEST_CASE("backward basics") {
  Tp tp;
  auto x = tp.leaf({4}, {1, 2, 3, 4});
  tp.backward(tp.sum_all(x));
  CHECK(tp.at(x).grad == std::vector<double>{1, 1, 1, 1});

  Tp tp2;
  auto z = tp2.leaf({1}, {3});
  auto loss = tp2.mul(z, z);
  tp2.backward(loss);
  CHECK(tp2.at(z).grad[0] == doctest::Approx(6.0));

  Tp tp3;
  auto v = tp3.leaf({2}, {1, 2});
  CHECK_THROWS_AS(tp3.backward(v), ShapeError);
}

TEST_CASE("backward leaves unreachable tensors without gradient") {
  Tp tp;
  auto x = tp.leaf({2}, {1, 2});
  auto orphan = tp.leaf({2}, {5, 5});
  auto y = tp.sum_all(x);
  tp.backward(y);
  CHECK(tp.at(orphan).grad.empty());
  (void)orphan;
}

TEST_CASE("backward is deterministic across runs") {
  Rng rng(41);
  const auto a_data = random_vec(rng, 12);
  const auto b_data = random_vec(rng, 8);
  auto run = [&] {
    Tp tp;
    auto a = tp.leaf({3, 4}, a_data);
    auto b = tp.leaf({4, 2}, b_data);
    auto y = tp.tanh_op(tp.matmul(a, b));
    tp.backward(tp.sum_all(y));
    return std::make_pair(tp.at(a).grad, tp.at(b).grad);
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

// ---------------------------------------------------------------------------
// randomized gradient sweep over composite graphs
// ---------------------------------------------------------------------------

TEST_CASE("composite graph gradients match finite differences") {
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a_data = random_vec(rng, 8);   // [2x4]
    std::vector<double> b_data = random_vec(rng, 12);  // [4x3]
    std::vector<double> v_data = random_vec(rng, 3);   // bias
    std::vector<double> s_data = random_vec(rng, 2);   // row scales

    auto build = [&](Tape<double>& tp, bool leaves) {
      auto a = leaves ? tp.leaf({2, 4}, a_data) : tp.constant({2, 4}, a_data);
      auto b = leaves ? tp.leaf({4, 3}, b_data) : tp.constant({4, 3}, b_data);
      auto v = leaves ? tp.leaf({3}, v_data) : tp.constant({3}, v_data);
      auto s = leaves ? tp.leaf({2}, s_data) : tp.constant({2}, s_data);
      auto h = tp.tanh_op(tp.add_rowvec(tp.matmul(a, b), v));
      auto sm = tp.softmax_rows(h);
      auto scaled = tp.rowwise_scale(sm, tp.sigmoid(s));
      auto loss = tp.cross_entropy_masked(tp.softmax_rows(scaled), {2, 0});
      return std::make_tuple(a, b, v, s, loss);
    };

    auto loss_fn = [&] {
      Tape<double> tp;
      auto [a, b, v, s, loss] = build(tp, false);
      return tp.value(loss)[0];
    };

    Tape<double> tp;
    auto [a, b, v, s, loss] = build(tp, true);
    tp.backward(loss);
    auto rep = testing::fd_check(
        {{"a", &a_data}, {"b", &b_data}, {"v", &v_data}, {"s", &s_data}},
        {&tp.at(a).grad, &tp.at(b).grad, &tp.at(v).grad, &tp.at(s).grad}, loss_fn);
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("attention ops match finite differences") {
  Rng rng(59);
  const std::size_t B = 2, K = 4, L = 3;
  std::vector<std::vector<double>> slot_data(L);
  for (auto& s : slot_data) s = random_vec(rng, B * K);
  std::vector<double> q_data = random_vec(rng, B * K);
  std::vector<double> v_data = random_vec(rng, K);
  std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 1};  // lane 0 misses slot 2

  auto build = [&](Tape<double>& tp, bool leaves) {
    std::vector<Tp::Id> slots;
    for (auto& s : slot_data)
      slots.push_back(leaves ? tp.leaf({B, K}, s) : tp.constant({B, K}, s));
    auto q = leaves ? tp.leaf({B, K}, q_data) : tp.constant({B, K}, q_data);
    auto v = leaves ? tp.leaf({K}, v_data) : tp.constant({K}, v_data);
    auto logits = tp.attn_logits(slots, q, v);
    auto alpha = tp.masked_softmax_rows(logits, mask);
    auto ctx = tp.attn_mix(slots, alpha);
    auto loss = tp.sum_all(tp.tanh_op(ctx));
    return std::make_tuple(slots, q, v, loss);
  };

  auto loss_fn = [&] {
    Tape<double> tp;
    auto [slots, q, v, loss] = build(tp, false);
    return tp.value(loss)[0];
  };

  Tape<double> tp;
  auto [slots, q, v, loss] = build(tp, true);
  tp.backward(loss);

  std::vector<std::pair<std::string, std::vector<double>*>> values = {
      {"slot0", &slot_data[0]}, {"slot1", &slot_data[1]}, {"slot2", &slot_data[2]},
      {"q", &q_data},           {"v", &v_data}};
  std::vector<const std::vector<double>*> grads = {
      &tp.at(slots[0]).grad, &tp.at(slots[1]).grad, &tp.at(slots[2]).grad,
      &tp.at(q).grad,        &tp.at(v).grad};
  auto rep = testing::fd_check(values, grads, loss_fn);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("attention oracle: context equals loop-computed weighted sum") {
  Rng rng(61);
  const std::size_t B = 2, K = 4, L = 3;
  std::vector<std::vector<double>> slot_data(L);
  for (auto& s : slot_data) s = random_vec(rng, B * K);
  std::vector<double> wm = random_vec(rng, K * K), wh = random_vec(rng, K * K);
  std::vector<double> h_data = random_vec(rng, B * K), v_data = random_vec(rng, K);

  Tape<double> tp;
  std::vector<Tp::Id> cs;
  auto wm_t = tp.constant({K, K}, wm);
  auto wh_t = tp.constant({K, K}, wh);
  auto h = tp.constant({B, K}, h_data);
  auto v = tp.constant({K}, v_data);
  std::vector<Tp::Id> slots;
  for (auto& s : slot_data) {
    auto m = tp.constant({B, K}, s);
    slots.push_back(m);
    cs.push_back(tp.matmul(m, wm_t));
  }
  auto q = tp.matmul(h, wh_t);
  auto logits = tp.attn_logits(cs, q, v);
  auto alpha = tp.softmax_rows(logits);
  auto ctx = tp.attn_mix(slots, alpha);

  // independent loop evaluation of v' tanh(Wm h_j + Wh h) and the mix
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> scores(L);
    for (std::size_t j = 0; j < L; ++j) {
      double acc = 0;
      for (std::size_t r = 0; r < K; ++r) {
        double mj = 0, qh = 0;
        for (std::size_t c = 0; c < K; ++c) {
          mj += slot_data[j][b * K + c] * wm[c * K + r];
          qh += h_data[b * K + c] * wh[c * K + r];
        }
        acc += v_data[r] * std::tanh(mj + qh);
      }
      scores[j] = acc;
    }
    double mx = *std::max_element(scores.begin(), scores.end()), sum = 0;
    std::vector<double> a(L);
    for (std::size_t j = 0; j < L; ++j) { a[j] = std::exp(scores[j] - mx); sum += a[j]; }
    for (std::size_t j = 0; j < L; ++j) a[j] /= sum;
    for (std::size_t c = 0; c < K; ++c) {
      double want = 0;
      for (std::size_t j = 0; j < L; ++j) want += a[j] * slot_data[j][b * K + c];
      CHECK(std::fabs(tp.value(ctx)[b * K + c] - want) <= 1e-10);
    }
    for (std::size_t j = 0; j < L; ++j)
      CHECK(std::fabs(tp.value(alpha)[b * L + j] - a[j]) <= 1e-10);
  }
}
