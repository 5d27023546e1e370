#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>

#include "ptrmix/rng.hpp"
#include "ptrmix/synthetic.hpp"
#include "ptrmix/vocab.hpp"

using namespace ptrmix;

namespace {

Corpus corpus_of_values(const std::vector<std::vector<std::string>>& programs) {
  CorpusBuilder builder;
  for (std::size_t p = 0; p < programs.size(); ++p) {
    // a root holding one leaf per value keeps the tree structure trivial
    std::vector<AstNode> tree(programs[p].size() + 1);
    tree[0].type_name = "root";
    for (std::size_t i = 0; i < programs[p].size(); ++i) {
      tree[0].children.push_back(i + 1);
      tree[i + 1] = {"leaf", programs[p][i], {}};
    }
    builder.add(flatten(tree, p));
  }
  return builder.finish();
}

// Independent window scanner: collect every match, then take the smallest
// offset; precedence decided from explicit membership checks.
TrainingTarget brute_force_label(const std::optional<std::string>& target,
                                 const std::vector<std::optional<std::string>>& window,
                                 const Vocabulary& vocab) {
  if (!target) return TrainingTarget::vocab_id(vocab.empty_id());
  if (vocab.id_of(*target)) return TrainingTarget::vocab_id(*vocab.id_of(*target));
  std::vector<std::uint32_t> offsets;
  for (std::size_t i = 0; i < window.size(); ++i)
    if (window[i] && *window[i] == *target)
      offsets.push_back(static_cast<std::uint32_t>(window.size() - i));
  if (offsets.empty()) return TrainingTarget::masked();
  return TrainingTarget::window_pos(*std::min_element(offsets.begin(), offsets.end()));
}

}  // namespace

TEST_CASE("build_vocab keeps the K most frequent values") {
  Corpus corpus = corpus_of_values({{"a", "a", "a", "b", "b", "c"}});
  Vocabulary vocab = build_vocab(corpus, 2);
  REQUIRE(vocab.words.size() == 2);
  CHECK(vocab.words[0] == "a");
  CHECK(vocab.words[1] == "b");
  CHECK(vocab.frequencies[0] == 3);
  CHECK(vocab.id_of("a") == 0);
  CHECK_FALSE(vocab.id_of("c").has_value());
  CHECK(vocab.unk_id() == 2);
  CHECK(vocab.eof_id() == 3);
  CHECK(vocab.empty_id() == 4);
  CHECK(vocab.size() == 5);
}

TEST_CASE("build_vocab breaks frequency ties lexicographically") {
  Corpus corpus = corpus_of_values({{"b", "a", "b", "a"}});
  Vocabulary vocab = build_vocab(corpus, 1);
  REQUIRE(vocab.words.size() == 1);
  CHECK(vocab.words[0] == "a");
}

TEST_CASE("build_vocab with K beyond the distinct count keeps everything") {
  Corpus corpus = corpus_of_values({{"x", "y"}});
  Vocabulary vocab = build_vocab(corpus, 100);
  CHECK(vocab.words.size() == 2);
  CHECK(vocab.configured_k == 100);
}

TEST_CASE("build_vocab counts only the training split") {
  Corpus corpus = corpus_of_values({{"a", "a"}, {"zzz", "zzz", "zzz"}});
  Vocabulary vocab = build_vocab(corpus, 1, 1);
  REQUIRE(vocab.words.size() == 1);
  CHECK(vocab.words[0] == "a");
}

TEST_CASE("build_vocab is deterministic") {
  Rng rng(9);
  SyntheticConfig cfg;
  cfg.programs = 25;
  cfg.avg_len = 80;
  cfg.seed = 4;
  Corpus corpus = make_synthetic_corpus(cfg);
  Vocabulary a = build_vocab(corpus, 30);
  Vocabulary b = build_vocab(corpus, 30);
  CHECK(a.words == b.words);
  CHECK(a.frequencies == b.frequencies);
}

TEST_CASE("label_target documented cases") {
  Corpus corpus = corpus_of_values({{"v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7"}});
  Vocabulary vocab = build_vocab(corpus, 8);

  using Opt = std::optional<std::string>;
  std::vector<Opt> window = {Opt("x"), Opt("y"), Opt("x")};
  // OoV target matching twice: offset of the later occurrence
  CHECK(label_target(Opt("x"), window, vocab) == TrainingTarget::window_pos(1));
  CHECK(label_target(Opt("y"), window, vocab) == TrainingTarget::window_pos(2));
  // in-vocab value present in the window stays a vocabulary id
  CHECK(label_target(Opt("v7"), {}, vocab) == TrainingTarget::vocab_id(7));
  std::vector<Opt> with_v7 = {Opt("v7")};
  CHECK(label_target(Opt("v7"), with_v7, vocab) == TrainingTarget::vocab_id(7));
  // OoV, empty window
  CHECK(label_target(Opt("nope"), {}, vocab) == TrainingTarget::masked());
  // EMPTY target is the EMPTY special, never a pointer
  std::vector<Opt> empties = {Opt(), Opt()};
  CHECK(label_target(Opt(), empties, vocab) == TrainingTarget::vocab_id(vocab.empty_id()));
  // EMPTY window entries never match anything
  std::vector<Opt> mixed = {Opt(), Opt("q"), Opt()};
  CHECK(label_target(Opt("q"), mixed, vocab) == TrainingTarget::window_pos(2));
}

TEST_CASE("label_target agrees with the brute-force scanner") {
  Rng rng(1234);
  std::vector<std::string> pool;
  for (int i = 0; i < 30; ++i) pool.push_back("s" + std::to_string(i));

  for (int trial = 0; trial < 200; ++trial) {
    // a fresh vocabulary of 10 random pool entries per trial
    Vocabulary vocab;
    vocab.configured_k = 10;
    std::set<std::string> chosen;
    while (chosen.size() < 10) chosen.insert(pool[rng.uniform_int(pool.size())]);
    for (const auto& w : chosen) {
      vocab.words.push_back(w);
      vocab.frequencies.push_back(1);
    }
    vocab.rebuild_index();

    for (int c = 0; c < 150; ++c) {
      std::vector<std::optional<std::string>> window(rng.uniform_int(9));
      for (auto& w : window)
        if (!rng.bernoulli(0.2)) w = pool[rng.uniform_int(pool.size())];
      std::optional<std::string> target;
      const double pick = rng.uniform();
      if (pick < 0.1) {
        // EMPTY target
      } else if (pick < 0.55 && !window.empty()) {
        target = window[rng.uniform_int(window.size())];  // may itself be EMPTY
      } else {
        target = pool[rng.uniform_int(pool.size())];
      }
      CHECK(label_target(target, window, vocab) == brute_force_label(target, window, vocab));
    }
  }
}

TEST_CASE("ref-based labeling matches the string path across a corpus") {
  SyntheticConfig cfg;
  cfg.programs = 15;
  cfg.avg_len = 120;
  cfg.value_pool = 30;
  cfg.oov_fraction = 0.35;
  cfg.seed = 21;
  Corpus corpus = make_synthetic_corpus(cfg);
  Vocabulary vocab = build_vocab(corpus, 25);
  const auto ref_ids = map_refs_to_vocab(corpus, vocab);
  const std::size_t L = 9;

  for (const auto& prog : corpus.programs) {
    const auto& toks = prog.tokens;
    for (std::size_t p = 0; p < toks.size(); ++p) {
      std::vector<std::uint32_t> ref_window;
      std::vector<std::optional<std::string>> str_window;
      const std::size_t lo = p >= L + 1 ? p - L - 1 : 0;
      for (std::size_t q = lo; q + 2 <= p; ++q) {
        ref_window.push_back(toks[q].value_ref);
        auto sv = corpus.value_of(toks[q]);
        str_window.push_back(sv ? std::optional<std::string>(std::string(*sv)) : std::nullopt);
      }
      auto sv = corpus.value_of(toks[p]);
      std::optional<std::string> target =
          sv ? std::optional<std::string>(std::string(*sv)) : std::nullopt;
      CHECK(label_target_ref(toks[p].value_ref, ref_window, ref_ids, vocab) ==
            label_target(target, str_window, vocab));
    }
  }
  CHECK(label_target_ref(kEofValueRef, {}, ref_ids, vocab) ==
        TrainingTarget::vocab_id(vocab.eof_id()));
}

TEST_CASE("compute_stats on a fully covered corpus is zero") {
  Corpus corpus = corpus_of_values({{"a", "b", "a"}});
  Vocabulary vocab = build_vocab(corpus, 10);
  CorpusStats stats = compute_stats(corpus, vocab, 50);
  CHECK(stats.node_count == 4);  // root + three leaves
  CHECK(stats.oov_count == 0);
  CHECK(stats.local_count == 0);
  CHECK(stats.oov_rate() == 0.0);
}

TEST_CASE("compute_stats window respects the memory alignment") {
  // positions:       0       1    2    3    4
  Corpus corpus = corpus_of_values({{"q", "z", "q", "q"}});
  // vocabulary holds only "z": "q" is OoV everywhere
  Vocabulary vocab;
  vocab.configured_k = 1;
  vocab.words = {"z"};
  vocab.frequencies = {1};
  vocab.rebuild_index();

  // window of position p covers [p-L-1, p-2]; with L=50 that is [0, p-2].
  // p=1 ("q"): window empty → not local. p=3 ("q"): window {root,"q"} → local.
  // p=4 ("q"): window {root,"q","z"} → local (position 3 is excluded, but 1 matches).
  CorpusStats stats = compute_stats(corpus, vocab, 50);
  CHECK(stats.oov_count == 3);
  CHECK(stats.local_count == 2);

  // with L=0 the window [p-1, p-2] is empty: nothing is ever local
  CorpusStats tight = compute_stats(corpus, vocab, 0);
  CHECK(tight.local_count == 0);

  // L=1: p=3 sees exactly position 1 ("q") → local; p=4 sees position 2 ("z") → not
  CorpusStats one = compute_stats(corpus, vocab, 1);
  CHECK(one.local_count == 1);
}

TEST_CASE("localness never exceeds the OoV rate and K growth never hurts") {
  SyntheticConfig cfg;
  cfg.programs = 40;
  cfg.avg_len = 100;
  cfg.value_pool = 60;
  cfg.seed = 3;
  Corpus corpus = make_synthetic_corpus(cfg);
  double prev_oov = 1.0;
  for (std::size_t k : {5, 20, 60, 200}) {
    Vocabulary vocab = build_vocab(corpus, k);
    CorpusStats stats = compute_stats(corpus, vocab, 50);
    CHECK(stats.localness() <= stats.oov_rate());
    CHECK(stats.oov_rate() <= prev_oov + 1e-12);
    prev_oov = stats.oov_rate();
  }
}

TEST_CASE("vocabulary save and load round-trip") {
  Corpus corpus = corpus_of_values({{"alpha", "alpha", "beta"}});
  Vocabulary vocab = build_vocab(corpus, 5);
  const std::string path = "/tmp/ptrmix_test_vocab.json";
  save_vocab(vocab, path);
  Vocabulary loaded = load_vocab(path);
  CHECK(loaded.words == vocab.words);
  CHECK(loaded.frequencies == vocab.frequencies);
  CHECK(loaded.configured_k == vocab.configured_k);
  CHECK(loaded.id_of("beta") == vocab.id_of("beta"));
  std::remove(path.c_str());
}
