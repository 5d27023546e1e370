#pragma once

// Synthetic corpus generator: grammar-shaped programs (a run of assignment
// statements over identifier and literal leaves) whose identifier values mix a
// shared Zipf-distributed pool with per-program out-of-vocabulary names.
// Rare names arrive in bursts and repeat the newest window occurrence, the
// code-like regime a copy mechanism should exploit: after seeing a rare
// identifier, the next identifier slot most likely repeats it. Also exports
// the unstructured random-tree source used by round-trip tests.

#include <cstdint>
#include <vector>

#include "ptrmix/ast.hpp"
#include "ptrmix/corpus.hpp"
#include "ptrmix/rng.hpp"

namespace ptrmix {

struct SyntheticConfig {
  std::size_t programs = 1000;
  std::size_t avg_len = 300;     // node count drawn uniformly in [0.7, 1.3] × avg_len
  std::size_t value_pool = 200;  // shared value pool, sampled with Zipf weights
  std::size_t oov_pool = 64;     // distinct per-program rare identifiers
  double oov_fraction = 0.25;    // stationary rare share of identifier leaves
  double repeat_prob = 0.8;      // chance a rare draw copies the newest window occurrence
  std::size_t window = 50;       // window length the repeat process respects
  std::size_t base_types = 8;    // distinct literal-leaf flavors
  std::uint64_t seed = 1;
};

// Bookkeeping from generation, for cross-checking pipeline statistics: the
// generator's own count of rare-pool emissions and of emissions that were
// window copies, as fractions of all nodes.
struct SyntheticReport {
  std::size_t node_count = 0;
  std::size_t oov_emissions = 0;
  std::size_t window_repeats = 0;

  double intended_oov_rate() const {
    return node_count ? static_cast<double>(oov_emissions) / static_cast<double>(node_count) : 0.0;
  }
  double intended_localness() const {
    return node_count ? static_cast<double>(window_repeats) / static_cast<double>(node_count) : 0.0;
  }
};

Corpus make_synthetic_corpus(const SyntheticConfig& config, SyntheticReport* report = nullptr);

// Random tree with exactly `nodes` nodes: node i attaches to a uniformly
// random earlier node, so parents always precede children. Leaves receive
// values "v<k>" with probability value_prob; interior nodes stay valueless.
std::vector<AstNode> random_tree(Rng& rng, std::size_t nodes, std::size_t base_types = 8,
                                 double value_prob = 1.0);

}  // namespace ptrmix
