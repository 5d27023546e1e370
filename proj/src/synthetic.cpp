#include "ptrmix/synthetic.hpp"

#include <algorithm>
#include <deque>
#include <string>

namespace ptrmix {

std::vector<AstNode> random_tree(Rng& rng, std::size_t nodes, std::size_t base_types,
                                 double value_prob) {
  std::vector<AstNode> out(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    out[i].type_name = "T" + std::to_string(rng.uniform_int(base_types));
  for (std::size_t i = 1; i < nodes; ++i)
    out[rng.uniform_int(i)].children.push_back(i);
  for (auto& node : out)
    if (node.children.empty() && rng.bernoulli(value_prob))
      node.value = "v" + std::to_string(rng.uniform_int(1000));

  // Relabel nodes into depth-first pre-order, the index convention the
  // benchmark corpora use (node ids increase along the traversal).
  std::vector<std::size_t> order;
  order.reserve(nodes);
  std::vector<std::size_t> stack = {0};
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (std::size_t k = out[cur].children.size(); k-- > 0;)
      stack.push_back(out[cur].children[k]);
  }
  std::vector<std::size_t> new_of(nodes);
  for (std::size_t i = 0; i < nodes; ++i) new_of[order[i]] = i;
  std::vector<AstNode> relabeled(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    AstNode& dst = relabeled[new_of[i]];
    dst.type_name = std::move(out[i].type_name);
    dst.value = std::move(out[i].value);
    dst.children.reserve(out[i].children.size());
    for (std::size_t c : out[i].children) dst.children.push_back(new_of[c]);
  }
  return relabeled;
}

Corpus make_synthetic_corpus(const SyntheticConfig& config, SyntheticReport* report) {
  Rng rng(config.seed);
  CorpusBuilder builder;
  SyntheticReport stats;

  // Zipf weights over the shared pool, sampled by cumulative-sum bisection.
  std::vector<double> cumulative(config.value_pool);
  double acc = 0;
  for (std::size_t r = 0; r < config.value_pool; ++r) {
    acc += 1.0 / static_cast<double>(r + 1);
    cumulative[r] = acc;
  }

  // Identifier burst chain. Consecutive identifier leaves tend to stay in the
  // rare regime together — source files reuse one variable several times in a
  // small region before moving on — so rareness persists with p_keep and
  // starts with p_start, solved so the stationary rare share of identifier
  // leaves equals oov_fraction.
  const double r = std::min(config.oov_fraction, 0.999);
  const double p_keep = r <= 0 ? 0.0 : std::clamp(0.6 + r, 0.0, 0.95);
  const double p_start = std::min(0.95, r * (1.0 - p_keep) / (1.0 - r));

  const std::size_t lo = std::max<std::size_t>(1, config.avg_len * 7 / 10);
  const std::size_t hi = std::max(lo, config.avg_len * 13 / 10);

  for (std::size_t p = 0; p < config.programs; ++p) {
    const std::size_t target_nodes = lo + rng.uniform_int(hi - lo + 1);

    // Statement grammar: Module holds a run of Assign(Id, Call(Id, Id) | Lit)
    // statements, so the token stream has code-like shape — identifier slots
    // sit at predictable offsets after Assign and Call markers.
    std::vector<AstNode> tree(1);
    tree[0].type_name = "Module";
    while (tree.size() < target_nodes) {
      const std::size_t stmt = tree.size();
      tree.emplace_back(AstNode{"Assign", std::nullopt, {}});
      tree[0].children.push_back(stmt);
      tree[stmt].children.push_back(tree.size());
      tree.emplace_back(AstNode{"Id", std::nullopt, {}});
      tree[stmt].children.push_back(tree.size());
      if (rng.bernoulli(0.6)) {
        const std::size_t call = tree.size();
        tree.emplace_back(AstNode{"Call", std::nullopt, {}});
        tree[call].children.push_back(tree.size());
        tree.emplace_back(AstNode{"Id", std::nullopt, {}});
        tree[call].children.push_back(tree.size());
        tree.emplace_back(AstNode{"Id", std::nullopt, {}});
      } else {
        const std::size_t kind = config.base_types ? rng.uniform_int(config.base_types) : 0;
        tree.emplace_back(AstNode{"Lit" + std::to_string(kind), std::nullopt, {}});
      }
    }
    ProgramSeq seq = flatten(tree, p);

    // Walk the flattened order assigning leaf values. `recent` remembers
    // rare-pool emissions; when node i is later the prediction target, its
    // copyable window is flat positions [i - window - 1, i - 2].
    std::deque<std::pair<std::size_t, std::string>> recent;
    std::size_t next_fresh = 0;
    bool prev_id_rare = false;
    for (std::size_t i = 0; i < seq.nodes.size(); ++i) {
      FlatNode& node = seq.nodes[i];
      if (node.has_child) continue;
      if (node.base_type != "Id") {
        const double u = rng.uniform() * cumulative.back();
        const std::size_t rank = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        node.value = "val" + std::to_string(std::min(rank, config.value_pool - 1));
        continue;
      }
      const bool rare = rng.bernoulli(prev_id_rare ? p_keep : p_start);
      prev_id_rare = rare;
      if (rare) {
        const std::size_t floor_pos = i >= config.window + 1 ? i - config.window - 1 : 0;
        while (!recent.empty() && recent.front().first < floor_pos) recent.pop_front();
        std::size_t eligible = recent.size();
        while (eligible > 0 && recent[eligible - 1].first + 2 > i) --eligible;
        if (eligible > 0 && rng.bernoulli(config.repeat_prob)) {
          // Repeat the newest window occurrence: the burst keeps hammering the
          // same identifier, the cue a copy mechanism can learn to exploit.
          node.value = recent[eligible - 1].second;
          ++stats.window_repeats;
        } else {
          node.value = "q" + std::to_string(p) + "_" +
                       std::to_string(config.oov_pool ? next_fresh % config.oov_pool : next_fresh);
          ++next_fresh;
        }
        recent.emplace_back(i, *node.value);
        ++stats.oov_emissions;
      } else {
        const double u = rng.uniform() * cumulative.back();
        const std::size_t rank = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        node.value = "val" + std::to_string(std::min(rank, config.value_pool - 1));
      }
    }
    stats.node_count += seq.nodes.size();
    builder.add(seq);
  }
  if (report) *report = stats;
  return builder.finish();
}

}  // namespace ptrmix
