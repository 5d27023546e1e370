// Command-line pipeline: synth | preprocess | build-vocab | stats | train |
// eval | ablate | predict. Every artifact-producing command writes its
// outputs under --out together with a manifest recording resolved flags and
// input/output digests. Relative input paths also resolve against
// $PTRMIX_DATA_DIR when they do not exist locally.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ptrmix/batch.hpp"
#include "ptrmix/checkpoint.hpp"
#include "ptrmix/manifest.hpp"
#include "ptrmix/synthetic.hpp"
#include "ptrmix/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ptrmix;

namespace {

std::string resolve_input(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* base = std::getenv("PTRMIX_DATA_DIR"); base && fs::path(path).is_relative()) {
    const fs::path joined = fs::path(base) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

// Flags shared by train / eval / ablate / predict, mirroring the model and
// optimizer configuration.
struct ModelFlags {
  std::string task = "value";
  std::string mode = "pointer";
  std::size_t vocab_size = 1000;
  std::size_t hidden = 128;
  std::size_t window = 50;
  std::size_t type_dim = 32;
  std::size_t value_dim = 96;
  std::size_t unroll = 50;
  std::size_t batch = 32;
  std::size_t epochs = 3;
  double lr = 0.001;
  double decay = 0.6;
  double clip = 5.0;
  std::uint64_t seed = 1;
  std::string precision = "double";
  bool no_parent_attention = false;
  bool paper_scale = false;

  void add_to(CLI::App* cmd, bool with_mode = true) {
    cmd->add_option("--task", task, "prediction task: type or value")
        ->check(CLI::IsMember({"type", "value"}));
    if (with_mode)
      cmd->add_option("--mode", mode, "model family")
          ->check(CLI::IsMember({"vanilla", "attn", "pointer", "pointer-random"}));
    cmd->add_option("--vocab-size", vocab_size, "value vocabulary size K");
    cmd->add_option("--hidden", hidden, "LSTM state width");
    cmd->add_option("--window", window, "attention/copy window L");
    cmd->add_option("--type-dim", type_dim, "type embedding width");
    cmd->add_option("--value-dim", value_dim, "value embedding width");
    cmd->add_option("--unroll", unroll, "segment length for truncated BPTT");
    cmd->add_option("--batch", batch, "batch lanes");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--decay", decay, "per-epoch learning-rate multiplier");
    cmd->add_option("--clip", clip, "global gradient-norm ceiling");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--precision", precision, "float or double")
        ->check(CLI::IsMember({"float", "double"}));
    cmd->add_flag("--no-parent-attention", no_parent_attention,
                  "drop the parent state from the output stage");
    cmd->add_flag("--paper-scale", paper_scale,
                  "preset: hidden 1500, embeddings 300/1200, K 50000, batch 128, 8 epochs");
  }

  // The preset fills any value the user left untouched.
  void apply_paper_scale(const CLI::App* cmd) {
    if (!paper_scale) return;
    if (!cmd->count("--hidden")) hidden = 1500;
    if (!cmd->count("--type-dim")) type_dim = 300;
    if (!cmd->count("--value-dim")) value_dim = 1200;
    if (!cmd->count("--vocab-size")) vocab_size = 50000;
    if (!cmd->count("--batch")) batch = 128;
    if (!cmd->count("--epochs")) epochs = 8;
    if (!cmd->count("--precision")) precision = "float";
  }

  json resolved() const {
    return {{"task", task},         {"mode", mode},
            {"vocab_size", vocab_size}, {"hidden", hidden},
            {"window", window},     {"type_dim", type_dim},
            {"value_dim", value_dim},   {"unroll", unroll},
            {"batch", batch},       {"epochs", epochs},
            {"lr", lr},             {"decay", decay},
            {"clip", clip},         {"seed", seed},
            {"precision", precision},
            {"parent_attention", !no_parent_attention},
            {"paper_scale", paper_scale}};
  }

  ModelConfig model_config(const Corpus& corpus, const Vocabulary& vocab) const {
    ModelConfig cfg;
    cfg.hidden = hidden;
    cfg.window = window;
    cfg.type_dim = type_dim;
    cfg.value_dim = value_dim;
    cfg.type_vocab = corpus.type_names.size() + 1;  // one row for the EOF padding type
    cfg.value_vocab = vocab.size();
    cfg.mode = *mode_from_name(mode);
    cfg.task = *task_from_name(task);
    cfg.use_parent_attention = !no_parent_attention;
    cfg.validate();
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.lr = lr;
    tc.decay = decay;
    tc.clip = clip;
    tc.epochs = epochs;
    tc.seed = seed;
    return tc;
  }
};

json eval_report_json(const EvalReport& r) {
  return {{"mode", r.mode},
          {"queries", r.queries},
          {"correct", r.correct},
          {"accuracy", r.accuracy()},
          {"oov_queries", r.oov_queries},
          {"oov_correct", r.oov_correct},
          {"oov_accuracy", r.oov_accuracy()},
          {"invocab_queries", r.invocab_queries},
          {"invocab_correct", r.invocab_correct},
          {"invocab_accuracy", r.invocab_accuracy()},
          {"masked_queries", r.masked_queries}};
}

void print_eval(const EvalReport& r) {
  std::printf("%-15s accuracy %6.2f%%  (oov %5.2f%% of %zu, in-vocab %5.2f%% of %zu, %zu queries)\n",
              r.mode.c_str(), 100 * r.accuracy(), 100 * r.oov_accuracy(), r.oov_queries,
              100 * r.invocab_accuracy(), r.invocab_queries, r.queries);
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  SyntheticConfig sc;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticReport rep;
  const Corpus corpus = make_synthetic_corpus(a.sc, &rep);
  const std::string corpus_path = out_path(a.out, "corpus.bin");
  save_corpus(corpus, corpus_path);
  const json report = {{"programs", corpus.programs.size()},
                       {"nodes", rep.node_count},
                       {"augmented_types", corpus.type_names.size()},
                       {"intended_oov_rate", rep.intended_oov_rate()},
                       {"intended_localness", rep.intended_localness()}};
  const std::string report_path = out_path(a.out, "synth_report.json");
  write_json(report, report_path);

  RunManifest m;
  m.command = "synth";
  m.seed = a.sc.seed;
  m.config = {{"programs", a.sc.programs},   {"avg_len", a.sc.avg_len},
              {"value_pool", a.sc.value_pool}, {"oov_pool", a.sc.oov_pool},
              {"oov_fraction", a.sc.oov_fraction}, {"repeat_prob", a.sc.repeat_prob},
              {"window", a.sc.window},       {"base_types", a.sc.base_types},
              {"seed", a.sc.seed}};
  add_artifact(m.outputs, "corpus", corpus_path);
  add_artifact(m.outputs, "report", report_path);
  write_manifest(m, out_path(a.out, "manifest.json"));
  std::printf("synth: %zu programs, %zu nodes -> %s\n", corpus.programs.size(), rep.node_count,
              corpus_path.c_str());
  return 0;
}

// ----------------------------------------------------------- preprocess ----

struct PreprocessArgs {
  std::string in;
  std::string out;
};

int cmd_preprocess(const PreprocessArgs& a) {
  const std::string in_path = resolve_input(a.in);
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot read " + in_path);
  CorpusBuilder builder;
  std::string line;
  std::size_t line_no = 0, programs = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    builder.add(flatten(parse_dataset_line(line, line_no), programs));
    ++programs;
  }
  const Corpus corpus = builder.finish();
  if (programs == 0) std::fprintf(stderr, "warning: %s contains no programs\n", in_path.c_str());

  const std::string corpus_path = out_path(a.out, "corpus.bin");
  save_corpus(corpus, corpus_path);
  const json report = {{"programs", corpus.programs.size()},
                       {"nodes", corpus.total_tokens()},
                       {"augmented_types", corpus.type_names.size()},
                       {"distinct_values", corpus.value_strings.size()}};
  const std::string report_path = out_path(a.out, "preprocess_report.json");
  write_json(report, report_path);

  RunManifest m;
  m.command = "preprocess";
  m.config = {{"in", in_path}};
  add_artifact(m.inputs, "dataset", in_path);
  add_artifact(m.outputs, "corpus", corpus_path);
  add_artifact(m.outputs, "report", report_path);
  write_manifest(m, out_path(a.out, "manifest.json"));
  std::printf("preprocess: %zu programs, %zu nodes, %zu augmented types -> %s\n",
              corpus.programs.size(), corpus.total_tokens(), corpus.type_names.size(),
              corpus_path.c_str());
  return 0;
}

// ----------------------------------------------------------- build-vocab ----

struct BuildVocabArgs {
  std::string corpus;
  std::size_t k = 1000;
  std::size_t train_programs = static_cast<std::size_t>(-1);
  std::string out;
};

int cmd_build_vocab(const BuildVocabArgs& a) {
  const std::string corpus_path = resolve_input(a.corpus);
  const Corpus corpus = load_corpus(corpus_path);
  const Vocabulary vocab = build_vocab(corpus, a.k, a.train_programs);
  const std::string vocab_path = out_path(a.out, "vocab.json");
  save_vocab(vocab, vocab_path);

  RunManifest m;
  m.command = "build-vocab";
  m.config = {{"corpus", corpus_path},
              {"k", a.k},
              {"train_programs",
               a.train_programs == static_cast<std::size_t>(-1) ? corpus.programs.size()
                                                                : a.train_programs}};
  add_artifact(m.inputs, "corpus", corpus_path);
  add_artifact(m.outputs, "vocabulary", vocab_path);
  write_manifest(m, out_path(a.out, "manifest.json"));
  std::printf("build-vocab: kept %zu of K=%zu -> %s\n", vocab.words.size(), a.k,
              vocab_path.c_str());
  return 0;
}

// ----------------------------------------------------------------- stats ----

struct StatsArgs {
  std::string corpus;
  std::string vocab;
  std::size_t k = 0;  // build on the fly when no vocab file is given
  std::size_t window = 50;
  std::size_t begin = 0;
  std::size_t end = static_cast<std::size_t>(-1);
  std::string out;
};

int cmd_stats(const StatsArgs& a) {
  const std::string corpus_path = resolve_input(a.corpus);
  const Corpus corpus = load_corpus(corpus_path);
  Vocabulary vocab;
  if (!a.vocab.empty())
    vocab = load_vocab(resolve_input(a.vocab));
  else if (a.k > 0)
    vocab = build_vocab(corpus, a.k);
  else
    throw std::invalid_argument("stats needs --vocab FILE or --k SIZE");
  const CorpusStats stats = compute_stats(corpus, vocab, a.window, a.begin, a.end);

  const json report = {{"programs", corpus.programs.size()},
                       {"nodes", stats.node_count},
                       {"augmented_types", corpus.type_names.size()},
                       {"vocab_words", vocab.words.size()},
                       {"window", a.window},
                       {"oov_count", stats.oov_count},
                       {"oov_rate", stats.oov_rate()},
                       {"local_count", stats.local_count},
                       {"localness", stats.localness()}};
  std::printf("stats: %zu nodes, %zu augmented types, OoV %.2f%%, localness %.2f%% (L=%zu)\n",
              stats.node_count, corpus.type_names.size(), 100 * stats.oov_rate(),
              100 * stats.localness(), a.window);
  if (!a.out.empty()) {
    const std::string report_path = out_path(a.out, "stats.json");
    write_json(report, report_path);
    RunManifest m;
    m.command = "stats";
    m.config = {{"corpus", corpus_path}, {"vocab", a.vocab},   {"k", a.k},
                {"window", a.window},    {"begin", a.begin},
                {"end", a.end == static_cast<std::size_t>(-1) ? corpus.programs.size() : a.end}};
    add_artifact(m.inputs, "corpus", corpus_path);
    add_artifact(m.outputs, "report", report_path);
    write_manifest(m, out_path(a.out, "manifest.json"));
  } else {
    std::cout << report.dump(2) << '\n';
  }
  return 0;
}

// ----------------------------------------------------------------- train ----

struct TrainArgs {
  std::string corpus;
  std::string vocab;  // optional: built from the training range when empty
  std::size_t train_programs = static_cast<std::size_t>(-1);
  ModelFlags flags;
  std::string out;
};

template <class Real>
int run_train(const TrainArgs& a, const std::string& corpus_path, const Corpus& corpus,
              const Vocabulary& vocab) {
  const ModelConfig cfg = a.flags.model_config(corpus, vocab);
  Rng rng(a.flags.seed);
  auto params = ModelParams<Real>::init(cfg, rng);
  BatchStream stream(corpus, vocab, cfg.task, cfg.window, a.flags.batch, a.flags.unroll, 0,
                     a.train_programs);

  TrainConfig tc = a.flags.train_config();
  tc.loss_csv = out_path(a.out, "loss.csv");
  const TrainStats stats = train_model(params, stream, tc);

  const std::string ckpt_path = out_path(a.out, "model.ckpt");
  save_checkpoint(ckpt_path, params, corpus.type_names, vocab);
  const std::string vocab_path = out_path(a.out, "vocab.json");
  save_vocab(vocab, vocab_path);

  json report = {{"mode", a.flags.mode},
                 {"task", a.flags.task},
                 {"steps", stats.steps},
                 {"skipped_fully_masked", stats.skipped_fully_masked},
                 {"epoch_mean_loss", stats.epoch_mean_loss},
                 {"train_queries", stream.total_queries()}};
  const std::string report_path = out_path(a.out, "train_report.json");
  write_json(report, report_path);

  RunManifest m;
  m.command = "train";
  m.seed = a.flags.seed;
  m.config = a.flags.resolved();
  m.config["corpus"] = corpus_path;
  m.config["train_programs"] =
      a.train_programs == static_cast<std::size_t>(-1) ? corpus.programs.size() : a.train_programs;
  add_artifact(m.inputs, "corpus", corpus_path);
  if (!a.vocab.empty()) add_artifact(m.inputs, "vocabulary", resolve_input(a.vocab));
  add_artifact(m.outputs, "checkpoint", ckpt_path);
  add_artifact(m.outputs, "vocabulary", vocab_path);
  add_artifact(m.outputs, "loss_curve", tc.loss_csv);
  add_artifact(m.outputs, "report", report_path);
  write_manifest(m, out_path(a.out, "manifest.json"));

  std::printf("train: %zu steps, final epoch loss %.4f -> %s\n", stats.steps,
              stats.epoch_mean_loss.empty() ? 0.0 : stats.epoch_mean_loss.back(),
              ckpt_path.c_str());
  return 0;
}

int cmd_train(TrainArgs& a, const CLI::App* cmd) {
  a.flags.apply_paper_scale(cmd);
  const std::string corpus_path = resolve_input(a.corpus);
  const Corpus corpus = load_corpus(corpus_path);
  const Vocabulary vocab = a.vocab.empty()
                               ? build_vocab(corpus, a.flags.vocab_size, a.train_programs)
                               : load_vocab(resolve_input(a.vocab));
  if (a.flags.precision == "float") return run_train<float>(a, corpus_path, corpus, vocab);
  return run_train<double>(a, corpus_path, corpus, vocab);
}

// ------------------------------------------------------------------ eval ----

struct EvalArgs {
  std::string corpus;
  std::string checkpoint;
  std::size_t begin = 0;
  std::size_t end = static_cast<std::size_t>(-1);
  std::size_t batch = 32;
  std::size_t unroll = 50;
  std::uint64_t seed = 1;
  std::string out;
};

template <class Real>
EvalReport run_eval(const EvalArgs& a, const Corpus& corpus) {
  CheckpointMeta meta;
  auto params = load_checkpoint<Real>(resolve_input(a.checkpoint), &meta);
  if (meta.type_names != corpus.type_names)
    throw std::invalid_argument("checkpoint was trained on a different type table than " +
                                a.corpus);
  BatchStream stream(corpus, meta.vocab, params.config.task, params.config.window, a.batch,
                     a.unroll, a.begin, a.end);
  return evaluate_model(params, stream, a.seed);
}

int cmd_eval(const EvalArgs& a) {
  const std::string corpus_path = resolve_input(a.corpus);
  const std::string ckpt_path = resolve_input(a.checkpoint);
  const Corpus corpus = load_corpus(corpus_path);
  const CheckpointMeta meta = load_checkpoint_meta(ckpt_path);
  const EvalReport rep = meta.precision == "float" ? run_eval<float>(a, corpus)
                                                   : run_eval<double>(a, corpus);
  print_eval(rep);
  if (!a.out.empty()) {
    const std::string report_path = out_path(a.out, "eval_report.json");
    write_json(eval_report_json(rep), report_path);
    RunManifest m;
    m.command = "eval";
    m.seed = a.seed;
    m.config = {{"corpus", corpus_path},
                {"checkpoint", ckpt_path},
                {"begin", a.begin},
                {"end", a.end == static_cast<std::size_t>(-1) ? corpus.programs.size() : a.end},
                {"batch", a.batch},
                {"unroll", a.unroll}};
    add_artifact(m.inputs, "corpus", corpus_path);
    add_artifact(m.inputs, "checkpoint", ckpt_path);
    add_artifact(m.outputs, "report", report_path);
    write_manifest(m, out_path(a.out, "manifest.json"));
  }
  return 0;
}

// ---------------------------------------------------------------- ablate ----

struct AblateArgs {
  std::string corpus;
  std::vector<std::string> modes = {"vanilla", "attn", "pointer", "pointer-random"};
  std::size_t train_programs = 0;  // 0: two thirds of the corpus
  ModelFlags flags;
  std::string out;
};

template <class Real>
int run_ablate(const AblateArgs& a, const std::string& corpus_path, const Corpus& corpus) {
  const std::size_t split =
      a.train_programs ? a.train_programs : corpus.programs.size() * 2 / 3;
  const Vocabulary vocab = build_vocab(corpus, a.flags.vocab_size, split);
  ModelConfig base = a.flags.model_config(corpus, vocab);

  std::vector<Mode> modes;
  for (const auto& name : a.modes) {
    auto m = mode_from_name(name);
    if (!m) throw std::invalid_argument("unknown mode " + name);
    modes.push_back(*m);
  }
  const TrainConfig tc = a.flags.train_config();
  auto reports = run_ablation<Real>(corpus, vocab, base, tc, modes, a.flags.batch,
                                    a.flags.unroll, split);

  json out = json::array();
  for (const auto& r : reports) {
    print_eval(r);
    out.push_back(eval_report_json(r));
  }
  json deltas = json::object();
  for (std::size_t i = 1; i < reports.size(); ++i)
    deltas[reports[i].mode + "-vs-" + reports[0].mode] =
        reports[i].accuracy() - reports[0].accuracy();
  const json doc = {{"train_programs", split},
                    {"test_programs", corpus.programs.size() - split},
                    {"reports", out},
                    {"accuracy_deltas", deltas}};
  const std::string report_path = out_path(a.out, "ablation.json");
  write_json(doc, report_path);

  RunManifest m;
  m.command = "ablate";
  m.seed = a.flags.seed;
  m.config = a.flags.resolved();
  m.config["corpus"] = corpus_path;
  m.config["modes"] = a.modes;
  m.config["train_programs"] = split;
  add_artifact(m.inputs, "corpus", corpus_path);
  add_artifact(m.outputs, "report", report_path);
  write_manifest(m, out_path(a.out, "manifest.json"));
  return 0;
}

int cmd_ablate(AblateArgs& a, const CLI::App* cmd) {
  a.flags.apply_paper_scale(cmd);
  const std::string corpus_path = resolve_input(a.corpus);
  const Corpus corpus = load_corpus(corpus_path);
  if (a.flags.precision == "float") return run_ablate<float>(a, corpus_path, corpus);
  return run_ablate<double>(a, corpus_path, corpus);
}

// --------------------------------------------------------------- predict ----

struct PredictArgs {
  std::string checkpoint;
  std::string program;  // JSONL file with the partial program
  std::size_t line = 1;
  std::size_t index = static_cast<std::size_t>(-1);  // default: after the last node
  std::size_t top_k = 5;
  std::string out;
};

template <class Real>
int run_predict(const PredictArgs& a, const std::string& ckpt_path) {
  CheckpointMeta meta;
  auto params = load_checkpoint<Real>(ckpt_path, &meta);
  const ModelConfig& cfg = params.config;

  std::ifstream in(resolve_input(a.program));
  if (!in) throw IoError("cannot read " + a.program);
  std::string line;
  for (std::size_t i = 0; i < a.line; ++i)
    if (!std::getline(in, line)) throw IoError(a.program + " has no line " + std::to_string(a.line));
  const ProgramSeq seq = flatten(parse_dataset_line(line, a.line), 0);

  // Re-encode against the training-time tables.
  std::unordered_map<std::string, std::uint32_t> type_index;
  for (std::size_t i = 0; i < meta.type_names.size(); ++i)
    type_index[meta.type_names[i]] = static_cast<std::uint32_t>(i);

  const std::size_t upto = std::min(a.index, seq.nodes.size());
  if (upto == 0) throw std::invalid_argument("nothing to condition on: index 0");

  SegmentInput input;
  input.batch = 1;
  input.steps = upto;
  input.reset = {1};
  // Window values for copy-origin reporting, by recency once truncated.
  std::vector<std::optional<std::string>> consumed_values;
  for (std::size_t t = 0; t < upto; ++t) {
    const FlatNode& node = seq.nodes[t];
    const std::string augmented = augment_type(node.base_type, node.has_child, node.has_sibling);
    auto it = type_index.find(augmented);
    if (it == type_index.end())
      throw std::invalid_argument("type " + augmented + " was never seen in training");
    input.type_ids.push_back(it->second);
    std::uint32_t vid = meta.vocab.empty_id();
    if (node.value) {
      auto known = meta.vocab.id_of(*node.value);
      vid = known ? *known : meta.vocab.unk_id();
    }
    input.value_ids.push_back(vid);
    // Positional refs (1-based) index consumed_values; EMPTY stays EMPTY.
    input.value_refs.push_back(node.value ? static_cast<std::uint32_t>(t + 1) : kEmptyValueRef);
    input.parent_offsets.push_back(node.parent_offset);
    consumed_values.push_back(node.value);
  }

  Tape<Real> tp;
  auto bound = bind_params(tp, params);
  Rng prng(1);
  auto carry = CarryState<Real>::fresh(1, cfg.hidden, cfg.window);
  auto fwd = forward_segment(tp, cfg, bound, input, carry,
                             cfg.mode == Mode::pointer_random ? &prng : nullptr);
  const auto& last = fwd.steps.back();
  const auto& y = tp.value(last.y);

  std::vector<Prediction> preds;
  if (cfg.task == Task::value_prediction) {
    std::vector<std::optional<std::string>> slot_values;
    for (std::size_t j = 0; j < last.slots; ++j) {
      const std::uint32_t ref = last.slot_refs[j];
      if (last.slot_valid[j] && ref != kEofValueRef && ref != kEmptyValueRef)
        slot_values.push_back(consumed_values[ref - 1]);
      else
        slot_values.push_back(std::nullopt);
    }
    preds = rank_predictions<Real>(std::span<const Real>(y.data(), y.size()), meta.vocab,
                                   slot_values, a.top_k);
  } else {
    // type task: rank type dimensions directly
    std::vector<std::pair<Real, std::size_t>> ranked;
    for (std::size_t i = 0; i < y.size(); ++i) ranked.push_back({y[i], i});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& l, const auto& r) { return l.first > r.first; });
    for (std::size_t i = 0; i < std::min(a.top_k, ranked.size()); ++i) {
      Prediction p;
      p.token = ranked[i].second < meta.type_names.size() ? meta.type_names[ranked[i].second]
                                                          : "<EOF>";
      p.probability = static_cast<double>(ranked[i].first);
      preds.push_back(std::move(p));
    }
  }

  json rows = json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const std::string origin =
        p.from_copy ? "copy(offset " + std::to_string(p.offset) + ")" : "vocab";
    std::printf("%2zu. %-30s %8.4f  %s\n", i + 1, p.token.c_str(), p.probability,
                origin.c_str());
    rows.push_back({{"rank", i + 1},
                    {"token", p.token},
                    {"probability", p.probability},
                    {"origin", origin}});
  }
  if (!a.out.empty()) {
    const std::string report_path = out_path(a.out, "predictions.json");
    write_json({{"index", upto}, {"predictions", rows}}, report_path);
    RunManifest m;
    m.command = "predict";
    m.config = {{"checkpoint", ckpt_path},
                {"program", a.program},
                {"line", a.line},
                {"index", upto},
                {"top_k", a.top_k}};
    add_artifact(m.inputs, "checkpoint", ckpt_path);
    add_artifact(m.inputs, "program", resolve_input(a.program));
    add_artifact(m.outputs, "predictions", report_path);
    write_manifest(m, out_path(a.out, "manifest.json"));
  }
  return 0;
}

int cmd_predict(const PredictArgs& a) {
  const std::string ckpt_path = resolve_input(a.checkpoint);
  const CheckpointMeta meta = load_checkpoint_meta(ckpt_path);
  if (meta.precision == "float") return run_predict<float>(a, ckpt_path);
  return run_predict<double>(a, ckpt_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pointer mixture network for code completion"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic high-localness corpus");
  s->add_option("--programs", synth.sc.programs);
  s->add_option("--avg-len", synth.sc.avg_len);
  s->add_option("--value-pool", synth.sc.value_pool);
  s->add_option("--oov-pool", synth.sc.oov_pool);
  s->add_option("--oov-fraction", synth.sc.oov_fraction);
  s->add_option("--repeat-prob", synth.sc.repeat_prob);
  s->add_option("--window", synth.sc.window);
  s->add_option("--base-types", synth.sc.base_types);
  s->add_option("--seed", synth.sc.seed);
  s->add_option("--out", synth.out)->required();

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "flatten a JSONL AST dataset into a corpus");
  p->add_option("--in", pre.in)->required();
  p->add_option("--out", pre.out)->required();

  BuildVocabArgs bv;
  auto* b = app.add_subcommand("build-vocab", "keep the K most frequent values");
  b->add_option("--corpus", bv.corpus)->required();
  b->add_option("--k", bv.k);
  b->add_option("--train-programs", bv.train_programs);
  b->add_option("--out", bv.out)->required();

  StatsArgs st;
  auto* t = app.add_subcommand("stats", "OoV rate and localness of a corpus");
  t->add_option("--corpus", st.corpus)->required();
  t->add_option("--vocab", st.vocab);
  t->add_option("--k", st.k);
  t->add_option("--window", st.window);
  t->add_option("--begin", st.begin);
  t->add_option("--end", st.end);
  t->add_option("--out", st.out);

  TrainArgs tr;
  auto* r = app.add_subcommand("train", "train one model");
  r->add_option("--corpus", tr.corpus)->required();
  r->add_option("--vocab", tr.vocab);
  r->add_option("--train-programs", tr.train_programs);
  tr.flags.add_to(r);
  r->add_option("--out", tr.out)->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--begin", ev.begin);
  e->add_option("--end", ev.end);
  e->add_option("--batch", ev.batch);
  e->add_option("--unroll", ev.unroll);
  e->add_option("--seed", ev.seed);
  e->add_option("--out", ev.out);

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train and compare several modes on one corpus");
  a->add_option("--corpus", ab.corpus)->required();
  a->add_option("--modes", ab.modes)->delimiter(',');
  a->add_option("--train-programs", ab.train_programs);
  ab.flags.add_to(a, /*with_mode=*/false);
  a->add_option("--out", ab.out)->required();

  PredictArgs pd;
  auto* d = app.add_subcommand("predict", "rank completions for the next node");
  d->add_option("--checkpoint", pd.checkpoint)->required();
  d->add_option("--program", pd.program)->required();
  d->add_option("--line", pd.line);
  d->add_option("--index", pd.index);
  d->add_option("--top-k", pd.top_k);
  d->add_option("--out", pd.out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (p->parsed()) return cmd_preprocess(pre);
    if (b->parsed()) return cmd_build_vocab(bv);
    if (t->parsed()) return cmd_stats(st);
    if (r->parsed()) return cmd_train(tr, r);
    if (e->parsed()) return cmd_eval(ev);
    if (a->parsed()) return cmd_ablate(ab, a);
    if (d->parsed()) return cmd_predict(pd);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
