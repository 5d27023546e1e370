#include "ptrmix/corpus.hpp"

#include <cstdio>
#include <fstream>

namespace ptrmix {

namespace {

constexpr char kMagic[8] = {'P', 'M', 'X', 'C', 'O', 'R', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError(path + ": truncated corpus file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  std::uint64_t lo = read_u32(in, path);
  std::uint64_t hi = read_u32(in, path);
  return lo | (hi << 32);
}

std::string read_str(std::istream& in, const std::string& path) {
  std::uint32_t n = read_u32(in, path);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError(path + ": truncated corpus file");
  return s;
}

}  // namespace

void CorpusBuilder::add(const ProgramSeq& seq) {
  EncodedProgram prog;
  prog.id = seq.id;
  prog.tokens.reserve(seq.nodes.size());
  for (const FlatNode& node : seq.nodes) {
    CorpusToken tok;
    const std::string augmented = augment_type(node.base_type, node.has_child, node.has_sibling);
    auto [tit, tnew] = type_index_.try_emplace(
        augmented, static_cast<std::uint32_t>(corpus_.type_names.size()));
    if (tnew) corpus_.type_names.push_back(augmented);
    tok.type_id = tit->second;
    if (node.value) {
      auto [vit, vnew] = value_index_.try_emplace(
          *node.value, static_cast<std::uint32_t>(corpus_.value_strings.size() + 1));
      if (vnew) corpus_.value_strings.push_back(*node.value);
      tok.value_ref = vit->second;
    } else {
      tok.value_ref = kEmptyValueRef;
    }
    tok.parent_offset = node.parent_offset;
    prog.tokens.push_back(tok);
  }
  corpus_.programs.push_back(std::move(prog));
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(corpus.type_names.size()));
  for (const auto& s : corpus.type_names) write_str(out, s);
  write_u32(out, static_cast<std::uint32_t>(corpus.value_strings.size()));
  for (const auto& s : corpus.value_strings) write_str(out, s);
  write_u64(out, corpus.programs.size());
  for (const auto& prog : corpus.programs) {
    write_u64(out, prog.id);
    write_u32(out, static_cast<std::uint32_t>(prog.tokens.size()));
    for (const auto& tok : prog.tokens) {
      write_u32(out, tok.type_id);
      write_u32(out, tok.value_ref);
      write_u32(out, tok.parent_offset);
    }
  }
  if (!out) throw IoError(path + ": write failed");
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    throw IoError(path + ": not a preprocessed corpus file");

  Corpus corpus;
  const std::uint32_t n_types = read_u32(in, path);
  corpus.type_names.reserve(n_types);
  for (std::uint32_t i = 0; i < n_types; ++i) corpus.type_names.push_back(read_str(in, path));
  const std::uint32_t n_values = read_u32(in, path);
  corpus.value_strings.reserve(n_values);
  for (std::uint32_t i = 0; i < n_values; ++i) corpus.value_strings.push_back(read_str(in, path));
  const std::uint64_t n_programs = read_u64(in, path);
  corpus.programs.reserve(n_programs);
  for (std::uint64_t i = 0; i < n_programs; ++i) {
    EncodedProgram prog;
    prog.id = read_u64(in, path);
    const std::uint32_t n_tokens = read_u32(in, path);
    prog.tokens.reserve(n_tokens);
    for (std::uint32_t t = 0; t < n_tokens; ++t) {
      CorpusToken tok;
      tok.type_id = read_u32(in, path);
      tok.value_ref = read_u32(in, path);
      tok.parent_offset = read_u32(in, path);
      if (tok.type_id >= n_types)
        throw IoError(path + ": token type id " + std::to_string(tok.type_id) +
                      " outside the type table");
      if (tok.value_ref != kEmptyValueRef && tok.value_ref != kEofValueRef &&
          tok.value_ref > n_values)
        throw IoError(path + ": token value ref " + std::to_string(tok.value_ref) +
                      " outside the value table");
      if (tok.parent_offset == 0) throw IoError(path + ": token with parent offset 0");
      prog.tokens.push_back(tok);
    }
    corpus.programs.push_back(std::move(prog));
  }
  return corpus;
}

std::vector<Segment> segment_program(const EncodedProgram& program, std::size_t seg_len,
                                     std::uint32_t eof_type_id) {
  if (seg_len == 0) throw std::invalid_argument("segment length must be at least 1");
  std::vector<Segment> segments;
  const std::size_t n = program.tokens.size();
  segments.reserve((n + seg_len - 1) / seg_len);
  for (std::size_t start = 0; start < n; start += seg_len) {
    Segment seg;
    seg.program_id = program.id;
    seg.seg_index = static_cast<std::uint32_t>(start / seg_len);
    seg.is_first = start == 0;
    seg.real_len = std::min(seg_len, n - start);
    seg.tokens.assign(program.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                      program.tokens.begin() + static_cast<std::ptrdiff_t>(start + seg.real_len));
    seg.tokens.resize(seg_len, CorpusToken{eof_type_id, kEofValueRef, 1});
    segments.push_back(std::move(seg));
  }
  return segments;
}

}  // namespace ptrmix
