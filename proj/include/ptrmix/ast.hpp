#pragma once

// AST corpus pipeline: parse benchmark JSON lines into node lists, flatten
// trees to depth-first sequences with child/sibling bits and parent offsets,
// and reconstruct trees from flattened sequences.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrmix {

// Thrown for malformed JSON input; carries the 1-based source line number
// when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Thrown when node links do not form a tree, or when flattening bits are
// inconsistent during reconstruction.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One node of a parsed program. `children` holds indices into the same
// program's node list. A missing value means the node carries no text of its
// own (interior nodes, and typed leaves without a literal).
struct AstNode {
  std::string type_name;
  std::optional<std::string> value;
  std::vector<std::size_t> children;

  bool operator==(const AstNode&) const = default;
};

// One position of a flattened program. The value is absent (EMPTY) for nodes
// that had no value of their own; an absent value is deliberately not a
// sentinel string, so no source token can collide with it.
struct FlatNode {
  std::string base_type;
  bool has_child = false;
  bool has_sibling = false;
  std::optional<std::string> value;
  // Distance back to the parent's flat index; the root uses the fallback 1.
  std::uint32_t parent_offset = 1;

  bool operator==(const FlatNode&) const = default;
};

// A whole program in flattened form.
struct ProgramSeq {
  std::uint64_t id = 0;
  std::vector<FlatNode> nodes;
};

// Parses one corpus line (a JSON array of node objects with "type", optional
// "value", optional "children"). Non-object array entries — some corpora end
// each line with a stray 0 — are ignored. Returns an empty list for an empty
// array. `line_no` is used only for error messages.
std::vector<AstNode> parse_dataset_line(const std::string& line, std::size_t line_no = 0);

// Depth-first flattening, each node before its subtree. Fills child/sibling
// bits and parent offsets. Interior nodes get an absent (EMPTY) value even if
// the source node carried one.
ProgramSeq flatten(const std::vector<AstNode>& nodes, std::uint64_t program_id = 0);

// Exact inverse of flatten. Throws StructureError when the bits cannot be a
// well-formed flattening (dangling has_sibling, has_child with no children,
// or parent offsets that contradict the bits).
std::vector<AstNode> unflatten(const ProgramSeq& seq);

// Injective encoding of (base type, child bit, sibling bit) as one string:
// the base type plus a fixed two-character 0/1 suffix.
std::string augment_type(const std::string& base_type, bool has_child, bool has_sibling);

}  // namespace ptrmix
