#include "ptrmix/ast.hpp"

#include <json.hpp>

namespace ptrmix {

namespace {

using nlohmann::json;

std::string scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  // Some corpora store literal values as raw JSON scalars; keep their
  // canonical text form so identical literals compare equal.
  return v.dump();
}

}  // namespace

std::vector<AstNode> parse_dataset_line(const std::string& line, std::size_t line_no) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!doc.is_array()) throw ParseError("expected a JSON array of nodes", line_no);

  std::vector<AstNode> nodes;
  nodes.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object()) continue;  // trailing sentinel in some corpora
    AstNode node;
    auto type_it = item.find("type");
    if (type_it == item.end() || !type_it->is_string())
      throw ParseError("node " + std::to_string(nodes.size()) + " has no string \"type\"",
                       line_no);
    node.type_name = type_it->get<std::string>();
    if (auto it = item.find("value"); it != item.end() && !it->is_null())
      node.value = scalar_to_string(*it);
    if (auto it = item.find("children"); it != item.end()) {
      if (!it->is_array())
        throw ParseError("node " + std::to_string(nodes.size()) + ": \"children\" is not an array",
                         line_no);
      for (const auto& c : *it) {
        if (!c.is_number_integer())
          throw ParseError("node " + std::to_string(nodes.size()) + ": non-integer child index",
                           line_no);
        auto idx = c.get<std::int64_t>();
        if (idx < 0) throw ParseError("negative child index", line_no);
        node.children.push_back(static_cast<std::size_t>(idx));
      }
    }
    nodes.push_back(std::move(node));
  }

  // Structural validation: indices in range, children strictly after their
  // parent (rules out cycles), and a single parent per node.
  std::vector<std::uint8_t> has_parent(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t c : nodes[i].children) {
      if (c >= nodes.size())
        throw StructureError("node " + std::to_string(i) + " references child " +
                             std::to_string(c) + " outside the program (" +
                             std::to_string(nodes.size()) + " nodes)");
      if (c <= i)
        throw StructureError("node " + std::to_string(i) + " references child " +
                             std::to_string(c) + " at or before itself (not a tree)");
      if (has_parent[c])
        throw StructureError("node " + std::to_string(c) + " has more than one parent");
      has_parent[c] = 1;
    }
  }
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!has_parent[i])
      throw StructureError("node " + std::to_string(i) + " is unreachable from the root");
  return nodes;
}

ProgramSeq flatten(const std::vector<AstNode>& nodes, std::uint64_t program_id) {
  ProgramSeq seq;
  seq.id = program_id;
  if (nodes.empty()) return seq;
  seq.nodes.reserve(nodes.size());

  constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);
  struct Pending {
    std::size_t node;
    std::size_t parent_flat;
    bool has_sibling;
  };
  std::vector<Pending> stack;
  stack.push_back({0, kNoParent, false});

  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const AstNode& src = nodes[cur.node];
    const std::size_t flat_index = seq.nodes.size();

    FlatNode out;
    out.base_type = src.type_name;
    out.has_child = !src.children.empty();
    out.has_sibling = cur.has_sibling;
    if (!out.has_child) out.value = src.value;  // interior nodes stay EMPTY
    out.parent_offset = cur.parent_flat == kNoParent
                            ? 1
                            : static_cast<std::uint32_t>(flat_index - cur.parent_flat);
    seq.nodes.push_back(std::move(out));

    // Push children in reverse so the first child is flattened next.
    for (std::size_t k = src.children.size(); k-- > 0;)
      stack.push_back({src.children[k], flat_index, k + 1 < src.children.size()});
  }
  if (seq.nodes.size() != nodes.size())
    throw StructureError("flatten visited " + std::to_string(seq.nodes.size()) + " of " +
                         std::to_string(nodes.size()) + " nodes; tree is disconnected");
  return seq;
}

std::vector<AstNode> unflatten(const ProgramSeq& seq) {
  std::vector<AstNode> nodes(seq.nodes.size());
  if (seq.nodes.empty()) return nodes;
  if (seq.nodes.front().has_sibling)
    throw StructureError("root node claims a sibling");

  // Stack of flat indices whose child lists are still open.
  std::vector<std::size_t> open;
  bool closed = false;  // the root's subtree is complete
  for (std::size_t i = 0; i < seq.nodes.size(); ++i) {
    const FlatNode& tok = seq.nodes[i];
    if (i > 0) {
      if (closed || open.empty())
        throw StructureError("node " + std::to_string(i) + " appears after the root subtree closed");
      const std::size_t parent = open.back();
      if (static_cast<std::size_t>(tok.parent_offset) != i - parent)
        throw StructureError("node " + std::to_string(i) + " parent_offset " +
                             std::to_string(tok.parent_offset) + " contradicts structural parent " +
                             std::to_string(parent));
      nodes[parent].children.push_back(i);
    }
    nodes[i].type_name = tok.base_type;
    nodes[i].value = tok.value;

    if (tok.has_child) {
      open.push_back(i);
      continue;
    }
    // A leaf without a sibling completes its parent's child list, and so on
    // up while the completed node itself has no right sibling.
    bool expecting_sibling = tok.has_sibling;
    while (!expecting_sibling) {
      if (open.empty()) {
        closed = true;
        break;
      }
      const std::size_t done = open.back();
      open.pop_back();
      expecting_sibling = seq.nodes[done].has_sibling;
    }
  }
  if (!open.empty())
    throw StructureError("node " + std::to_string(open.back()) +
                         " has has_child set but its children never arrived");
  if (!closed) throw StructureError("sequence ends while a sibling is still expected");
  return nodes;
}

std::string augment_type(const std::string& base_type, bool has_child, bool has_sibling) {
  std::string out;
  out.reserve(base_type.size() + 2);
  out += base_type;
  out += has_child ? '1' : '0';
  out += has_sibling ? '1' : '0';
  return out;
}

}  // namespace ptrmix
