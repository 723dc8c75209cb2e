#pragma once

#include "flag/config.hpp"

// Sentence-level AMR graphs in PENMAN notation.
//
// Input blocks look like
//
//   # ::tok our business grew
//   # ::alignments b-1-2 w-0-1 g-2-3
//   (g / grow-01
//       :ARG1 (b / business
//           :poss (w / we)))
//
// Blocks are separated by blank lines. Alignment entries are
// "<node id>-<start>-<end>" with a half-open token range.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

FLAG_NAMESPACE_BEGIN

struct TokenSpan {
  std::uint32_t start = 0;
  std::uint32_t end = 0;  // exclusive

  std::uint32_t size() const { return end - start; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
  friend auto operator<=>(const TokenSpan&, const TokenSpan&) = default;
};

struct AmrNode {
  std::string id;
  std::string concept_label;
  std::optional<TokenSpan> alignment;
  // Constants (numbers, quoted strings, bare symbols such as "-") get a
  // synthetic id of the form "_c<k>" and serialize inline.
  bool constant = false;

  friend bool operator==(const AmrNode&, const AmrNode&) = default;
  friend auto operator<=>(const AmrNode&, const AmrNode&) = default;
};

struct AmrEdge {
  std::string src;
  std::string dst;
  std::string role;  // always starts with ':'

  friend bool operator==(const AmrEdge&, const AmrEdge&) = default;
  friend auto operator<=>(const AmrEdge&, const AmrEdge&) = default;
};

/// One sentence's AMR graph. nodes[0] is the root.
struct SentenceAmr {
  std::size_t sentence_index = 0;
  std::vector<std::string> tokens;
  std::vector<AmrNode> nodes;
  std::vector<AmrEdge> edges;

  /// Index of the node with this id, or nullopt.
  std::optional<std::size_t> find_node(std::string_view id) const;

  /// Checks every structural invariant; throws InvalidArgument on violation.
  void validate() const;
};

/// Order-insensitive equality of the node set and the edge multiset. Sentence
/// index and tokens must match as well.
bool equivalent(const SentenceAmr& a, const SentenceAmr& b);

/// Parses a document of PENMAN blocks. Errors throw ParseError with the
/// 1-based line number inside `text`.
std::vector<SentenceAmr> parse_penman_document(std::string_view text);

/// Serializes one sentence graph with its "::tok" and "::alignments" lines.
std::string serialize_penman(const SentenceAmr& graph);

/// Serializes a whole document (blocks joined by one blank line).
std::string serialize_penman_document(const std::vector<SentenceAmr>& sentences);

/// Random connected rooted graph for fixtures. Node i is "n<i>" and is aligned
/// to token i. With reentrancy_prob 0 the result is a tree.
SentenceAmr generate_random_amr(std::uint64_t seed, std::size_t n_nodes, double reentrancy_prob);

FLAG_NAMESPACE_END
