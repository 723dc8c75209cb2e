#pragma once

#include "flag/config.hpp"

// Document-level graph: every sentence AMR graph plus one virtual node per
// sentence (connected to all of that sentence's concepts and chained to its
// neighbours in sentence order) and one virtual document node connected to
// every sentence node. Each logical edge is stored as two directed arcs.
//
// Node layout: concepts of sentence 0, ..., concepts of sentence m-1, then
// sn_0 .. sn_{m-1}, then dn.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flag/penman.hpp"

FLAG_NAMESPACE_BEGIN

class EmbeddingProvider;

enum class NodeKind : std::uint8_t { Concept = 0, SentenceVirtual = 1, DocumentVirtual = 2 };

struct GraphNode {
  NodeKind kind = NodeKind::Concept;
  std::uint32_t sentence_index = 0;  // unused for the document node
  std::string amr_id;                // Concept only

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Non-owning view of the topology and features consumed by the GNN.
struct GraphView {
  std::size_t n_nodes = 0;
  std::span<const Edge> edges;
  std::span<const float> features;  // row-major, n_nodes x feature_dim
  std::size_t feature_dim = 0;
  std::size_t readout = 0;
};

struct DocumentGraph {
  std::string doc_id;
  std::size_t n_sentences = 0;
  std::vector<GraphNode> nodes;
  std::vector<Edge> edges;
  std::size_t feature_dim = 0;  // 0 while features are unset
  std::vector<float> features;

  std::size_t n_concepts() const { return nodes.size() - n_sentences - 1; }
  std::size_t sentence_node(std::size_t j) const { return n_concepts() + j; }
  std::size_t document_node() const { return nodes.size() - 1; }
  bool has_features() const { return feature_dim > 0; }

  std::span<const float> feature_row(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }

  GraphView view() const;

  /// Checks every structural invariant; throws InvalidArgument on violation.
  void validate() const;

  friend bool operator==(const DocumentGraph&, const DocumentGraph&) = default;
};

struct GraphStats {
  double n_nodes = 0;
  double n_edges = 0;
  double avg_degree = 0;
};

/// Builds the hierarchical graph. Features are left unset.
DocumentGraph build_document_graph(const std::string& doc_id, const std::vector<SentenceAmr>& sentences);

/// Fills the feature matrix: aligned concepts get the provider's mean vector
/// over their token span, everything else a zero row.
void attach_features(DocumentGraph& graph, const std::vector<SentenceAmr>& sentences, const EmbeddingProvider& provider);

/// Corpus means of the per-graph node count and directed edge count. The
/// degree is the mean of edges/nodes.
GraphStats graph_stats(std::span<const DocumentGraph> graphs);

struct GraphSize {
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
};
/// Same averages as graph_stats, from node and edge counts alone.
GraphStats graph_stats(std::span<const GraphSize> sizes);

std::vector<std::uint8_t> serialize_graph(const DocumentGraph& graph);
DocumentGraph deserialize_graph(std::span<const std::uint8_t> bytes);

void save_graph(const DocumentGraph& graph, const std::string& path);
DocumentGraph load_graph(const std::string& path);

/// Undirected BFS hop distance from `source` to every node (SIZE_MAX if unreachable).
std::vector<std::size_t> hop_distances(std::size_t n_nodes, std::span<const Edge> edges, std::size_t source);

FLAG_NAMESPACE_END
