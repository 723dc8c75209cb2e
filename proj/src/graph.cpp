#include "flag/graph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <unordered_map>

#include "binary_io.hpp"
#include "flag/embeddings.hpp"
#include "flag/error.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

constexpr std::string_view kGraphMagic = "FLAGG1";

void link(std::vector<Edge>& edges, std::size_t u, std::size_t v) {
  edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)});
  edges.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(u)});
}

}  // namespace

GraphView DocumentGraph::view() const {
  if (!has_features()) throw InvalidArgument("graph " + doc_id + " has no features attached");
  return GraphView{nodes.size(), edges, features, feature_dim, document_node()};
}

void DocumentGraph::validate() const {
  if (n_sentences == 0) throw InvalidArgument("graph " + doc_id + " has no sentences");
  if (nodes.size() < 2 * n_sentences + 1) throw InvalidArgument("graph " + doc_id + " is missing virtual nodes");

  const std::size_t n = nodes.size();
  const std::size_t first_sn = n_concepts();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes[i];
    if (i < first_sn) {
      if (node.kind != NodeKind::Concept || node.sentence_index >= n_sentences) {
        throw InvalidArgument("graph " + doc_id + ": bad concept node " + std::to_string(i));
      }
    } else if (i < n - 1) {
      if (node.kind != NodeKind::SentenceVirtual || node.sentence_index != i - first_sn) {
        throw InvalidArgument("graph " + doc_id + ": sentence nodes out of order at " + std::to_string(i));
      }
    } else if (node.kind != NodeKind::DocumentVirtual) {
      throw InvalidArgument("graph " + doc_id + ": last node must be the document node");
    }
  }

  std::map<std::pair<std::uint32_t, std::uint32_t>, long> arcs;
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) throw InvalidArgument("graph " + doc_id + ": edge endpoint out of range");
    ++arcs[{e.src, e.dst}];
  }
  for (const auto& [uv, count] : arcs) {
    auto it = arcs.find({uv.second, uv.first});
    if (it == arcs.end() || it->second != count) {
      throw InvalidArgument("graph " + doc_id + ": edge set is not symmetric");
    }
    const auto& a = nodes[uv.first];
    const auto& b = nodes[uv.second];
    if (a.kind == NodeKind::Concept && b.kind == NodeKind::Concept && a.sentence_index != b.sentence_index) {
      throw InvalidArgument("graph " + doc_id + ": edge joins concepts of different sentences");
    }
  }
  auto has = [&](std::size_t u, std::size_t v) {
    return arcs.count({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)}) > 0;
  };
  for (std::size_t i = 0; i < first_sn; ++i) {
    if (!has(i, sentence_node(nodes[i].sentence_index))) {
      throw InvalidArgument("graph " + doc_id + ": concept " + std::to_string(i) + " not linked to its sentence node");
    }
  }
  for (std::size_t j = 0; j < n_sentences; ++j) {
    if (!has(sentence_node(j), document_node())) {
      throw InvalidArgument("graph " + doc_id + ": sentence node not linked to the document node");
    }
    if (j + 1 < n_sentences && !has(sentence_node(j), sentence_node(j + 1))) {
      throw InvalidArgument("graph " + doc_id + ": sentence chain broken at " + std::to_string(j));
    }
  }
  if (has_features()) {
    if (features.size() != n * feature_dim) throw InvalidArgument("graph " + doc_id + ": feature matrix has wrong size");
    for (std::size_t i = first_sn; i < n; ++i) {
      for (float v : feature_row(i)) {
        if (v != 0.0f) throw InvalidArgument("graph " + doc_id + ": virtual node with a non-zero feature row");
      }
    }
  } else if (!features.empty()) {
    throw InvalidArgument("graph " + doc_id + ": feature data without a dimension");
  }
}

DocumentGraph build_document_graph(const std::string& doc_id, const std::vector<SentenceAmr>& sentences) {
  if (sentences.empty()) throw InvalidArgument("document " + doc_id + " has no sentences");

  DocumentGraph g;
  g.doc_id = doc_id;
  g.n_sentences = sentences.size();

  std::vector<std::size_t> first(sentences.size());
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    const auto& s = sentences[j];
    if (s.sentence_index != j) {
      throw InvalidArgument("document " + doc_id + ": sentence " + std::to_string(j) + " carries index " +
                            std::to_string(s.sentence_index));
    }
    if (s.nodes.empty()) throw InvalidArgument("document " + doc_id + ": sentence " + std::to_string(j) + " has no nodes");
    first[j] = g.nodes.size();
    for (const auto& node : s.nodes) {
      g.nodes.push_back({NodeKind::Concept, static_cast<std::uint32_t>(j), node.id});
    }
  }
  const std::size_t sn0 = g.nodes.size();
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    g.nodes.push_back({NodeKind::SentenceVirtual, static_cast<std::uint32_t>(j), {}});
  }
  const std::size_t dn = g.nodes.size();
  g.nodes.push_back({NodeKind::DocumentVirtual, 0, {}});

  for (std::size_t j = 0; j < sentences.size(); ++j) {
    const auto& s = sentences[j];
    std::unordered_map<std::string_view, std::size_t> local;
    for (std::size_t k = 0; k < s.nodes.size(); ++k) {
      if (!local.emplace(s.nodes[k].id, first[j] + k).second) {
        throw InvalidArgument("document " + doc_id + ": duplicate node id '" + s.nodes[k].id + "'");
      }
    }
    for (const auto& e : s.edges) {
      auto u = local.find(e.src);
      auto v = local.find(e.dst);
      if (u == local.end() || v == local.end()) {
        throw InvalidArgument("document " + doc_id + ": edge references a missing node in sentence " + std::to_string(j));
      }
      link(g.edges, u->second, v->second);
    }
    for (std::size_t k = 0; k < s.nodes.size(); ++k) link(g.edges, first[j] + k, sn0 + j);
  }
  for (std::size_t j = 0; j + 1 < sentences.size(); ++j) link(g.edges, sn0 + j, sn0 + j + 1);
  for (std::size_t j = 0; j < sentences.size(); ++j) link(g.edges, sn0 + j, dn);
  return g;
}

void attach_features(DocumentGraph& graph, const std::vector<SentenceAmr>& sentences, const EmbeddingProvider& provider) {
  const std::size_t d = provider.dim();
  if (d == 0) throw InvalidArgument("embedding dimension must be positive");
  if (sentences.size() != graph.n_sentences) {
    throw InvalidArgument("graph " + graph.doc_id + " expects " + std::to_string(graph.n_sentences) + " sentences");
  }
  std::vector<float> features(graph.nodes.size() * d, 0.0f);
  for (std::size_t i = 0; i < graph.n_concepts(); ++i) {
    const auto& node = graph.nodes[i];
    const auto& s = sentences[node.sentence_index];
    const auto idx = s.find_node(node.amr_id);
    if (!idx) throw InvalidArgument("graph " + graph.doc_id + ": node '" + node.amr_id + "' missing from its sentence");
    const auto& align = s.nodes[*idx].alignment;
    if (!align) continue;
    const auto v = provider.lookup(graph.doc_id, node.sentence_index, s.tokens, *align);
    if (v.size() != d) throw InvalidArgument("embedding provider returned a vector of the wrong width");
    std::copy(v.begin(), v.end(), features.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  graph.feature_dim = d;
  graph.features = std::move(features);
}

GraphStats graph_stats(std::span<const DocumentGraph> graphs) {
  std::vector<GraphSize> sizes;
  sizes.reserve(graphs.size());
  for (const auto& g : graphs) sizes.push_back({g.nodes.size(), g.edges.size()});
  return graph_stats(sizes);
}

GraphStats graph_stats(std::span<const GraphSize> sizes) {
  if (sizes.empty()) throw InvalidArgument("graph_stats needs at least one graph");
  GraphStats s;
  for (const auto& g : sizes) {
    const double n = static_cast<double>(g.n_nodes);
    const double e = static_cast<double>(g.n_edges);
    s.n_nodes += n;
    s.n_edges += e;
    s.avg_degree += e / n;
  }
  const double k = static_cast<double>(sizes.size());
  s.n_nodes /= k;
  s.n_edges /= k;
  s.avg_degree /= k;
  return s;
}

std::vector<std::uint8_t> serialize_graph(const DocumentGraph& graph) {
  io::ByteWriter w;
  w.magic(kGraphMagic);
  w.u32(static_cast<std::uint32_t>(graph.nodes.size()));
  w.u32(static_cast<std::uint32_t>(graph.edges.size()));
  w.u32(static_cast<std::uint32_t>(graph.n_sentences));
  w.u32(static_cast<std::uint32_t>(graph.feature_dim));
  w.str(graph.doc_id);
  for (const auto& node : graph.nodes) {
    w.u8(static_cast<std::uint8_t>(node.kind));
    w.u32(node.sentence_index);
    w.str(node.amr_id);
  }
  for (const auto& e : graph.edges) {
    w.u32(e.src);
    w.u32(e.dst);
  }
  for (float v : graph.features) w.f32(v);
  return w.take();
}

DocumentGraph deserialize_graph(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes.data(), bytes.size(), "graph file");
  r.expect_magic(kGraphMagic);
  const std::uint32_t n_nodes = r.u32();
  const std::uint32_t n_edges = r.u32();
  DocumentGraph g;
  g.n_sentences = r.u32();
  g.feature_dim = r.u32();
  g.doc_id = r.str();
  // Guard the reservations below against absurd counts in corrupted headers.
  if (n_nodes > r.remaining() || n_edges > r.remaining()) throw FormatError("graph file: truncated data");
  g.nodes.reserve(n_nodes);
  for (std::uint32_t i = 0; i < n_nodes; ++i) {
    GraphNode node;
    const std::uint8_t kind = r.u8();
    if (kind > 2) throw FormatError("graph file: unknown node kind " + std::to_string(kind));
    node.kind = static_cast<NodeKind>(kind);
    node.sentence_index = r.u32();
    node.amr_id = r.str();
    g.nodes.push_back(std::move(node));
  }
  g.edges.reserve(n_edges);
  for (std::uint32_t i = 0; i < n_edges; ++i) {
    Edge e;
    e.src = r.u32();
    e.dst = r.u32();
    g.edges.push_back(e);
  }
  const std::size_t n_floats = static_cast<std::size_t>(n_nodes) * g.feature_dim;
  if (n_floats * 4 > r.remaining()) throw FormatError("graph file: truncated data");
  g.features.resize(n_floats);
  for (float& v : g.features) v = r.f32();
  r.expect_end();
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("graph file: ") + e.what());
  }
  return g;
}

void save_graph(const DocumentGraph& graph, const std::string& path) { io::write_file(path, serialize_graph(graph)); }

DocumentGraph load_graph(const std::string& path) {
  const auto bytes = io::read_file(path);
  return deserialize_graph(bytes);
}

std::vector<std::size_t> hop_distances(std::size_t n_nodes, std::span<const Edge> edges, std::size_t source) {
  constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::vector<std::size_t>> adj(n_nodes);
  for (const auto& e : edges) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<std::size_t> dist(n_nodes, kUnreached);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t w : adj[v]) {
      if (dist[w] == kUnreached) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

FLAG_NAMESPACE_END
