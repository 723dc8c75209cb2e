#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "flag/embeddings.hpp"
#include "flag/graph.hpp"
#include "flag/model.hpp"
#include "flag/penman.hpp"
#include "flag/random.hpp"

namespace flag_test {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("flag_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// m sentences of random AMRs with 1..max_nodes nodes each.
inline std::vector<flag::SentenceAmr> random_sentences(std::uint64_t seed, std::size_t m, std::size_t max_nodes,
                                                       double reentrancy = 0.3) {
  flag::Rng rng(seed);
  std::vector<flag::SentenceAmr> out;
  for (std::size_t j = 0; j < m; ++j) {
    auto s = flag::generate_random_amr(rng.next_u64(), 1 + rng.below(max_nodes), reentrancy);
    s.sentence_index = j;
    out.push_back(std::move(s));
  }
  return out;
}

/// A document graph with pseudo-embedding features of width `dim`.
inline flag::DocumentGraph random_document(std::uint64_t seed, std::size_t m, std::size_t max_nodes, std::size_t dim) {
  const auto sentences = random_sentences(seed, m, max_nodes);
  auto g = flag::build_document_graph("doc" + std::to_string(seed), sentences);
  flag::attach_features(g, sentences, flag::PseudoEmbeddingProvider(dim, seed));
  return g;
}

inline flag::ModelConfig small_config(flag::LayerKind kind = flag::LayerKind::GATv2, std::size_t dim = 8,
                                      std::uint64_t seed = 1) {
  flag::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.hidden_dim = 16;
  c.input_dim = dim;
  c.layer_kind = kind;
  c.seed = seed;
  return c;
}

/// Standalone graph with explicit edges and random features.
struct ToyGraph {
  std::size_t n_nodes = 0;
  std::vector<flag::Edge> edges;
  std::vector<float> features;
  std::size_t dim = 0;
  std::size_t readout = 0;

  flag::GraphView view() const { return {n_nodes, edges, features, dim, readout}; }
};

inline ToyGraph toy_graph(std::size_t n, std::vector<flag::Edge> edges, std::size_t dim, std::uint64_t seed,
                          std::size_t readout = 0) {
  ToyGraph g{n, std::move(edges), std::vector<float>(n * dim), dim, readout};
  flag::Rng rng(seed);
  for (float& v : g.features) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return g;
}

/// Random connected undirected graph on n nodes, stored as arc pairs.
inline std::vector<flag::Edge> random_connected_edges(std::size_t n, double extra, flag::Rng& rng) {
  std::vector<flag::Edge> edges;
  auto link = [&](std::size_t u, std::size_t v) {
    edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)});
    edges.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(u)});
  };
  for (std::size_t i = 1; i < n; ++i) link(rng.below(i), i);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(extra)) link(i, j);
    }
  }
  return edges;
}

}  // namespace flag_test
