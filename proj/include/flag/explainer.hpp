#pragma once

#include "flag/config.hpp"

// Post-hoc edge-mask explanations of a model prediction and the resulting
// ranking of sentences by the weight of their sentence-to-document edge.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flag/graph.hpp"
#include "flag/model.hpp"

FLAG_NAMESPACE_BEGIN

struct ExplainerConfig {
  std::size_t hops = 3;
  std::size_t epochs = 1000;
  double lr = 1e-2;
  double lambda_size = 0.005;
  double lambda_entropy = 0.1;
  double init_mean = -1.0;  // mean of the initial mask logits
  std::uint64_t seed = 0;
};

/// One entry per stored directed edge of the explained graph.
struct EdgeMask {
  std::vector<Real> logits;
  std::vector<Real> weights;   // sigmoid(logits) where trainable, exactly 1 elsewhere
  std::vector<bool> trainable;
  std::size_t hop_limit = 0;
  std::size_t epochs = 0;
};

/// An edge is trainable iff both endpoints lie within `hops` undirected
/// steps of the readout node.
std::vector<bool> trainable_edges(const GraphView& view, std::size_t hops);

/// Logits of a forward pass whose stored-edge messages are scaled by `weights`.
std::vector<Real> masked_logits(Model& model, const GraphView& view, std::span<const Real> weights);

/// Optimizes a mask against `target_class` (normally the model's own
/// prediction). Throws NumericError if the objective becomes non-finite.
EdgeMask explain(Model& model, const GraphView& view, std::size_t target_class, const ExplainerConfig& config);

struct SentenceImportance {
  std::size_t sentence_index = 0;
  double importance = 0;

  friend bool operator==(const SentenceImportance&, const SentenceImportance&) = default;
};

using SentenceRanking = std::vector<SentenceImportance>;

/// Sentences ordered by descending weight of their sn_j -> dn edge, ties by index.
SentenceRanking rank_sentences(std::span<const Real> edge_weights, const DocumentGraph& graph);
SentenceRanking rank_sentences(const EdgeMask& mask, const DocumentGraph& graph);

struct ExplanationReport {
  std::string doc_id;
  int predicted_class = 0;
  std::vector<double> probabilities;
  struct Entry {
    std::size_t rank = 0;  // 1-based
    std::size_t sentence_index = 0;
    double importance = 0;
    std::string text;
  };
  std::vector<Entry> sentences;
};

/// Top-k sentences in ranking order; k larger than the sentence count is
/// clamped. Throws InvalidArgument for k == 0.
ExplanationReport emit_explanation(const SentenceRanking& ranking, std::span<const std::string> sentence_text,
                                   std::size_t k);

std::string explanation_to_json(const ExplanationReport& report);
std::string explanation_to_table(const ExplanationReport& report);

FLAG_NAMESPACE_END
