#include "flag/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

Real sigmoid(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

}  // namespace

std::vector<bool> trainable_edges(const GraphView& view, std::size_t hops) {
  const auto dist = hop_distances(view.n_nodes, view.edges, view.readout);
  std::vector<bool> out(view.edges.size());
  for (std::size_t e = 0; e < view.edges.size(); ++e) {
    out[e] = dist[view.edges[e].src] <= hops && dist[view.edges[e].dst] <= hops;
  }
  return out;
}

std::vector<Real> masked_logits(Model& model, const GraphView& view, std::span<const Real> weights) {
  if (weights.size() != view.edges.size()) throw InvalidArgument("mask has the wrong number of edges");
  Tape tape;
  const MessageGraph graph(view);
  Matrix w(weights.size(), 1);
  std::copy(weights.begin(), weights.end(), w.data.begin());
  const Var wv = tape.constant(std::move(w));
  const auto out = model.forward(tape, view, graph, wv);
  const Matrix& l = tape.value(out.logits);
  return {l.data.begin(), l.data.end()};
}

EdgeMask explain(Model& model, const GraphView& view, std::size_t target_class, const ExplainerConfig& config) {
  if (target_class >= model.config().n_classes) throw InvalidArgument("target class out of range");
  if (config.epochs == 0) throw InvalidArgument("explainer epochs must be at least 1");
  const std::size_t n_edges = view.edges.size();

  EdgeMask mask;
  mask.trainable = trainable_edges(view, config.hops);
  mask.hop_limit = config.hops;
  mask.epochs = config.epochs;

  Parameter logits("mask.logits", n_edges, 1);
  Rng rng(mix_seed(config.seed, fnv1a("explain")));
  const double stddev = std::sqrt(2.0) * std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(view.n_nodes, 1)));
  for (Real& v : logits.value.data) v = static_cast<Real>(rng.normal(config.init_mean, stddev));

  const MessageGraph graph(view);
  Adam adam(AdamConfig{config.lr});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    const Var l = tape.parameter(logits);
    tape.freeze_parameters(true);
    const Var w = tape.edge_mask(l, mask.trainable);
    const auto out = model.forward(tape, view, graph, w);
    const Var ce = tape.cross_entropy(out.logits, target_class);
    const Var penalty = tape.mask_penalty(w, mask.trainable, static_cast<Real>(config.lambda_size),
                                          static_cast<Real>(config.lambda_entropy));
    const Var objective = tape.add(ce, penalty);
    if (!std::isfinite(tape.value(objective)(0, 0))) {
      throw NumericError("explainer objective became non-finite at epoch " + std::to_string(epoch + 1));
    }
    logits.zero_grad();
    tape.backward(objective);
    Parameter* p = &logits;
    adam.step({p, 1});
  }

  mask.logits = logits.value.data;
  mask.weights.resize(n_edges);
  for (std::size_t e = 0; e < n_edges; ++e) mask.weights[e] = mask.trainable[e] ? sigmoid(mask.logits[e]) : Real(1);
  return mask;
}

SentenceRanking rank_sentences(std::span<const Real> edge_weights, const DocumentGraph& graph) {
  if (edge_weights.size() != graph.edges.size()) throw InvalidArgument("mask has the wrong number of edges");
  const std::size_t dn = graph.document_node();
  SentenceRanking ranking(graph.n_sentences);
  std::vector<bool> found(graph.n_sentences, false);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    if (edge.dst != dn || edge.src < graph.n_concepts() || edge.src == dn) continue;
    const std::size_t j = edge.src - graph.n_concepts();
    ranking[j] = {j, static_cast<double>(edge_weights[e])};
    found[j] = true;
  }
  for (std::size_t j = 0; j < found.size(); ++j) {
    if (!found[j]) throw InvalidArgument("graph " + graph.doc_id + " lacks the edge from sentence node " + std::to_string(j));
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const SentenceImportance& a, const SentenceImportance& b) { return a.importance > b.importance; });
  return ranking;
}

SentenceRanking rank_sentences(const EdgeMask& mask, const DocumentGraph& graph) {
  return rank_sentences(mask.weights, graph);
}

ExplanationReport emit_explanation(const SentenceRanking& ranking, std::span<const std::string> sentence_text,
                                   std::size_t k) {
  if (k == 0) throw InvalidArgument("top-k must be at least 1");
  ExplanationReport report;
  const std::size_t n = std::min(k, ranking.size());
  for (std::size_t r = 0; r < n; ++r) {
    const auto& s = ranking[r];
    std::string text = s.sentence_index < sentence_text.size() ? sentence_text[s.sentence_index]
                                                               : "sentence " + std::to_string(s.sentence_index);
    report.sentences.push_back({r + 1, s.sentence_index, s.importance, std::move(text)});
  }
  return report;
}

std::string explanation_to_json(const ExplanationReport& report) {
  nlohmann::json j;
  j["doc_id"] = report.doc_id;
  j["predicted_class"] = report.predicted_class;
  j["probabilities"] = report.probabilities;
  j["sentences"] = nlohmann::json::array();
  for (const auto& s : report.sentences) {
    j["sentences"].push_back(
        {{"rank", s.rank}, {"sentence_index", s.sentence_index}, {"importance", s.importance}, {"text", s.text}});
  }
  return j.dump(2) + "\n";
}

std::string explanation_to_table(const ExplanationReport& report) {
  std::ostringstream out;
  out << "document " << report.doc_id << ", predicted class " << report.predicted_class << "\n";
  out << "rank  sentence  importance  text\n";
  char line[64];
  for (const auto& s : report.sentences) {
    std::snprintf(line, sizeof line, "%-4zu  %-8zu  %-10.3f  ", s.rank, s.sentence_index, s.importance);
    out << line << s.text << "\n";
  }
  return out.str();
}

FLAG_NAMESPACE_END
