#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flag/commands.hpp"
#include "flag/corpus.hpp"
#include "flag/embeddings.hpp"
#include "flag/explainer.hpp"
#include "flag/graph.hpp"
#include "flag/labeling.hpp"
#include "flag/model.hpp"
#include "flag/penman.hpp"
#include "flag/trainer.hpp"
#include "label_oracle.hpp"
#include "outcome.hpp"
#include "support.hpp"

using namespace flag;
using acceptance::Outcome;

namespace {

// Graph construction
constexpr std::size_t kGraphDocuments = 200;
constexpr std::size_t kMaxSentences = 20;
constexpr std::size_t kMaxSentenceNodes = 30;
constexpr double kGraphSeconds = 10.0;

// Attention normalization and permutation invariance
constexpr std::size_t kAttentionFixtures = 50;
constexpr double kAttentionSumTolerance = 1e-6;
constexpr double kPermutationTolerance = 1e-6;

// Planted-signal training
constexpr std::uint64_t kCorpusSeed = 7;
constexpr double kMinTrainAccuracy = 0.95;
constexpr double kMinTestAccuracy = 0.80;
constexpr double kTrainingSeconds = 300.0;

// Labels
constexpr std::size_t kLabelCases = 1000;
constexpr double kPriceScale = 3.0;

// Metrics
constexpr double kMetricTolerance = 1e-5;

// Explanations
constexpr std::size_t kExplainRuns = 20;
constexpr std::size_t kExplainTopK = 3;
constexpr std::size_t kExplainMinHits = 16;

// Serialization
constexpr std::size_t kRoundTrips = 50;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome graph_construction() {
  Rng rng(2024);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t d = 0; d < kGraphDocuments; ++d) {
    const std::size_t m = 1 + rng.below(kMaxSentences);
    const auto sentences = flag_test::random_sentences(rng.next_u64(), m, kMaxSentenceNodes);
    const auto g = build_document_graph("doc" + std::to_string(d), sentences);

    std::size_t nodes = m + 1, logical = 2 * m - 1;
    for (const auto& s : sentences) {
      nodes += s.nodes.size();
      logical += s.nodes.size() + s.edges.size();
    }
    if (g.nodes.size() != nodes) return {false, fmt("document %zu: %zu nodes, expected %zu", d, g.nodes.size(), nodes)};
    if (g.edges.size() != 2 * logical) {
      return {false, fmt("document %zu: %zu edges, expected %zu", d, g.edges.size(), 2 * logical)};
    }

    std::map<std::pair<std::uint32_t, std::uint32_t>, int> arcs;
    for (const auto& e : g.edges) ++arcs[{e.src, e.dst}];
    for (const auto& [arc, count] : arcs) {
      const auto it = arcs.find({arc.second, arc.first});
      if (it == arcs.end() || it->second != count) return {false, fmt("document %zu: asymmetric arc", d)};
    }
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const auto a = static_cast<std::uint32_t>(g.sentence_node(j));
      if (!arcs.count({a, a + 1})) return {false, fmt("document %zu: sentence nodes %zu and %zu not linked", d, j, j + 1)};
    }
    const auto dist = hop_distances(g.nodes.size(), g.edges, g.document_node());
    if (*std::max_element(dist.begin(), dist.end()) > 2) return {false, fmt("document %zu: node beyond 2 hops", d)};
  }
  const double secs = seconds_since(t0);
  return {secs < kGraphSeconds, fmt("%zu documents match the counting formula, symmetry, sentence chain and 2-hop bound in %.2f s",
                                    kGraphDocuments, secs)};
}

// ---------------------------------------------------------------------------

Outcome attention_and_permutation() {
  Rng rng(77);
  const LayerKind kinds[] = {LayerKind::GATv2, LayerKind::GAT, LayerKind::GCN};
  double worst_sum = 0, worst_perm = 0;
  bool in_range = true;
  for (std::size_t f = 0; f < kAttentionFixtures; ++f) {
    const LayerKind kind = kinds[f % 3];
    const auto g = flag_test::random_document(rng.next_u64(), 1 + rng.below(6), 10, 16);
    auto config = flag_test::small_config(kind, 16, 300 + f);
    config.n_heads = 4;
    Model model(config);

    auto trace = model_forward(model, g.view());
    const MessageGraph& mg = trace.graph;
    for (std::size_t l = 0; l < trace.output.attention.size(); ++l) {
      const Matrix& a = trace.attention(l);
      std::vector<double> sums(mg.n_nodes * a.cols, 0.0);
      for (std::size_t e = 0; e < a.rows; ++e) {
        for (std::size_t h = 0; h < a.cols; ++h) {
          const double v = a(e, h);
          in_range = in_range && v >= 0.0 && v <= 1.0;
          sums[mg.dst[e] * a.cols + h] += v;
        }
      }
      for (double s : sums) worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }

    // Relabel nodes and shuffle the stored edge order.
    const std::size_t n = g.nodes.size(), dim = g.feature_dim;
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm.begin(), perm.end());
    flag_test::ToyGraph h{n, {}, std::vector<float>(n * dim), dim, perm[g.document_node()]};
    for (const auto& e : g.edges) h.edges.push_back({perm[e.src], perm[e.dst]});
    rng.shuffle(h.edges.begin(), h.edges.end());
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(g.features.begin() + static_cast<std::ptrdiff_t>(i * dim), dim,
                  h.features.begin() + static_cast<std::ptrdiff_t>(perm[i] * dim));
    }
    const auto a = trace.logits();
    const auto b = predict_logits(model, h.view());
    for (std::size_t c = 0; c < a.size(); ++c) worst_perm = std::max(worst_perm, std::abs(double(a[c]) - double(b[c])));
  }
  const bool pass = in_range && worst_sum <= kAttentionSumTolerance && worst_perm <= kPermutationTolerance;
  return {pass, fmt("%zu fixtures: max |row sum - 1| %.2e, coefficients in [0,1]: %s, max permuted logit change %.2e",
                    kAttentionFixtures, worst_sum, in_range ? "yes" : "no", worst_perm)};
}

// ---------------------------------------------------------------------------

struct PlantedData {
  SyntheticCorpus corpus;
  std::map<std::string, std::size_t> index;  // doc id -> position in corpus.documents
  std::vector<Example> train, validation, test;
};

const PlantedData& planted() {
  static const PlantedData data = [] {
    PlantedData d;
    CorpusConfig cc;
    cc.seed = kCorpusSeed;
    d.corpus = generate_corpus(cc);
    const PseudoEmbeddingProvider provider(cc.embedding_dim, cc.seed);

    std::map<std::string, Example> examples;
    std::vector<DatasetItem> items;
    for (std::size_t i = 0; i < d.corpus.documents.size(); ++i) {
      const auto& doc = d.corpus.documents[i];
      d.index[doc.doc_id] = i;
      const auto label = daily_label(d.corpus.prices.at(doc.ticker), {doc.doc_id, doc.ticker, doc.call_date});
      if (!label) continue;
      auto g = build_document_graph(doc.doc_id, doc.sentences);
      attach_features(g, doc.sentences, provider);
      examples[doc.doc_id] = {doc.doc_id, std::move(g), label->value};
      items.push_back({doc.doc_id, "", label->value, doc.call_date});
    }
    SplitSpec spec;
    spec.test_year = cc.test_year;
    const auto split = make_split(items, spec, kCorpusSeed);
    for (const auto& it : split.train) d.train.push_back(examples.at(it.doc_id));
    for (const auto& it : split.validation) d.validation.push_back(examples.at(it.doc_id));
    for (const auto& it : split.test) d.test.push_back(examples.at(it.doc_id));
    return d;
  }();
  return data;
}

TrainConfig planted_config(LayerKind kind) {
  TrainConfig tc;
  tc.epochs = 20;
  tc.lr = 1e-3;
  tc.seed = kCorpusSeed;
  tc.model.n_layers = 4;
  tc.model.n_heads = 4;
  tc.model.hidden_dim = 64;
  tc.model.input_dim = planted().corpus.config.embedding_dim;
  tc.model.layer_kind = kind;
  tc.model.seed = kCorpusSeed;
  return tc;
}

struct TrainedRun {
  TrainResult result;
  double seconds = 0;
};

TrainedRun& trained(LayerKind kind) {
  static std::map<LayerKind, TrainedRun> runs;
  auto it = runs.find(kind);
  if (it == runs.end()) {
    const auto& d = planted();
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train(d.train, d.validation, planted_config(kind));
    it = runs.emplace(kind, TrainedRun{std::move(r), seconds_since(t0)}).first;
  }
  return it->second;
}

Outcome planted_training() {
  const auto& d = planted();
  auto& run = trained(LayerKind::GATv2);
  const double train_acc = evaluate(run.result.model, d.train).accuracy;
  const double test_acc = evaluate(run.result.model, d.test).accuracy;
  const bool pass = train_acc >= kMinTrainAccuracy && test_acc >= kMinTestAccuracy && run.seconds < kTrainingSeconds;
  return {pass, fmt("GATv2 on %zu/%zu/%zu documents: train accuracy %.3f, test accuracy %.3f, best epoch %zu, %.1f s",
                    d.train.size(), d.validation.size(), d.test.size(), train_acc, test_acc, run.result.best_epoch,
                    run.seconds)};
}

// ---------------------------------------------------------------------------

Outcome label_oracle() {
  Rng rng(4242);
  std::size_t labeled = 0, mismatches = 0, scale_mismatches = 0;
  for (std::size_t i = 0; i < kLabelCases; ++i) {
    auto c = flag_test::random_label_case(rng);
    auto scaled = c.series;
    for (auto& o : scaled.observations) o.close *= kPriceScale;
    for (Horizon h : {Horizon::Daily, Horizon::Weekly}) {
      const auto expected = flag_test::oracle_label(c.series, c.event.call_date, h);
      const auto got = make_label(c.series, c.event, h);
      const auto got_scaled = make_label(scaled, c.event, h);
      if (expected.has_value() != got.has_value() || (got && got->value != *expected)) ++mismatches;
      if (got.has_value() != got_scaled.has_value() || (got && got->value != got_scaled->value)) ++scale_mismatches;
      labeled += got.has_value();
    }
  }
  return {mismatches == 0 && scale_mismatches == 0,
          fmt("%zu cases x 2 horizons (%zu labelable): %zu oracle mismatches, %zu changed by x%.0f scaling", kLabelCases,
              labeled, mismatches, scale_mismatches, kPriceScale)};
}

// ---------------------------------------------------------------------------

Outcome metrics() {
  const std::vector<int> targets{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const std::vector<int> preds{1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  const auto r = evaluate_predictions(targets, preds, 2);
  auto near = [](double a, double b) { return std::abs(a - b) <= kMetricTolerance; };
  const bool confusion = r.confusion == std::vector<std::vector<std::size_t>>{{4, 2}, {1, 3}};
  const bool values = near(r.accuracy, 0.7) && near(r.precision[1], 0.6) && near(r.recall[1], 0.75) &&
                      near(r.f1[1], 2.0 / 3.0) && near(r.precision[0], 0.8) && near(r.recall[0], 4.0 / 6.0) &&
                      near(r.f1[0], 8.0 / 11.0) && near(r.macro_precision, 0.7) &&
                      near(r.macro_recall, (0.75 + 4.0 / 6.0) / 2) && near(r.macro_f1, (2.0 / 3.0 + 8.0 / 11.0) / 2);

  const auto all_right = evaluate_predictions(targets, targets, 2);
  std::vector<int> flipped(targets.size());
  std::transform(targets.begin(), targets.end(), flipped.begin(), [](int t) { return 1 - t; });
  const auto all_wrong = evaluate_predictions(targets, flipped, 2);
  const bool bounds = near(all_right.accuracy, 1) && near(all_right.macro_f1, 1) && near(all_wrong.accuracy, 0) &&
                      near(all_wrong.macro_f1, 0);
  return {confusion && values && bounds,
          fmt("accuracy %.4f, macro P/R/F1 %.4f/%.4f/%.4f; all-correct F1 %.1f, all-wrong F1 %.1f", r.accuracy,
              r.macro_precision, r.macro_recall, r.macro_f1, all_right.macro_f1, all_wrong.macro_f1)};
}

// ---------------------------------------------------------------------------

Outcome explanations() {
  // An all-ones mask must reproduce the unmasked logits exactly.
  const auto& d = planted();
  auto& model = trained(LayerKind::GATv2).result.model;
  const auto& probe = d.test.front().graph;
  const std::vector<Real> ones(probe.edges.size(), Real(1));
  const bool identity = masked_logits(model, probe.view(), ones) == predict_logits(model, probe.view());

  std::vector<const Example*> positives;
  for (const auto* set : {&d.train, &d.validation, &d.test}) {
    for (const auto& e : *set) {
      if (e.label == 1) positives.push_back(&e);
    }
  }
  std::sort(positives.begin(), positives.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
  if (positives.empty()) return {false, "no positive documents"};

  std::size_t hits = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t run = 0; run < kExplainRuns; ++run) {
    const Example& ex = *positives[run % positives.size()];
    const auto& doc = d.corpus.documents[d.index.at(ex.doc_id)];
    const auto logits = predict_logits(model, ex.graph.view());
    const auto predicted = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ExplainerConfig ec;
    ec.hops = 3;
    ec.epochs = 1000;
    ec.seed = run;
    const auto mask = explain(model, ex.graph.view(), predicted, ec);
    const auto ranking = rank_sentences(mask, ex.graph);
    for (std::size_t r = 0; r < std::min(kExplainTopK, ranking.size()); ++r) {
      if (ranking[r].sentence_index == doc.marker_sentence.value()) {
        ++hits;
        break;
      }
    }
  }
  return {identity && hits >= kExplainMinHits,
          fmt("identity mask exact: %s; marker sentence in top %zu for %zu/%zu runs (need %zu), %.1f s",
              identity ? "yes" : "no", kExplainTopK, hits, kExplainRuns, kExplainMinHits, seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome round_trips() {
  Rng rng(8080);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < kRoundTrips; ++i) {
    const auto amr = generate_random_amr(rng.next_u64(), 1 + rng.below(15), 0.3);
    if (!equivalent(parse_penman_document(serialize_penman(amr)).at(0), amr)) ++failures;

    const auto g = flag_test::random_document(rng.next_u64(), 1 + rng.below(8), 12, 1 + rng.below(16));
    if (deserialize_graph(serialize_graph(g)) != g) ++failures;

    const std::size_t dim = 1 + rng.below(24);
    TokenEmbeddingArchive archive(dim);
    const std::size_t entries = rng.below(6);
    for (std::size_t e = 0; e < entries; ++e) {
      const auto tokens = static_cast<std::uint32_t>(rng.below(10));
      std::vector<float> data(tokens * dim);
      for (float& v : data) v = static_cast<float>(rng.normal(0.0, 1.0));
      archive.add("doc" + std::to_string(rng.below(4)), static_cast<std::uint32_t>(e), tokens, std::move(data));
    }
    if (TokenEmbeddingArchive::deserialize(archive.serialize()) != archive) ++failures;

    ModelConfig mc = flag_test::small_config(static_cast<LayerKind>(rng.below(3)), 1 + rng.below(12), rng.next_u64());
    mc.n_layers = 1 + rng.below(3);
    Model model(mc);
    const auto bytes = serialize_model(model);
    Model back = deserialize_model(bytes);
    bool same = back.config() == model.config() && serialize_model(back) == bytes;
    for (std::size_t p = 0; same && p < model.parameters().size(); ++p) {
      same = back.parameters()[p].value == model.parameters()[p].value;
    }
    failures += !same;
  }
  return {failures == 0, fmt("%zu random cases each for PENMAN, graph, embedding archive and checkpoint: %zu failures",
                             kRoundTrips, failures)};
}

// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the whole command pipeline in `root` and returns the files to compare.
std::map<std::string, std::string> pipeline(const std::filesystem::path& root) {
  std::ostringstream log;
  using namespace flag::cli;
  GenCorpusOptions gen;
  gen.out_dir = (root / "corpus").string();
  gen.seed = 11;
  gen.train_docs = 20;
  gen.test_docs = 8;
  gen.dim = 16;
  if (cmd_gen_corpus(gen, log) != 0) throw std::runtime_error("gen-corpus failed");
  const std::string manifest = gen.out_dir + "/manifest.jsonl";
  {
    std::ofstream conf(root / "run.conf");
    conf << slurp(gen.out_dir + "/flag.conf") << "epochs = 3\nlayers = 2\nheads = 2\nhidden_dim = 16\nexplain.epochs = 50\n";
  }
  const std::string config = (root / "run.conf").string();
  const std::string graphs = (root / "graphs").string();
  if (cmd_build_graphs({manifest, graphs, config, "", std::nullopt, 2}, log) != 0) throw std::runtime_error("build-graphs failed");
  const std::string labels = (root / "labels.jsonl").string();
  if (cmd_label({manifest, gen.out_dir + "/prices.csv", labels, Horizon::Daily, std::nullopt}, log) != 0) {
    throw std::runtime_error("label failed");
  }
  const std::string run = (root / "run").string();
  if (cmd_train({manifest, labels, graphs, config, run, std::nullopt}, log) != 0) throw std::runtime_error("train failed");
  const std::string ckpt = run + "/model.ckpt";
  if (cmd_eval({ckpt, manifest, labels, graphs, config, "test", (root / "eval.json").string(), std::nullopt}, log) != 0) {
    throw std::runtime_error("eval failed");
  }
  const auto entries = read_manifest(manifest);
  ExplainOptions ex;
  ex.graph = graph_path_for(graphs, entries.front().doc_id);
  ex.model = ckpt;
  ex.amr = entries.front().amr_path;
  ex.config = config;
  ex.out = (root / "explain").string();
  if (cmd_explain(ex, log) != 0) throw std::runtime_error("explain failed");

  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(graphs)) {
    files["graphs/" + entry.path().filename().string()] = slurp(entry.path());
  }
  for (const char* f : {"labels.jsonl", "run/train_log.tsv", "run/model.ckpt", "run/split.json", "eval.json",
                        "eval.json.txt", "explain.json"}) {
    files[f] = slurp(root / f);
  }
  return files;
}

Outcome reproducibility() {
  flag_test::TempDir a("repro_a"), b("repro_b");
  const auto t0 = std::chrono::steady_clock::now();
  const auto first = pipeline(a.path());
  const auto second = pipeline(b.path());
  std::size_t differing = 0;
  std::string example;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) {
      ++differing;
      if (example.empty()) example = name;
    }
  }
  const bool pass = differing == 0 && first.size() == second.size();
  return {pass, fmt("two pipeline runs with seed 11: %zu files compared, %zu differ%s%s, %.1f s", first.size(), differing,
                    example.empty() ? "" : " e.g. ", example.c_str(), seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome ablation() {
  const auto& d = planted();
  std::vector<cli::AblationRow> rows;
  for (LayerKind kind : {LayerKind::GATv2, LayerKind::GAT, LayerKind::GCN}) {
    auto& run = trained(kind);
    const auto& log = run.result.log;
    double best_val = log.front().val_loss;
    for (const auto& e : log) best_val = std::min(best_val, e.val_loss);
    rows.push_back({kind, log.back().train_loss, best_val, evaluate(run.result.model, d.test)});
  }
  std::cout << cli::format_ablation(rows);
  bool finite = true;
  for (const auto& r : rows) finite = finite && std::isfinite(r.final_train_loss) && std::isfinite(r.best_val_loss);
  const bool lowest = rows[0].final_train_loss <= std::min(rows[1].final_train_loss, rows[2].final_train_loss);
  return {finite, fmt("all three layer kinds trained; GATv2 lowest final training loss: %s (reported only)",
                      lowest ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"graph construction", graph_construction},
      {"gradient fidelity", acceptance::gradient_fidelity},
      {"attention normalization and permutation invariance", attention_and_permutation},
      {"planted-signal training", planted_training},
      {"label oracle", label_oracle},
      {"evaluation metrics", metrics},
      {"explanation recovery", explanations},
      {"serialization round trips", round_trips},
      {"pipeline reproducibility", reproducibility},
      {"layer ablation", ablation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
