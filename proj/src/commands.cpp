#include "flag/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "binary_io.hpp"
#include "flag/corpus.hpp"
#include "flag/embeddings.hpp"
#include "flag/error.hpp"
#include "flag/graph.hpp"
#include "flag/penman.hpp"

FLAG_NAMESPACE_BEGIN
namespace cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::size_t line) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ParseError(line, "invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path.string(), {text.begin(), text.end()}); }

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& p) {
  if (p.mode == "pseudo") return std::make_unique<PseudoEmbeddingProvider>(p.dim, p.seed);
  if (p.archive.empty()) throw InvalidArgument("provider.mode = file needs an embedding archive path");
  return std::make_unique<FileEmbeddingProvider>(TokenEmbeddingArchive::load(p.archive), p.dim);
}

std::string stats_table(std::size_t n_docs, const GraphStats& s) {
  char line[128];
  std::snprintf(line, sizeof line, "%-9zu  %-9.3f  %-9.3f  %.3f\n", n_docs, s.n_nodes, s.n_edges, s.avg_degree);
  return std::string("documents  avg nodes  avg edges  avg degree\n") + line;
}

std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

DatasetSplit split_for(const RunConfig& cfg, const std::string& manifest, const std::string& labels,
                       const std::string& graphs) {
  return make_split(assemble_dataset(manifest, labels, graphs), cfg.split, cfg.train.seed);
}

json ids(const std::vector<DatasetItem>& items) {
  json out = json::array();
  for (const auto& i : items) out.push_back(i.doc_id);
  return out;
}

void log_config(std::ostream& log, const RunConfig& cfg) {
  log << "resolved configuration:\n";
  std::istringstream in(format_run_config(cfg));
  for (std::string line; std::getline(in, line);) log << "  " << line << "\n";
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) throw ParseError(line_no, "missing value for " + std::string(key));

    auto size = [&] { return parse_number<std::size_t>(key, value, line_no); };
    auto real = [&] { return parse_number<double>(key, value, line_no); };
    try {
      if (key == "epochs") c.train.epochs = size();
      else if (key == "lr") c.train.lr = real();
      else if (key == "layers") c.train.model.n_layers = size();
      else if (key == "heads") c.train.model.n_heads = size();
      else if (key == "hidden_dim") c.train.model.hidden_dim = size();
      else if (key == "layer_kind") c.train.model.layer_kind = parse_layer_kind(value);
      else if (key == "seed") c.train.seed = parse_number<std::uint64_t>(key, value, line_no);
      else if (key == "selection") c.train.selection = parse_selection(value);
      else if (key == "split.test_year") c.split.test_year = parse_number<int>(key, value, line_no);
      else if (key == "split.val_fraction") c.split.val_fraction = real();
      else if (key == "provider.mode") {
        if (value != "file" && value != "pseudo") throw InvalidArgument("provider.mode must be file or pseudo");
        c.provider.mode = std::string(value);
      } else if (key == "provider.dim") c.provider.dim = size();
      else if (key == "provider.seed") c.provider.seed = parse_number<std::uint64_t>(key, value, line_no);
      else if (key == "provider.archive") c.provider.archive = std::string(value);
      else if (key == "explain.hops") c.explain.hops = size();
      else if (key == "explain.epochs") c.explain.epochs = size();
      else if (key == "explain.lr") c.explain.lr = real();
      else if (key == "explain.lambda_size") c.explain.lambda_size = real();
      else if (key == "explain.lambda_entropy") c.explain.lambda_entropy = real();
      else if (key == "explain.init_mean") c.explain.init_mean = real();
      else throw ParseError(line_no, "unknown configuration key '" + std::string(key) + "'");
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  sync_dimensions(c);
  c.train.model.seed = c.train.seed;
  c.explain.seed = c.train.seed;
  return c;
}

RunConfig load_run_config(const std::string& path) {
  try {
    return parse_run_config(io::read_text_file(path));
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "epochs = " << c.train.epochs << "\n"
      << "lr = " << shortest(c.train.lr) << "\n"
      << "layers = " << c.train.model.n_layers << "\n"
      << "heads = " << c.train.model.n_heads << "\n"
      << "hidden_dim = " << c.train.model.hidden_dim << "\n"
      << "layer_kind = " << to_string(c.train.model.layer_kind) << "\n"
      << "seed = " << c.train.seed << "\n"
      << "selection = " << to_string(c.train.selection) << "\n"
      << "split.test_year = " << c.split.test_year << "\n"
      << "split.val_fraction = " << shortest(c.split.val_fraction) << "\n"
      << "provider.mode = " << c.provider.mode << "\n"
      << "provider.dim = " << c.provider.dim << "\n"
      << "provider.seed = " << c.provider.seed << "\n";
  if (!c.provider.archive.empty()) out << "provider.archive = " << c.provider.archive << "\n";
  out << "explain.hops = " << c.explain.hops << "\n"
      << "explain.epochs = " << c.explain.epochs << "\n"
      << "explain.lr = " << shortest(c.explain.lr) << "\n"
      << "explain.lambda_size = " << shortest(c.explain.lambda_size) << "\n"
      << "explain.lambda_entropy = " << shortest(c.explain.lambda_entropy) << "\n"
      << "explain.init_mean = " << shortest(c.explain.init_mean) << "\n";
  return out.str();
}

void resolve_seed(RunConfig& config, std::optional<std::uint64_t> flag_seed) {
  std::optional<std::uint64_t> seed = flag_seed;
  if (!seed) {
    if (const char* env = std::getenv("FLAG_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument("FLAG_SEED is not an unsigned integer");
      seed = v;
    }
  }
  if (seed) config.train.seed = *seed;
  config.train.model.seed = config.train.seed;
  config.explain.seed = config.train.seed;
}

void sync_dimensions(RunConfig& config) { config.train.model.input_dim = config.provider.dim; }

std::string format_labels(const std::vector<LabelRecord>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += json{{"doc_id", l.doc_id}, {"horizon", to_string(l.horizon)}, {"label", l.label}}.dump() + "\n";
  }
  return out;
}

std::vector<LabelRecord> read_labels(const std::string& path) {
  std::istringstream in(io::read_text_file(path));
  std::vector<LabelRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      LabelRecord r{j.at("doc_id").get<std::string>(), parse_horizon(j.at("horizon").get<std::string>()),
                    j.at("label").get<int>()};
      if (r.label != 0 && r.label != 1) throw InvalidArgument("label must be 0 or 1");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("label record: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::string graph_path_for(const std::string& graphs_dir, const std::string& doc_id) {
  return (fs::path(graphs_dir) / (doc_id + ".graph")).string();
}

std::vector<DatasetItem> assemble_dataset(const std::string& manifest_path, const std::string& labels_path,
                                          const std::string& graphs_dir) {
  std::map<std::string, int, std::less<>> labels;
  for (const auto& r : read_labels(labels_path)) {
    if (!labels.emplace(r.doc_id, r.label).second) throw InvalidArgument("document " + r.doc_id + " labelled twice");
  }
  std::vector<DatasetItem> items;
  for (const auto& e : read_manifest(manifest_path)) {
    auto it = labels.find(e.doc_id);
    if (it == labels.end()) continue;
    items.push_back({e.doc_id, graph_path_for(graphs_dir, e.doc_id), it->second, e.call_date});
  }
  return items;
}

int cmd_gen_corpus(const GenCorpusOptions& opts, std::ostream& log) {
  CorpusConfig cfg;
  cfg.seed = opts.seed;
  cfg.n_train_docs = opts.train_docs;
  cfg.n_test_docs = opts.test_docs;
  cfg.embedding_dim = opts.dim;
  cfg.test_year = opts.test_year;
  cfg.marker = opts.marker;
  const SyntheticCorpus corpus = generate_corpus(cfg);
  write_corpus(corpus, opts.out_dir);

  RunConfig run;
  run.train.epochs = 60;
  run.train.lr = 1e-3;
  run.train.model.n_layers = 4;
  run.train.model.n_heads = 4;
  run.train.model.hidden_dim = 64;
  run.split.test_year = opts.test_year;
  run.provider.mode = "file";
  run.provider.dim = opts.dim;
  run.provider.archive = (fs::absolute(fs::path(opts.out_dir)) / "embeddings.flage").string();
  resolve_seed(run, opts.seed);
  write_text(fs::path(opts.out_dir) / "flag.conf", format_run_config(run));

  log << "wrote " << corpus.documents.size() << " documents (" << opts.train_docs << " before " << opts.test_year
      << ", " << opts.test_docs << " in it) to " << opts.out_dir << "\n";
  return 0;
}

int cmd_build_graphs(const BuildGraphsOptions& opts, std::ostream& log) {
  RunConfig cfg = config_from(opts.config);
  resolve_seed(cfg, opts.seed);
  if (!opts.embeddings.empty()) {
    cfg.provider.mode = "file";
    cfg.provider.archive = opts.embeddings;
  }
  log_config(log, cfg);
  const auto provider = make_provider(cfg.provider);
  const auto manifest = read_manifest(opts.manifest);
  fs::create_directories(opts.out_dir);

  const std::size_t n = manifest.size();
  std::vector<std::string> errors(n);
  std::vector<GraphSize> sizes(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& entry = manifest[i];
      try {
        const auto sentences = parse_penman_document(io::read_text_file(entry.amr_path));
        DocumentGraph g = build_document_graph(entry.doc_id, sentences);
        attach_features(g, sentences, *provider);
        save_graph(g, graph_path_for(opts.out_dir, entry.doc_id));
        sizes[i] = {g.nodes.size(), g.edges.size()};
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<GraphSize> ok;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i].empty()) {
      ok.push_back(sizes[i]);
    } else {
      ++failures;
      log << "error: document " << manifest[i].doc_id << ": " << errors[i] << "\n";
    }
  }
  if (!ok.empty()) {
    const std::string table = stats_table(ok.size(), graph_stats(ok));
    write_text(fs::path(opts.out_dir) / "stats.txt", table);
    log << table;
  }
  log << "built " << ok.size() << " of " << n << " graphs";
  if (failures) log << " (" << failures << " failed)";
  log << "\n";
  return failures ? 1 : 0;
}

int cmd_label(const LabelOptions& opts, std::ostream& log) {
  const auto manifest = read_manifest(opts.manifest);
  const auto prices = load_prices(opts.prices);
  std::vector<LabelRecord> records;
  std::size_t dropped = 0;
  for (const auto& e : manifest) {
    auto it = prices.find(e.ticker);
    std::optional<Label> label;
    if (it != prices.end()) label = make_label(it->second, {e.doc_id, e.ticker, e.call_date}, opts.horizon);
    if (!label) {
      ++dropped;
      continue;
    }
    records.push_back({e.doc_id, opts.horizon, label->value});
  }
  io::write_file(opts.out, [&] {
    const std::string s = format_labels(records);
    return std::vector<std::uint8_t>(s.begin(), s.end());
  }());
  log << "horizon " << to_string(opts.horizon) << ": labelled " << records.size() << " of " << manifest.size()
      << " events, dropped " << dropped << " unlabelable\n";
  return 0;
}

int cmd_train(const TrainOptions& opts, std::ostream& log) {
  RunConfig cfg = config_from(opts.config);
  resolve_seed(cfg, opts.seed);
  log_config(log, cfg);
  const DatasetSplit split = split_for(cfg, opts.manifest, opts.labels, opts.graphs_dir);
  log << "split: " << split.train.size() << " train, " << split.validation.size() << " validation, "
      << split.test.size() << " test\n";
  const auto train_set = load_examples(split.train);
  const auto val_set = load_examples(split.validation);

  const TrainResult result = train(train_set, val_set, cfg.train, [&](const EpochLog& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu  train_loss %.6f  train_acc %.3f  val_loss %.6f  val_error %.3f\n",
                  e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_error);
    log << line << std::flush;
  });

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  save_model(result.model, (out / "model.ckpt").string());
  write_text(out / "train_log.tsv", format_epoch_log(result.log));
  write_text(out / "split.json",
             json{{"train", ids(split.train)}, {"validation", ids(split.validation)}, {"test", ids(split.test)}}.dump(2) +
                 "\n");
  write_text(out / "config.txt", format_run_config(cfg));
  log << "selected epoch " << result.best_epoch << " by " << to_string(cfg.train.selection) << "; wrote "
      << (out / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const EvalOptions& opts, std::ostream& log) {
  RunConfig cfg = config_from(opts.config);
  resolve_seed(cfg, opts.seed);
  log_config(log, cfg);
  Model model = load_model(opts.model);
  const DatasetSplit split = split_for(cfg, opts.manifest, opts.labels, opts.graphs_dir);

  std::vector<DatasetItem> items;
  if (opts.split == "train") items = split.train;
  else if (opts.split == "validation") items = split.validation;
  else if (opts.split == "test") items = split.test;
  else if (opts.split == "all") {
    items = split.train;
    items.insert(items.end(), split.validation.begin(), split.validation.end());
    items.insert(items.end(), split.test.begin(), split.test.end());
  } else {
    throw InvalidArgument("unknown split '" + opts.split + "' (expected train, validation, test or all)");
  }
  const auto examples = load_examples(items);
  const EvalReport report = evaluate(model, examples);
  const std::string title = "split " + opts.split + " (" + std::to_string(examples.size()) + " documents)";
  if (!opts.out.empty()) emit_report(report, opts.out, title);
  log << report_to_table(report, title);
  return 0;
}

int cmd_explain(const ExplainOptions& opts, std::ostream& log) {
  RunConfig cfg = config_from(opts.config);
  resolve_seed(cfg, opts.seed);
  ExplainerConfig ecfg = cfg.explain;
  if (opts.hops) ecfg.hops = *opts.hops;
  if (opts.epochs) ecfg.epochs = *opts.epochs;
  log << "explainer: hops " << ecfg.hops << ", epochs " << ecfg.epochs << ", lr " << shortest(ecfg.lr)
      << ", lambda_size " << shortest(ecfg.lambda_size) << ", lambda_entropy " << shortest(ecfg.lambda_entropy)
      << ", seed " << ecfg.seed << "\n";

  const DocumentGraph graph = load_graph(opts.graph);
  Model model = load_model(opts.model);
  const GraphView view = graph.view();
  const auto probs = softmax(predict_logits(model, view));
  const std::size_t predicted = argmax(probs);

  const EdgeMask mask = explain(model, view, predicted, ecfg);
  const SentenceRanking ranking = rank_sentences(mask, graph);

  std::vector<std::string> texts;
  if (!opts.amr.empty()) {
    for (const auto& s : parse_penman_document(io::read_text_file(opts.amr))) texts.push_back(sentence_text(s));
    if (texts.size() != graph.n_sentences) {
      throw InvalidArgument("AMR file has " + std::to_string(texts.size()) + " sentences, graph has " +
                            std::to_string(graph.n_sentences));
    }
  }
  ExplanationReport report = emit_explanation(ranking, texts, opts.top_k);
  report.doc_id = graph.doc_id;
  report.predicted_class = static_cast<int>(predicted);
  report.probabilities = probs;

  if (!opts.out.empty()) {
    write_text(opts.out + ".json", explanation_to_json(report));
    write_text(opts.out + ".txt", explanation_to_table(report));
  }
  log << explanation_to_table(report);
  return 0;
}

int cmd_stats(const StatsOptions& opts, std::ostream& log) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(opts.graphs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".graph") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no .graph files in " + opts.graphs_dir);
  std::vector<GraphSize> sizes;
  for (const auto& f : files) {
    const DocumentGraph g = load_graph(f.string());
    sizes.push_back({g.nodes.size(), g.edges.size()});
  }
  const std::string table = stats_table(sizes.size(), graph_stats(sizes));
  if (!opts.out.empty()) write_text(opts.out, table);
  log << table;
  return 0;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "layer  train_loss  val_loss  accuracy  precision  recall  f1\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-5s  %-10.4f  %-8.4f  %-8.3f  %-9.3f  %-6.3f  %.3f\n",
                  to_string(r.kind).c_str(), r.final_train_loss, r.best_val_loss, r.test.accuracy,
                  r.test.macro_precision, r.test.macro_recall, r.test.macro_f1);
    out << line;
  }
  return out.str();
}

int cmd_ablate(const AblateOptions& opts, std::ostream& log) {
  RunConfig cfg = config_from(opts.config);
  resolve_seed(cfg, opts.seed);
  log_config(log, cfg);
  const DatasetSplit split = split_for(cfg, opts.manifest, opts.labels, opts.graphs_dir);
  const auto train_set = load_examples(split.train);
  const auto val_set = load_examples(split.validation);
  const auto test_set = load_examples(split.test);

  std::vector<AblationRow> rows;
  for (LayerKind kind : {LayerKind::GATv2, LayerKind::GAT, LayerKind::GCN}) {
    TrainConfig tc = cfg.train;
    tc.model.layer_kind = kind;
    TrainResult result = train(train_set, val_set, tc);
    AblationRow row;
    row.kind = kind;
    row.final_train_loss = result.log.back().train_loss;
    row.best_val_loss = result.log[result.best_epoch - 1].val_loss;
    row.test = evaluate(result.model, test_set);
    log << to_string(kind) << ": final train loss " << shortest(row.final_train_loss) << ", test accuracy "
        << shortest(row.test.accuracy) << "\n";
    rows.push_back(std::move(row));
  }

  const std::string table = format_ablation(rows);
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    write_text(fs::path(opts.out_dir) / "ablation.txt", table);
  }
  log << table;
  return 0;
}

}  // namespace cli
FLAG_NAMESPACE_END
