#include "flag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

using nlohmann::json;

std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

void check_label(const Example& ex, std::size_t n_classes) {
  if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= n_classes) {
    throw InvalidArgument("document " + ex.doc_id + " has label " + std::to_string(ex.label) + " outside [0, " +
                          std::to_string(n_classes) + ")");
  }
}

void check_inputs(std::span<const Example> examples, const ModelConfig& config) {
  for (const auto& ex : examples) {
    check_label(ex, config.n_classes);
    if (ex.graph.feature_dim != config.input_dim) {
      throw InvalidArgument("document " + ex.doc_id + " has feature dimension " + std::to_string(ex.graph.feature_dim) +
                            " but the model expects " + std::to_string(config.input_dim));
    }
  }
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

DatasetSplit make_split(std::vector<DatasetItem> items, const SplitSpec& spec, std::uint64_t seed) {
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must lie strictly between 0 and 1");
  }
  DatasetSplit split;
  split.spec = spec;
  std::vector<DatasetItem> rest;
  for (auto& item : items) {
    (year_of(item.date) >= spec.test_year ? split.test : rest).push_back(std::move(item));
  }
  Rng rng(mix_seed(seed, fnv1a("split")));
  rng.shuffle(rest.begin(), rest.end());
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(rest.size())));
  const auto cut = static_cast<std::ptrdiff_t>(rest.size() - std::min(n_val, rest.size()));
  split.train.assign(std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.begin() + cut));
  split.validation.assign(std::make_move_iterator(rest.begin() + cut), std::make_move_iterator(rest.end()));

  if (split.train.empty()) throw InvalidArgument("split leaves the training set empty");
  if (split.validation.empty()) throw InvalidArgument("split leaves the validation set empty");
  if (split.test.empty()) {
    throw InvalidArgument("split leaves the test set empty (no events in or after " + std::to_string(spec.test_year) + ")");
  }
  return split;
}

std::vector<Example> load_examples(std::span<const DatasetItem> items) {
  std::vector<Example> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    DocumentGraph g;
    try {
      g = load_graph(item.graph_path);
    } catch (const Error& e) {
      throw Error("document " + item.doc_id + ": " + e.what());
    }
    out.push_back({item.doc_id, std::move(g), item.label});
  }
  return out;
}

std::string to_string(Selection s) { return s == Selection::ValidationLoss ? "val_loss" : "val_error"; }

Selection parse_selection(std::string_view s) {
  if (s == "val_loss") return Selection::ValidationLoss;
  if (s == "val_error") return Selection::ValidationError;
  throw InvalidArgument("unknown selection '" + std::string(s) + "' (expected val_loss or val_error)");
}

LossSummary summarize_loss(Model& model, std::span<const Example> examples) {
  LossSummary s;
  if (examples.empty()) return s;
  for (const auto& ex : examples) {
    check_label(ex, model.config().n_classes);
    const auto logits = predict_logits(model, ex.graph.view());
    const auto p = softmax(logits);
    s.loss -= std::log(std::max(p[static_cast<std::size_t>(ex.label)], 1e-300));
    if (argmax(p) != static_cast<std::size_t>(ex.label)) s.error += 1;
  }
  s.loss /= static_cast<double>(examples.size());
  s.error /= static_cast<double>(examples.size());
  return s;
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> validation_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.epochs == 0) throw InvalidArgument("epochs must be at least 1");
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  config.model.validate();
  check_inputs(train_set, config.model);
  check_inputs(validation_set, config.model);

  TrainResult result{Model(config.model), {}, 0};
  Model& model = result.model;
  Adam adam(AdamConfig{config.lr});

  std::vector<Matrix> best;
  double best_score = 0;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, epoch));
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t idx : order) {
      const Example& ex = train_set[idx];
      ForwardTrace trace = model_forward(model, ex.graph.view());
      if (argmax(trace.probabilities()) == static_cast<std::size_t>(ex.label)) ++correct;
      model.zero_grad();
      const double loss = backward(trace, static_cast<std::size_t>(ex.label));
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss on document " + ex.doc_id + " in epoch " + std::to_string(epoch));
      }
      loss_sum += loss;
      adam.step(model.parameters());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_set.size());
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    const LossSummary val = summarize_loss(model, validation_set);
    entry.val_loss = val.loss;
    entry.val_error = val.error;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    double score = entry.train_loss;
    if (!validation_set.empty()) score = config.selection == Selection::ValidationLoss ? val.loss : val.error;
    if (epoch == 1 || score < best_score) {
      best_score = score;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.parameters()) best.push_back(p.value);
    }
  }

  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(best[i]);
  return result;
}

std::size_t EvalReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

EvalReport evaluate_predictions(std::span<const int> targets, std::span<const int> predictions, std::size_t n_classes) {
  if (targets.size() != predictions.size()) throw InvalidArgument("targets and predictions differ in length");
  if (targets.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  if (n_classes < 2) throw InvalidArgument("need at least two classes");

  EvalReport r;
  r.n_classes = n_classes;
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    const int p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
      throw InvalidArgument("class index out of range at position " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }

  std::size_t diag = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t tp = r.confusion[c][c];
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    const double prec = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double rec = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    r.precision.push_back(prec);
    r.recall.push_back(rec);
    r.f1.push_back(f1);
    diag += tp;
  }
  const double k = static_cast<double>(n_classes);
  r.accuracy = static_cast<double>(diag) / static_cast<double>(targets.size());
  r.macro_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / k;
  r.macro_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / k;
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / k;
  return r;
}

EvalReport evaluate(Model& model, std::span<const Example> examples) {
  std::vector<int> targets, predictions;
  for (const auto& ex : examples) {
    const auto p = softmax(predict_logits(model, ex.graph.view()));
    targets.push_back(ex.label);
    predictions.push_back(static_cast<int>(argmax(p)));
  }
  return evaluate_predictions(targets, predictions, model.config().n_classes);
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["n_classes"] = r.n_classes;
  j["n_documents"] = r.total();
  j["confusion"] = r.confusion;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.n_classes = j.at("n_classes").get<std::size_t>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    r.precision = j.at("precision").get<std::vector<double>>();
    r.recall = j.at("recall").get<std::vector<double>>();
    r.f1 = j.at("f1").get<std::vector<double>>();
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("evaluation report: ") + e.what());
  }
}

std::string report_to_table(const EvalReport& r, std::string_view title) {
  std::ostringstream out;
  if (!title.empty()) out << title << "\n";
  out << "Accuracy  Precision  Recall  F1\n";
  char line[96];
  std::snprintf(line, sizeof line, "%-8s  %-9s  %-6s  %s\n", fixed3(r.accuracy).c_str(),
                fixed3(r.macro_precision).c_str(), fixed3(r.macro_recall).c_str(), fixed3(r.macro_f1).c_str());
  out << line;
  out << "\nconfusion (rows: true class, columns: predicted class)\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out << "  " << t << ":";
    for (std::size_t v : r.confusion[t]) out << " " << v;
    out << "\n";
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::string& path, std::string_view title) {
  const std::string js = report_to_json(report);
  io::write_file(path, {js.begin(), js.end()});
  const std::string table = report_to_table(report, title);
  io::write_file(path + ".txt", {table.begin(), table.end()});
}

std::string format_epoch_log(std::span<const EpochLog> log) {
  std::ostringstream out;
  out << "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_error\n";
  char line[160];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%zu\t%.9g\t%.6f\t%.9g\t%.6f\n", e.epoch, e.train_loss, e.train_accuracy,
                  e.val_loss, e.val_error);
    out << line;
  }
  return out.str();
}

FLAG_NAMESPACE_END
