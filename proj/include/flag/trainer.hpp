#pragma once

#include "flag/config.hpp"

// Temporal dataset splits and a per-document training loop with
// validation-based model selection. Classification metrics live here too.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flag/graph.hpp"
#include "flag/labeling.hpp"
#include "flag/model.hpp"

FLAG_NAMESPACE_BEGIN

struct DatasetItem {
  std::string doc_id;
  std::string graph_path;
  int label = 0;
  Date date;
};

struct SplitSpec {
  int test_year = 2019;
  double val_fraction = 0.2;
};

struct DatasetSplit {
  std::vector<DatasetItem> train;
  std::vector<DatasetItem> validation;
  std::vector<DatasetItem> test;
  SplitSpec spec;
};

/// Items dated in or after the test year form the test set. The rest are
/// shuffled with `seed` and the last round(val_fraction * n) become the
/// validation set. Throws InvalidArgument if any of the three sets is empty.
DatasetSplit make_split(std::vector<DatasetItem> items, const SplitSpec& spec, std::uint64_t seed);

struct Example {
  std::string doc_id;
  DocumentGraph graph;
  int label = 0;
};

std::vector<Example> load_examples(std::span<const DatasetItem> items);

enum class Selection { ValidationLoss, ValidationError };

std::string to_string(Selection s);
Selection parse_selection(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 20;
  double lr = 1e-5;
  std::uint64_t seed = 0;
  ModelConfig model;
  Selection selection = Selection::ValidationLoss;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_accuracy = 0;  // from the predictions made before each step
  double val_loss = 0;
  double val_error = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains with batch size 1, reshuffling the document order each epoch, and
/// returns the parameters of the epoch with the best validation score
/// (earliest on ties; training loss when there is no validation data).
/// Throws NumericError naming the document on a non-finite loss.
TrainResult train(std::span<const Example> train_set, std::span<const Example> validation_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean cross-entropy and error rate of the model over a set.
struct LossSummary {
  double loss = 0;
  double error = 0;
};
LossSummary summarize_loss(Model& model, std::span<const Example> examples);

struct EvalReport {
  std::size_t n_classes = 2;
  std::vector<std::vector<std::size_t>> confusion;  // [true class][predicted class]
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;

  std::size_t total() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate_predictions(std::span<const int> targets, std::span<const int> predictions, std::size_t n_classes);
EvalReport evaluate(Model& model, std::span<const Example> examples);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
/// Aligned text table with three decimals.
std::string report_to_table(const EvalReport& report, std::string_view title = "");
/// Writes `path` (JSON) and `path` + ".txt" (table).
void emit_report(const EvalReport& report, const std::string& path, std::string_view title = "");

/// Tab-separated per-epoch log with a header row.
std::string format_epoch_log(std::span<const EpochLog> log);

FLAG_NAMESPACE_END
