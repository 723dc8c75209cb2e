#pragma once

#include "flag/config.hpp"

// Implementations of the command-line subcommands. Each returns the process
// exit code and throws flag::Error on fatal input problems. Progress goes to
// `log`.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "flag/explainer.hpp"
#include "flag/labeling.hpp"
#include "flag/trainer.hpp"

FLAG_NAMESPACE_BEGIN
namespace cli {

struct ProviderConfig {
  std::string mode = "file";  // "file" or "pseudo"
  std::size_t dim = 768;
  std::uint64_t seed = 0;     // pseudo mode only
  std::string archive;        // file mode; a command-line path takes precedence
};

/// Everything a flat `key = value` configuration file can set.
struct RunConfig {
  TrainConfig train;
  SplitSpec split;
  ProviderConfig provider;
  ExplainerConfig explain;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// malformed values raise ParseError with the line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);
/// The resolved configuration in the same syntax parse_run_config accepts.
std::string format_run_config(const RunConfig& config);

/// Applies the seed precedence: command-line flag, then FLAG_SEED, then the
/// file. The seed drives training, model initialization and the explainer.
void resolve_seed(RunConfig& config, std::optional<std::uint64_t> flag_seed);

/// Keeps the model's input width in step with the embedding width.
void sync_dimensions(RunConfig& config);

struct LabelRecord {
  std::string doc_id;
  Horizon horizon = Horizon::Daily;
  int label = 0;
};
std::string format_labels(const std::vector<LabelRecord>& labels);
std::vector<LabelRecord> read_labels(const std::string& path);

std::string graph_path_for(const std::string& graphs_dir, const std::string& doc_id);

/// Joins manifest, labels and graph directory into dataset items; documents
/// without a label are skipped.
std::vector<DatasetItem> assemble_dataset(const std::string& manifest_path, const std::string& labels_path,
                                          const std::string& graphs_dir);

struct GenCorpusOptions {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t train_docs = 80;
  std::size_t test_docs = 32;
  std::size_t dim = 32;
  int test_year = 2019;
  std::string marker = "windfall";
};
int cmd_gen_corpus(const GenCorpusOptions& opts, std::ostream& log);

struct BuildGraphsOptions {
  std::string manifest;
  std::string out_dir;
  std::string config;      // optional
  std::string embeddings;  // optional archive path, overrides the config
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};
int cmd_build_graphs(const BuildGraphsOptions& opts, std::ostream& log);

struct LabelOptions {
  std::string manifest;
  std::string prices;
  std::string out;
  Horizon horizon = Horizon::Daily;
  std::optional<std::uint64_t> seed;
};
int cmd_label(const LabelOptions& opts, std::ostream& log);

struct TrainOptions {
  std::string manifest;
  std::string labels;
  std::string graphs_dir;
  std::string config;  // optional
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};
int cmd_train(const TrainOptions& opts, std::ostream& log);

struct EvalOptions {
  std::string model;
  std::string manifest;
  std::string labels;
  std::string graphs_dir;
  std::string config;  // optional
  std::string split = "test";  // train, validation, test or all
  std::string out;
  std::optional<std::uint64_t> seed;
};
int cmd_eval(const EvalOptions& opts, std::ostream& log);

struct ExplainOptions {
  std::string graph;
  std::string model;
  std::string amr;  // optional, supplies sentence text
  std::string config;
  std::optional<std::size_t> hops;
  std::optional<std::size_t> epochs;
  std::size_t top_k = 5;
  std::string out;  // prefix for .json and .txt; stdout when empty
  std::optional<std::uint64_t> seed;
};
int cmd_explain(const ExplainOptions& opts, std::ostream& log);

struct StatsOptions {
  std::string graphs_dir;
  std::string out;  // optional
};
int cmd_stats(const StatsOptions& opts, std::ostream& log);

struct AblateOptions {
  std::string manifest;
  std::string labels;
  std::string graphs_dir;
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct AblationRow {
  LayerKind kind = LayerKind::GATv2;
  double final_train_loss = 0;
  double best_val_loss = 0;
  EvalReport test;
};
std::string format_ablation(const std::vector<AblationRow>& rows);
int cmd_ablate(const AblateOptions& opts, std::ostream& log);

}  // namespace cli
FLAG_NAMESPACE_END
