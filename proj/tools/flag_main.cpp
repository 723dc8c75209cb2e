#include <CLI11.hpp>

#include <iostream>

#include "flag/commands.hpp"
#include "flag/error.hpp"

namespace {

using namespace flag::cli;

void add_seed(CLI::App* app, std::optional<std::uint64_t>& seed) {
  app->add_option_function<std::uint64_t>(
      "--seed", [&seed](const std::uint64_t& v) { seed = v; }, "Seed (overrides FLAG_SEED and the config file)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLAG: document graphs from AMR for earnings-call trend prediction"};
  app.require_subcommand(1);

  GenCorpusOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus with a planted signal");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--train-docs", gen.train_docs, "Documents dated before the test year");
  gen_cmd->add_option("--test-docs", gen.test_docs, "Documents dated in the test year");
  gen_cmd->add_option("--dim", gen.dim, "Embedding dimension");
  gen_cmd->add_option("--test-year", gen.test_year, "First test year");
  gen_cmd->add_option("--marker", gen.marker, "Marker concept of positive documents");

  BuildGraphsOptions build;
  auto* build_cmd = app.add_subcommand("build-graphs", "Build one document graph file per manifest entry");
  build_cmd->add_option("--manifest", build.manifest, "Corpus manifest (JSON Lines)")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", build.out_dir, "Output directory for graph files")->required();
  build_cmd->add_option("--config", build.config, "Configuration file")->check(CLI::ExistingFile);
  build_cmd->add_option("--embeddings", build.embeddings, "Token embedding archive")->check(CLI::ExistingFile);
  build_cmd->add_option("--threads", build.threads, "Worker threads");
  add_seed(build_cmd, build.seed);

  LabelOptions label;
  std::string horizon = "daily";
  auto* label_cmd = app.add_subcommand("label", "Label call events from closing prices");
  label_cmd->add_option("--manifest", label.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--prices", label.prices, "Price CSV")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--horizon", horizon, "daily or weekly")->check(CLI::IsMember({"daily", "weekly"}));
  label_cmd->add_option("--out", label.out, "Output labels (JSON Lines)")->required();
  add_seed(label_cmd, label.seed);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best epoch");
  train_cmd->add_option("--manifest", tr.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--labels", tr.labels, "Labels file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--graphs", tr.graphs_dir, "Graph directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", tr.config, "Configuration file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
  add_seed(train_cmd, tr.seed);

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--model", ev.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", ev.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--labels", ev.labels, "Labels file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--graphs", ev.graphs_dir, "Graph directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--config", ev.config, "Configuration file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", ev.split, "train, validation, test or all");
  eval_cmd->add_option("--out", ev.out, "Report path (JSON; a .txt table is written alongside)");
  add_seed(eval_cmd, ev.seed);

  ExplainOptions ex;
  auto* explain_cmd = app.add_subcommand("explain", "Rank the sentences of one document by edge-mask weight");
  explain_cmd->add_option("--graph", ex.graph, "Graph file")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--model", ex.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--amr", ex.amr, "AMR file supplying sentence text")->check(CLI::ExistingFile);
  explain_cmd->add_option("--config", ex.config, "Configuration file")->check(CLI::ExistingFile);
  explain_cmd->add_option_function<std::size_t>("--hops", [&](const std::size_t& v) { ex.hops = v; }, "Hop limit");
  explain_cmd->add_option_function<std::size_t>("--epochs", [&](const std::size_t& v) { ex.epochs = v; }, "Mask epochs");
  explain_cmd->add_option("--top-k", ex.top_k, "Sentences to report");
  explain_cmd->add_option("--out", ex.out, "Output prefix for .json and .txt");
  add_seed(explain_cmd, ex.seed);

  StatsOptions st;
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a directory of graph files");
  stats_cmd->add_option("--graphs", st.graphs_dir, "Graph directory")->required()->check(CLI::ExistingDirectory);
  stats_cmd->add_option("--out", st.out, "Write the table here as well");

  AblateOptions ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train every layer kind and compare");
  ablate_cmd->add_option("--manifest", ab.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--labels", ab.labels, "Labels file")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--graphs", ab.graphs_dir, "Graph directory")->required()->check(CLI::ExistingDirectory);
  ablate_cmd->add_option("--config", ab.config, "Configuration file")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", ab.out_dir, "Output directory");
  add_seed(ablate_cmd, ab.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return cmd_gen_corpus(gen, std::cout);
    if (*build_cmd) return cmd_build_graphs(build, std::cout);
    if (*label_cmd) {
      label.horizon = flag::parse_horizon(horizon);
      return cmd_label(label, std::cout);
    }
    if (*train_cmd) return cmd_train(tr, std::cout);
    if (*eval_cmd) return cmd_eval(ev, std::cout);
    if (*explain_cmd) return cmd_explain(ex, std::cout);
    if (*stats_cmd) return cmd_stats(st, std::cout);
    if (*ablate_cmd) return cmd_ablate(ab, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
