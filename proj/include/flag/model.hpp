#pragma once

#include "flag/config.hpp"

// Document classifier: input projection, stacked graph attention (or GCN)
// layers over the document graph, and a two-layer linear head on the
// document node's final state.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flag/graph.hpp"
#include "flag/tensor.hpp"

FLAG_NAMESPACE_BEGIN

enum class LayerKind : std::uint32_t { GATv2 = 0, GAT = 1, GCN = 2 };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view s);

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 8;
  std::size_t hidden_dim = 512;
  std::size_t input_dim = 768;
  std::size_t n_classes = 2;
  LayerKind layer_kind = LayerKind::GATv2;
  float negative_slope = 0.2f;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return hidden_dim / n_heads; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Topology with one transient self-loop per node appended after the stored
/// edges. Built once per forward pass.
struct MessageGraph {
  std::size_t n_nodes = 0;
  std::size_t n_stored = 0;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<Real> gcn_norm;  // 1 / sqrt(deg(src) * deg(dst)), self-loops counted

  explicit MessageGraph(const GraphView& view);
};

class Model {
 public:
  struct Output {
    Var input_states;
    std::vector<Var> layer_states;  // one per GNN layer
    std::vector<Var> attention;     // (E + N) x heads per layer; empty for GCN
    Var readout;
    Var logits;
  };

  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  /// Records a forward pass. `edge_weights`, when given, is a (stored edges x 1)
  /// value multiplying each stored edge's message before aggregation.
  Output forward(Tape& tape, const GraphView& view, const MessageGraph& graph,
                 std::optional<Var> edge_weights = std::nullopt);

  /// One GNN layer on node states `h`; writes attention to `attention` if non-null.
  Var layer_forward(Tape& tape, std::size_t layer, Var h, const MessageGraph& graph,
                    std::optional<Var> edge_weights, Var* attention);

  /// Classification head: logits = (h W1 + b1) W2 + b2 on row `readout` of `states`.
  Var head(Tape& tape, Var states, std::size_t readout);

 private:
  Parameter& param(std::size_t i) { return params_[i]; }

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::size_t input_begin_ = 0;
  std::vector<std::size_t> layer_begin_;
  std::size_t head_begin_ = 0;
};

/// Cached state of one forward pass: the tape plus the handles needed to
/// read activations back and to run backward.
struct ForwardTrace {
  Tape tape;
  MessageGraph graph;
  Model::Output output;

  std::vector<Real> logits() const;
  std::vector<double> probabilities() const;
  /// Attention coefficients of layer l as (E + N) x heads.
  const Matrix& attention(std::size_t l) const { return tape.value(output.attention.at(l)); }
  const Matrix& layer_states(std::size_t l) const { return tape.value(output.layer_states.at(l)); }
};

ForwardTrace model_forward(Model& model, const GraphView& view);

/// Logits without keeping the trace.
std::vector<Real> predict_logits(Model& model, const GraphView& view);

/// Adds the cross-entropy of `target` to the trace and accumulates parameter
/// gradients into the model. Returns the loss. Throws if the trace was
/// already consumed.
Real backward(ForwardTrace& trace, std::size_t target);

/// -sum_k y_k log p_k for a probability vector and a one-hot target.
double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot);

/// Checkpoint layout:
///   "FLAGM1" | u32 n_layers | u32 n_heads | u32 hidden_dim | u32 input_dim |
///   u32 n_classes | u32 layer_kind | f32 negative_slope | u64 seed |
///   u32 n_params | per parameter { u32 rows | u32 cols | float32 values }
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers live in each Parameter.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update from the parameters' current gradients. Throws
  /// NumericError naming the parameter if a gradient is not finite.
  void step(std::span<Parameter> params);
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
};

FLAG_NAMESPACE_END
