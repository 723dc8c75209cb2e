#include "flag/model.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "flag/error.hpp"
#include "flag/random.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

constexpr std::string_view kModelMagic = "FLAGM1";

// Per-layer parameter offsets.
namespace gatv2 {
constexpr std::size_t kSrcWeight = 0, kSrcBias = 1, kDstWeight = 2, kDstBias = 3, kAttention = 4, kBias = 5;
}
namespace gat {
constexpr std::size_t kWeight = 0, kAttSrc = 1, kAttDst = 2, kBias = 3;
}
namespace gcn {
constexpr std::size_t kWeight = 0, kBias = 1;
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix to_matrix(const GraphView& view) {
  Matrix x(view.n_nodes, view.feature_dim);
  for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] = static_cast<Real>(view.features[k]);
  return x;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::GATv2: return "gatv2";
    case LayerKind::GAT: return "gat";
    case LayerKind::GCN: return "gcn";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view s) {
  std::string lower(s);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "gatv2") return LayerKind::GATv2;
  if (lower == "gat") return LayerKind::GAT;
  if (lower == "gcn") return LayerKind::GCN;
  throw InvalidArgument("unknown layer kind '" + std::string(s) + "' (expected gatv2, gat or gcn)");
}

void ModelConfig::validate() const {
  if (n_layers == 0) throw InvalidArgument("n_layers must be at least 1");
  if (n_heads == 0 || hidden_dim == 0) throw InvalidArgument("n_heads and hidden_dim must be positive");
  if (hidden_dim % n_heads != 0) {
    throw InvalidArgument("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
  }
  if (input_dim == 0) throw InvalidArgument("input_dim must be positive");
  if (n_classes < 2) throw InvalidArgument("n_classes must be at least 2");
  if (!(negative_slope >= 0.0f)) throw InvalidArgument("negative_slope must be non-negative");
}

MessageGraph::MessageGraph(const GraphView& view) : n_nodes(view.n_nodes), n_stored(view.edges.size()) {
  src.reserve(n_stored + n_nodes);
  dst.reserve(n_stored + n_nodes);
  for (const auto& e : view.edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes) throw InvalidArgument("edge endpoint out of range");
    src.push_back(e.src);
    dst.push_back(e.dst);
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    src.push_back(static_cast<std::uint32_t>(i));
    dst.push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<double> deg(n_nodes, 0.0);
  for (auto d : dst) deg[d] += 1.0;
  gcn_norm.resize(src.size());
  for (std::size_t e = 0; e < src.size(); ++e) {
    gcn_norm[e] = static_cast<Real>(1.0 / std::sqrt(deg[src[e]] * deg[dst[e]]));
  }
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t H = config_.hidden_dim;
  const std::size_t heads = config_.n_heads;
  const std::size_t hd = config_.head_dim();

  std::vector<double> limits;  // uniform init range per parameter, 0 = zeros
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols, double limit) {
    params_.emplace_back(name, rows, cols);
    limits.push_back(limit);
  };

  input_begin_ = params_.size();
  add("input.weight", config_.input_dim, H, glorot(config_.input_dim, H));
  add("input.bias", 1, H, 0.0);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    layer_begin_.push_back(params_.size());
    const std::string p = "gnn" + std::to_string(l) + ".";
    switch (config_.layer_kind) {
      case LayerKind::GATv2:
        add(p + "src_weight", H, H, glorot(H, H));
        add(p + "src_bias", 1, H, 0.0);
        add(p + "dst_weight", H, H, glorot(H, H));
        add(p + "dst_bias", 1, H, 0.0);
        add(p + "attention", heads, hd, glorot(heads, hd));
        add(p + "bias", 1, H, 0.0);
        break;
      case LayerKind::GAT:
        add(p + "weight", H, H, glorot(H, H));
        add(p + "att_src", heads, hd, glorot(heads, hd));
        add(p + "att_dst", heads, hd, glorot(heads, hd));
        add(p + "bias", 1, H, 0.0);
        break;
      case LayerKind::GCN:
        add(p + "weight", H, H, glorot(H, H));
        add(p + "bias", 1, H, 0.0);
        break;
    }
  }
  head_begin_ = params_.size();
  add("head.w1", H, H, glorot(H, H));
  add("head.b1", 1, H, 0.0);
  add("head.w2", H, config_.n_classes, glorot(H, config_.n_classes));
  add("head.b2", 1, config_.n_classes, 0.0);

  Rng rng(mix_seed(config_.seed, 0x464c4147));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (limits[i] == 0.0) continue;
    for (Real& v : params_[i].value.data) v = static_cast<Real>(rng.uniform(-limits[i], limits[i]));
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Var Model::layer_forward(Tape& tape, std::size_t layer, Var h, const MessageGraph& graph,
                         std::optional<Var> edge_weights, Var* attention) {
  const std::size_t n = graph.n_nodes;
  const std::size_t heads = config_.n_heads;
  const std::size_t base = layer_begin_.at(layer);
  if (tape.value(h).rows != n || tape.value(h).cols != config_.hidden_dim) {
    throw InvalidArgument("layer input has the wrong shape");
  }
  std::optional<Var> full_weights;
  if (edge_weights) {
    if (tape.value(*edge_weights).rows != graph.n_stored) throw InvalidArgument("edge mask size mismatch");
    full_weights = tape.pad_ones(*edge_weights, n);
  }

  Var out;
  switch (config_.layer_kind) {
    case LayerKind::GATv2: {
      const Var xs = tape.add_bias(tape.matmul(h, tape.parameter(param(base + gatv2::kSrcWeight))),
                                   tape.parameter(param(base + gatv2::kSrcBias)));
      const Var xt = tape.add_bias(tape.matmul(h, tape.parameter(param(base + gatv2::kDstWeight))),
                                   tape.parameter(param(base + gatv2::kDstBias)));
      const Var msg = tape.gather_rows(xs, graph.src);
      const Var z = tape.add(msg, tape.gather_rows(xt, graph.dst));
      const Var scores = tape.head_scores(z, tape.parameter(param(base + gatv2::kAttention)), heads,
                                          static_cast<Real>(config_.negative_slope));
      Var alpha = tape.edge_softmax(scores, graph.dst, n);
      if (attention) *attention = alpha;
      if (full_weights) alpha = tape.scale_rows(alpha, *full_weights);
      out = tape.add_bias(tape.aggregate(alpha, msg, graph.dst, n), tape.parameter(param(base + gatv2::kBias)));
      break;
    }
    case LayerKind::GAT: {
      const Var p = tape.matmul(h, tape.parameter(param(base + gat::kWeight)));
      const Var s_src = tape.head_project(p, tape.parameter(param(base + gat::kAttSrc)), heads);
      const Var s_dst = tape.head_project(p, tape.parameter(param(base + gat::kAttDst)), heads);
      const Var scores = tape.leaky_relu(tape.add(tape.gather_rows(s_src, graph.src), tape.gather_rows(s_dst, graph.dst)),
                                         static_cast<Real>(config_.negative_slope));
      Var alpha = tape.edge_softmax(scores, graph.dst, n);
      if (attention) *attention = alpha;
      if (full_weights) alpha = tape.scale_rows(alpha, *full_weights);
      const Var msg = tape.gather_rows(p, graph.src);
      out = tape.add_bias(tape.aggregate(alpha, msg, graph.dst, n), tape.parameter(param(base + gat::kBias)));
      break;
    }
    case LayerKind::GCN: {
      const Var p = tape.matmul(h, tape.parameter(param(base + gcn::kWeight)));
      Matrix norm(graph.src.size(), 1);
      std::copy(graph.gcn_norm.begin(), graph.gcn_norm.end(), norm.data.begin());
      Var coef = tape.constant(std::move(norm));
      if (full_weights) coef = tape.scale_rows(coef, *full_weights);
      const Var msg = tape.gather_rows(p, graph.src);
      out = tape.add_bias(tape.aggregate(coef, msg, graph.dst, n), tape.parameter(param(base + gcn::kBias)));
      break;
    }
  }
  return tape.elu(out);
}

Var Model::head(Tape& tape, Var states, std::size_t readout) {
  const Var h = tape.select_row(states, readout);
  const Var x = tape.add_bias(tape.matmul(h, tape.parameter(param(head_begin_ + 0))), tape.parameter(param(head_begin_ + 1)));
  return tape.add_bias(tape.matmul(x, tape.parameter(param(head_begin_ + 2))), tape.parameter(param(head_begin_ + 3)));
}

Model::Output Model::forward(Tape& tape, const GraphView& view, const MessageGraph& graph,
                             std::optional<Var> edge_weights) {
  if (view.feature_dim != config_.input_dim) {
    throw InvalidArgument("graph features have width " + std::to_string(view.feature_dim) + ", model expects " +
                          std::to_string(config_.input_dim));
  }
  if (view.features.size() != view.n_nodes * view.feature_dim) throw InvalidArgument("feature matrix size mismatch");
  if (view.readout >= view.n_nodes) throw InvalidArgument("readout node out of range");

  Output out;
  const Var x = tape.constant(to_matrix(view));
  out.input_states = tape.elu(tape.add_bias(tape.matmul(x, tape.parameter(param(input_begin_))),
                                            tape.parameter(param(input_begin_ + 1))));
  Var h = out.input_states;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Var att;
    h = layer_forward(tape, l, h, graph, edge_weights, &att);
    out.layer_states.push_back(h);
    if (config_.layer_kind != LayerKind::GCN) out.attention.push_back(att);
  }
  out.readout = h;
  out.logits = head(tape, h, view.readout);
  return out;
}

std::vector<Real> ForwardTrace::logits() const {
  const Matrix& l = tape.value(output.logits);
  return l.data;
}

std::vector<double> ForwardTrace::probabilities() const { return softmax(tape.value(output.logits).row(0)); }

ForwardTrace model_forward(Model& model, const GraphView& view) {
  ForwardTrace trace{Tape{}, MessageGraph(view), {}};
  trace.output = model.forward(trace.tape, view, trace.graph);
  return trace;
}

std::vector<Real> predict_logits(Model& model, const GraphView& view) { return model_forward(model, view).logits(); }

Real backward(ForwardTrace& trace, std::size_t target) {
  if (trace.tape.consumed()) throw Error("backward called twice on the same forward trace");
  const Var loss = trace.tape.cross_entropy(trace.output.logits, target);
  trace.tape.backward(loss);
  return trace.tape.value(loss)(0, 0);
}

double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot) {
  if (probabilities.size() != one_hot.size() || probabilities.empty()) {
    throw InvalidArgument("probabilities and target differ in length");
  }
  double sum = 0;
  std::size_t ones = 0;
  std::size_t target = 0;
  for (std::size_t k = 0; k < one_hot.size(); ++k) {
    sum += probabilities[k];
    if (one_hot[k] == 1.0) {
      ++ones;
      target = k;
    } else if (one_hot[k] != 0.0) {
      throw InvalidArgument("target is not one-hot");
    }
  }
  if (ones != 1) throw InvalidArgument("target is not one-hot");
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("probabilities do not sum to 1");
  return -std::log(probabilities[target]);
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  const auto& c = model.config();
  io::ByteWriter w;
  w.magic(kModelMagic);
  w.u32(static_cast<std::uint32_t>(c.n_layers));
  w.u32(static_cast<std::uint32_t>(c.n_heads));
  w.u32(static_cast<std::uint32_t>(c.hidden_dim));
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.n_classes));
  w.u32(static_cast<std::uint32_t>(c.layer_kind));
  w.f32(c.negative_slope);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.u32(static_cast<std::uint32_t>(p.value.rows));
    w.u32(static_cast<std::uint32_t>(p.value.cols));
    for (Real v : p.value.data) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes.data(), bytes.size(), "model checkpoint");
  r.expect_magic(kModelMagic);
  ModelConfig c;
  c.n_layers = r.u32();
  c.n_heads = r.u32();
  c.hidden_dim = r.u32();
  c.input_dim = r.u32();
  c.n_classes = r.u32();
  const std::uint32_t kind = r.u32();
  if (kind > 2) throw FormatError("model checkpoint: unknown layer kind " + std::to_string(kind));
  c.layer_kind = static_cast<LayerKind>(kind);
  c.negative_slope = r.f32();
  c.seed = r.u64();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
  // Bound the allocation a corrupted header could request.
  if (c.hidden_dim > (1u << 16) || c.input_dim > (1u << 16) || c.n_layers > 1024 || c.n_classes > (1u << 16)) {
    throw FormatError("model checkpoint: implausible configuration");
  }
  Model model(c);
  const std::uint32_t n = r.u32();
  if (n != model.parameters().size()) throw FormatError("model checkpoint: parameter count mismatch");
  for (auto& p : model.parameters()) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows != p.value.rows || cols != p.value.cols) throw FormatError("model checkpoint: shape mismatch for " + p.name);
    for (Real& v : p.value.data) v = static_cast<Real>(r.f32());
  }
  r.expect_end();
  return model;
}

void save_model(const Model& model, const std::string& path) { io::write_file(path, serialize_model(model)); }

Model load_model(const std::string& path) {
  const auto bytes = io::read_file(path);
  return deserialize_model(bytes);
}

void Adam::step(std::span<Parameter> params) {
  for (const auto& p : params) {
    for (Real g : p.grad.data) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double g = p.grad.data[k];
      const double m = b1 * p.first_moment.data[k] + (1.0 - b1) * g;
      const double v = b2 * p.second_moment.data[k] + (1.0 - b2) * g * g;
      p.first_moment.data[k] = static_cast<Real>(m);
      p.second_moment.data[k] = static_cast<Real>(v);
      const double update = config_.lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
      p.value.data[k] = static_cast<Real>(static_cast<double>(p.value.data[k]) - update);
    }
  }
}

FLAG_NAMESPACE_END
