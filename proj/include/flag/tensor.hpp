#pragma once

#include "flag/config.hpp"

// Minimal reverse-mode engine over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Values live on the
// tape; Parameters outside it receive accumulated gradients when the tape is
// run backward. A tape can be run backward once.
//
// The scalar type is float by default; building with FLAG_REAL_DOUBLE
// switches the whole engine to double (used for finite-difference checks).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

FLAG_NAMESPACE_BEGIN

#ifdef FLAG_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// A trainable tensor with its gradient and Adam moment buffers.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), first_moment(rows, cols), second_moment(rows, cols) {}

  void zero_grad() { grad.fill(Real(0)); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  Var constant(Matrix value);
  /// Records the parameter's current value; backward() adds into p.grad.
  Var parameter(Parameter& p);
  /// While frozen, parameter() records plain constants that receive no gradient.
  void freeze_parameters(bool frozen) { frozen_ = frozen; }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. v (empty before backward).
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  /// Back-propagates from a 1x1 value. Throws if called twice.
  void backward(Var target);

  // -- operations ----------------------------------------------------------
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1 x cols row vector to every row of a.
  Var add_bias(Var a, Var bias);
  Var elu(Var a);
  Var leaky_relu(Var a, Real slope);
  Var sigmoid(Var a);
  /// out[k] = a[index[k]].
  Var gather_rows(Var a, std::span<const std::uint32_t> index);
  Var select_row(Var a, std::size_t r);
  /// Appends `count` rows of ones below a single-column matrix.
  Var pad_ones(Var a, std::size_t count);
  /// Multiplies row r of a by w[r] (w is rows x 1).
  Var scale_rows(Var a, Var w);
  /// out[e, h] = sum_c att[h, c] * leaky_relu(z[e, h*hd + c]).
  Var head_scores(Var z, Var att, std::size_t heads, Real slope);
  /// out[e, h] = sum_c att[h, c] * z[e, h*hd + c].
  Var head_project(Var z, Var att, std::size_t heads);
  /// Softmax of scores (E x H) over the edges sharing each destination.
  Var edge_softmax(Var scores, std::span<const std::uint32_t> dst, std::size_t n_nodes);
  /// out[dst[e], h*hd + c] += coef[e, h] * msg[e, h*hd + c]; coef has one
  /// column per head.
  Var aggregate(Var coef, Var msg, std::span<const std::uint32_t> dst, std::size_t n_nodes);
  /// -log softmax(logits)[target] for a 1 x C row, via log-sum-exp.
  Var cross_entropy(Var logits, std::size_t target);
  /// Weights w = sigmoid(logits) on trainable rows, exactly 1 elsewhere.
  Var edge_mask(Var logits, const std::vector<bool>& trainable);
  /// l1 * sum(w) + l2 * sum(binary entropy(w)) over the trainable rows.
  Var mask_penalty(Var weights, const std::vector<bool>& trainable, Real l1, Real l2);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> backprop);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  Matrix& g(Var v) { return nodes_[v.id].grad; }
  const Matrix& g_out(std::size_t self) const { return nodes_[self].grad; }
  const Matrix& val(Var v) const { return nodes_[v.id].value; }

  std::vector<Node> nodes_;
  bool consumed_ = false;
  bool frozen_ = false;
};

/// Softmax of a row in higher precision.
std::vector<double> softmax(std::span<const Real> logits);

FLAG_NAMESPACE_END
