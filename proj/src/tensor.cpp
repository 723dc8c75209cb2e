#include "flag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flag/error.hpp"

FLAG_NAMESPACE_BEGIN
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(std::string("dimension mismatch in ") + what);
}

Real lrelu(Real x, Real slope) { return x > Real(0) ? x : slope * x; }
Real lrelu_grad(Real x, Real slope) { return x > Real(0) ? Real(1) : slope; }

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  if (frozen_) return constant(p.value);
  Var v = push(p.value, true, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

void Tape::backward(Var target) {
  if (consumed_) throw Error("backward called twice on the same forward trace");
  const Matrix& t = nodes_[target.id].value;
  if (t.rows != 1 || t.cols != 1) throw InvalidArgument("backward target must be a scalar");
  consumed_ = true;

  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix(n.value.rows, n.value.cols);
  }
  if (!nodes_[target.id].requires_grad) return;
  nodes_[target.id].grad(0, 0) = Real(1);
  for (std::size_t i = target.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.param) {
      auto& dst = n.param->grad.data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad.data[k];
    }
  }
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  require(A.cols == B.rows, "matmul");
  Matrix out(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    Real* o = out.data.data() + i * out.cols;
    for (std::size_t p = 0; p < A.cols; ++p) {
      const Real x = A(i, p);
      if (x == Real(0)) continue;
      const Real* brow = B.data.data() + p * B.cols;
      for (std::size_t j = 0; j < B.cols; ++j) o[j] += x * brow[j];
    }
  }
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& A = t.val(a);
    const Matrix& B = t.val(b);
    if (t.needs(a)) {
      Matrix& GA = t.g(a);
      for (std::size_t i = 0; i < A.rows; ++i) {
        const Real* grow = G.data.data() + i * G.cols;
        for (std::size_t p = 0; p < A.cols; ++p) {
          const Real* brow = B.data.data() + p * B.cols;
          Real s = 0;
          for (std::size_t j = 0; j < B.cols; ++j) s += grow[j] * brow[j];
          GA(i, p) += s;
        }
      }
    }
    if (t.needs(b)) {
      Matrix& GB = t.g(b);
      for (std::size_t i = 0; i < A.rows; ++i) {
        const Real* grow = G.data.data() + i * G.cols;
        for (std::size_t p = 0; p < A.cols; ++p) {
          const Real x = A(i, p);
          if (x == Real(0)) continue;
          Real* gb = GB.data.data() + p * GB.cols;
          for (std::size_t j = 0; j < B.cols; ++j) gb[j] += x * grow[j];
        }
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  require(A.rows == B.rows && A.cols == B.cols, "add");
  Matrix out = A;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += B.data[k];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    for (Var v : {a, b}) {
      if (!t.needs(v)) continue;
      Matrix& GV = t.g(v);
      for (std::size_t k = 0; k < G.size(); ++k) GV.data[k] += G.data[k];
    }
  });
}

Var Tape::add_bias(Var a, Var bias) {
  const Matrix& A = val(a);
  const Matrix& B = val(bias);
  require(B.rows == 1 && B.cols == A.cols, "add_bias");
  Matrix out = A;
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += B.data[j];
  }
  return push(std::move(out), needs(a) || needs(bias), [a, bias](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    if (t.needs(a)) {
      Matrix& GA = t.g(a);
      for (std::size_t k = 0; k < G.size(); ++k) GA.data[k] += G.data[k];
    }
    if (t.needs(bias)) {
      Matrix& GB = t.g(bias);
      for (std::size_t i = 0; i < G.rows; ++i) {
        for (std::size_t j = 0; j < G.cols; ++j) GB.data[j] += G(i, j);
      }
    }
  });
}

Var Tape::elu(Var a) {
  Matrix out = val(a);
  for (Real& x : out.data) x = x > Real(0) ? x : std::expm1(x);
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& X = t.val(a);
    Matrix& GA = t.g(a);
    for (std::size_t k = 0; k < G.size(); ++k) {
      GA.data[k] += G.data[k] * (X.data[k] > Real(0) ? Real(1) : std::exp(X.data[k]));
    }
  });
}

Var Tape::leaky_relu(Var a, Real slope) {
  Matrix out = val(a);
  for (Real& x : out.data) x = lrelu(x, slope);
  return push(std::move(out), needs(a), [a, slope](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& X = t.val(a);
    Matrix& GA = t.g(a);
    for (std::size_t k = 0; k < G.size(); ++k) GA.data[k] += G.data[k] * lrelu_grad(X.data[k], slope);
  });
}

Var Tape::sigmoid(Var a) {
  Matrix out = val(a);
  for (Real& x : out.data) x = Real(1) / (Real(1) + std::exp(-x));
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& Y = t.nodes_[self].value;
    Matrix& GA = t.g(a);
    for (std::size_t k = 0; k < G.size(); ++k) GA.data[k] += G.data[k] * Y.data[k] * (Real(1) - Y.data[k]);
  });
}

Var Tape::gather_rows(Var a, std::span<const std::uint32_t> index) {
  const Matrix& A = val(a);
  Matrix out(index.size(), A.cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < A.rows, "gather_rows");
    std::copy_n(A.data.data() + index[k] * A.cols, A.cols, out.data.data() + k * A.cols);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return push(std::move(out), needs(a), [a, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    Matrix& GA = t.g(a);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Real* src = G.data.data() + k * G.cols;
      Real* dst = GA.data.data() + idx[k] * GA.cols;
      for (std::size_t j = 0; j < G.cols; ++j) dst[j] += src[j];
    }
  });
}

Var Tape::select_row(Var a, std::size_t r) {
  const std::uint32_t idx[] = {static_cast<std::uint32_t>(r)};
  return gather_rows(a, idx);
}

Var Tape::pad_ones(Var a, std::size_t count) {
  const Matrix& A = val(a);
  require(A.cols == 1, "pad_ones");
  Matrix out(A.rows + count, 1, Real(1));
  std::copy(A.data.begin(), A.data.end(), out.data.begin());
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    Matrix& GA = t.g(a);
    for (std::size_t k = 0; k < GA.size(); ++k) GA.data[k] += G.data[k];
  });
}

Var Tape::scale_rows(Var a, Var w) {
  const Matrix& A = val(a);
  const Matrix& W = val(w);
  require(W.cols == 1 && W.rows == A.rows, "scale_rows");
  Matrix out = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) *= W.data[i];
  }
  return push(std::move(out), needs(a) || needs(w), [a, w](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& A = t.val(a);
    const Matrix& W = t.val(w);
    if (t.needs(a)) {
      Matrix& GA = t.g(a);
      for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t j = 0; j < A.cols; ++j) GA(i, j) += G(i, j) * W.data[i];
      }
    }
    if (t.needs(w)) {
      Matrix& GW = t.g(w);
      for (std::size_t i = 0; i < A.rows; ++i) {
        Real s = 0;
        for (std::size_t j = 0; j < A.cols; ++j) s += G(i, j) * A(i, j);
        GW.data[i] += s;
      }
    }
  });
}

Var Tape::head_scores(Var z, Var att, std::size_t heads, Real slope) {
  const Matrix& Z = val(z);
  const Matrix& A = val(att);
  require(A.rows == heads && A.cols * heads == Z.cols, "head_scores");
  const std::size_t hd = A.cols;
  Matrix out(Z.rows, heads);
  for (std::size_t e = 0; e < Z.rows; ++e) {
    for (std::size_t h = 0; h < heads; ++h) {
      Real s = 0;
      for (std::size_t c = 0; c < hd; ++c) s += A(h, c) * lrelu(Z(e, h * hd + c), slope);
      out(e, h) = s;
    }
  }
  return push(std::move(out), needs(z) || needs(att), [z, att, heads, slope](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& Z = t.val(z);
    const Matrix& A = t.val(att);
    const std::size_t hd = A.cols;
    const bool gz = t.needs(z), ga = t.needs(att);
    for (std::size_t e = 0; e < Z.rows; ++e) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Real ds = G(e, h);
        for (std::size_t c = 0; c < hd; ++c) {
          const Real x = Z(e, h * hd + c);
          if (gz) t.g(z)(e, h * hd + c) += ds * A(h, c) * lrelu_grad(x, slope);
          if (ga) t.g(att)(h, c) += ds * lrelu(x, slope);
        }
      }
    }
  });
}

Var Tape::head_project(Var z, Var att, std::size_t heads) {
  const Matrix& Z = val(z);
  const Matrix& A = val(att);
  require(A.rows == heads && A.cols * heads == Z.cols, "head_project");
  const std::size_t hd = A.cols;
  Matrix out(Z.rows, heads);
  for (std::size_t e = 0; e < Z.rows; ++e) {
    for (std::size_t h = 0; h < heads; ++h) {
      Real s = 0;
      for (std::size_t c = 0; c < hd; ++c) s += A(h, c) * Z(e, h * hd + c);
      out(e, h) = s;
    }
  }
  return push(std::move(out), needs(z) || needs(att), [z, att, heads](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& Z = t.val(z);
    const Matrix& A = t.val(att);
    const std::size_t hd = A.cols;
    const bool gz = t.needs(z), ga = t.needs(att);
    for (std::size_t e = 0; e < Z.rows; ++e) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Real ds = G(e, h);
        for (std::size_t c = 0; c < hd; ++c) {
          if (gz) t.g(z)(e, h * hd + c) += ds * A(h, c);
          if (ga) t.g(att)(h, c) += ds * Z(e, h * hd + c);
        }
      }
    }
  });
}

Var Tape::edge_softmax(Var scores, std::span<const std::uint32_t> dst, std::size_t n_nodes) {
  const Matrix& S = val(scores);
  require(S.rows == dst.size(), "edge_softmax");
  const std::size_t H = S.cols;
  Matrix peak(n_nodes, H, -std::numeric_limits<Real>::infinity());
  for (std::size_t e = 0; e < S.rows; ++e) {
    require(dst[e] < n_nodes, "edge_softmax");
    for (std::size_t h = 0; h < H; ++h) peak(dst[e], h) = std::max(peak(dst[e], h), S(e, h));
  }
  Matrix out(S.rows, H);
  Matrix denom(n_nodes, H);
  for (std::size_t e = 0; e < S.rows; ++e) {
    for (std::size_t h = 0; h < H; ++h) {
      out(e, h) = std::exp(S(e, h) - peak(dst[e], h));
      denom(dst[e], h) += out(e, h);
    }
  }
  for (std::size_t e = 0; e < S.rows; ++e) {
    for (std::size_t h = 0; h < H; ++h) out(e, h) /= denom(dst[e], h);
  }
  std::vector<std::uint32_t> d(dst.begin(), dst.end());
  return push(std::move(out), needs(scores), [scores, d = std::move(d), n_nodes](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& Y = t.nodes_[self].value;
    const std::size_t H = Y.cols;
    Matrix dot(n_nodes, H);
    for (std::size_t e = 0; e < Y.rows; ++e) {
      for (std::size_t h = 0; h < H; ++h) dot(d[e], h) += Y(e, h) * G(e, h);
    }
    Matrix& GS = t.g(scores);
    for (std::size_t e = 0; e < Y.rows; ++e) {
      for (std::size_t h = 0; h < H; ++h) GS(e, h) += Y(e, h) * (G(e, h) - dot(d[e], h));
    }
  });
}

Var Tape::aggregate(Var coef, Var msg, std::span<const std::uint32_t> dst, std::size_t n_nodes) {
  const Matrix& C = val(coef);
  const Matrix& M = val(msg);
  require(C.rows == M.rows && C.rows == dst.size() && C.cols > 0 && M.cols % C.cols == 0, "aggregate");
  const std::size_t heads = C.cols;
  const std::size_t hd = M.cols / heads;
  Matrix out(n_nodes, M.cols);
  for (std::size_t e = 0; e < M.rows; ++e) {
    require(dst[e] < n_nodes, "aggregate");
    Real* o = out.data.data() + dst[e] * out.cols;
    const Real* m = M.data.data() + e * M.cols;
    for (std::size_t h = 0; h < heads; ++h) {
      const Real c = C(e, h);
      for (std::size_t k = h * hd; k < (h + 1) * hd; ++k) o[k] += c * m[k];
    }
  }
  std::vector<std::uint32_t> d(dst.begin(), dst.end());
  return push(std::move(out), needs(coef) || needs(msg), [coef, msg, d = std::move(d)](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& C = t.val(coef);
    const Matrix& M = t.val(msg);
    const std::size_t heads = C.cols;
    const std::size_t hd = M.cols / heads;
    const bool gc = t.needs(coef), gm = t.needs(msg);
    for (std::size_t e = 0; e < M.rows; ++e) {
      const Real* go = G.data.data() + d[e] * G.cols;
      const Real* m = M.data.data() + e * M.cols;
      for (std::size_t h = 0; h < heads; ++h) {
        if (gc) {
          Real s = 0;
          for (std::size_t k = h * hd; k < (h + 1) * hd; ++k) s += go[k] * m[k];
          t.g(coef)(e, h) += s;
        }
        if (gm) {
          const Real c = C(e, h);
          Real* gmr = t.g(msg).data.data() + e * M.cols;
          for (std::size_t k = h * hd; k < (h + 1) * hd; ++k) gmr[k] += c * go[k];
        }
      }
    }
  });
}

Var Tape::cross_entropy(Var logits, std::size_t target) {
  const Matrix& L = val(logits);
  require(L.rows == 1 && target < L.cols, "cross_entropy");
  const auto p = softmax(L.row(0));
  double peak = L.data[0];
  for (Real x : L.data) peak = std::max(peak, static_cast<double>(x));
  double sum = 0;
  for (Real x : L.data) sum += std::exp(static_cast<double>(x) - peak);
  const double loss = peak + std::log(sum) - static_cast<double>(L.data[target]);
  Matrix out(1, 1, static_cast<Real>(loss));
  return push(std::move(out), needs(logits), [logits, target, p](Tape& t, std::size_t self) {
    const Real g = t.g_out(self)(0, 0);
    Matrix& GL = t.g(logits);
    for (std::size_t k = 0; k < p.size(); ++k) {
      GL.data[k] += g * static_cast<Real>(p[k] - (k == target ? 1.0 : 0.0));
    }
  });
}

Var Tape::edge_mask(Var logits, const std::vector<bool>& trainable) {
  const Matrix& L = val(logits);
  require(L.cols == 1 && L.rows == trainable.size(), "edge_mask");
  Matrix out(L.rows, 1, Real(1));
  for (std::size_t e = 0; e < L.rows; ++e) {
    if (trainable[e]) out.data[e] = Real(1) / (Real(1) + std::exp(-L.data[e]));
  }
  return push(std::move(out), needs(logits), [logits, trainable](Tape& t, std::size_t self) {
    const Matrix& G = t.g_out(self);
    const Matrix& Y = t.nodes_[self].value;
    Matrix& GL = t.g(logits);
    for (std::size_t e = 0; e < Y.rows; ++e) {
      if (trainable[e]) GL.data[e] += G.data[e] * Y.data[e] * (Real(1) - Y.data[e]);
    }
  });
}

Var Tape::mask_penalty(Var weights, const std::vector<bool>& trainable, Real l1, Real l2) {
  constexpr Real kEps = Real(1e-15);
  const Matrix& W = val(weights);
  require(W.cols == 1 && W.rows == trainable.size(), "mask_penalty");
  double total = 0;
  for (std::size_t e = 0; e < W.rows; ++e) {
    if (!trainable[e]) continue;
    const double w = W.data[e];
    const double ent = -w * std::log(w + kEps) - (1 - w) * std::log(1 - w + kEps);
    total += l1 * w + l2 * ent;
  }
  Matrix out(1, 1, static_cast<Real>(total));
  return push(std::move(out), needs(weights), [weights, trainable, l1, l2](Tape& t, std::size_t self) {
    const Real g = t.g_out(self)(0, 0);
    const Matrix& W = t.val(weights);
    Matrix& GW = t.g(weights);
    for (std::size_t e = 0; e < W.rows; ++e) {
      if (!trainable[e]) continue;
      const Real w = W.data[e];
      const Real dent = -std::log(w + kEps) - w / (w + kEps) + std::log(1 - w + kEps) + (1 - w) / (1 - w + kEps);
      GW.data[e] += g * (l1 + l2 * dent);
    }
  });
}

std::vector<double> softmax(std::span<const Real> logits) {
  double peak = -std::numeric_limits<double>::infinity();
  for (Real x : logits) peak = std::max(peak, static_cast<double>(x));
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(static_cast<double>(logits[k]) - peak);
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return p;
}

FLAG_NAMESPACE_END
