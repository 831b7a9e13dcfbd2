// Copyright 2026 The Versewright Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over row-major Eigen matrices.
//
// A Tape records every operation of one forward pass. Parameters are leaves
// that point at caller-owned storage, so their gradients accumulate in place.
// With gradients disabled the tape only computes values.

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "versewright/common.hpp"
#include "versewright/rng.hpp"

namespace versewright {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool decay = true;  // subject to weight decay

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
  int id = -1;
};

template <class T>
class Tape {
 public:
  using M = Mat<T>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(M value) { return push(std::move(value), false); }

  Var param(Parameter<T>& p) {
    Node n;
    n.param = &p;
    n.needs_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  const M& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Gradient accumulator of `v`, allocated as zeros on first use.
  M& grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    M& g = n.param ? n.param->grad : n.grad;
    const M& val = n.param ? n.param->value : n.value;
    if (g.rows() != val.rows() || g.cols() != val.cols()) g.setZero(val.rows(), val.cols());
    return g;
  }

  /// Records a node whose backward receives the node's output gradient.
  Var record(M value, std::initializer_list<Var> inputs, std::function<void(const M&)> backward) {
    bool any = false;
    for (Var in : inputs) any = any || needs_grad(in);
    Var out = push(std::move(value), grad_enabled_ && any);
    if (nodes_.back().needs_grad) nodes_.back().backward = std::move(backward);
    return out;
  }

  /// Seeds d(out)/d(out) = 1 for a 1x1 node and runs every recorded backward.
  void backward(Var out) {
    VW_CHECK(grad_enabled_, "backward on a no-grad tape");
    VW_CHECK(value(out).size() == 1, "backward needs a scalar");
    grad(out).setOnes();
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(n.grad);
    }
  }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    check_inner(value(a).cols(), value(b).rows(), "matmul");
    M out = value(a) * value(b);
    return record(std::move(out), {a, b}, [this, a, b](const M& g) {
      if (needs_grad(a)) grad(a).noalias() += g * value(b).transpose();
      if (needs_grad(b)) grad(b).noalias() += value(a).transpose() * g;
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    check_inner(value(a).cols(), value(b).cols(), "matmul_nt");
    M out = value(a) * value(b).transpose();
    return record(std::move(out), {a, b}, [this, a, b](const M& g) {
      if (needs_grad(a)) grad(a).noalias() += g * value(b);
      if (needs_grad(b)) grad(b).noalias() += g.transpose() * value(a);
    });
  }

  Var add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw UsageError("add: shape mismatch");
    M out = value(a) + value(b);
    return record(std::move(out), {a, b}, [this, a, b](const M& g) {
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(b)) grad(b) += g;
    });
  }

  /// Adds a 1 x n row to every row of a.
  Var add_row(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) throw UsageError("add_row: shape mismatch");
    M out = value(a).rowwise() + value(row).row(0);
    return record(std::move(out), {a, row}, [this, a, row](const M& g) {
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(row)) grad(row) += g.colwise().sum();
    });
  }

  Var scale(Var a, T s) {
    M out = value(a) * s;
    return record(std::move(out), {a}, [this, a, s](const M& g) { grad(a) += g * s; });
  }

  /// Rows of `table` picked by `index`.
  Var gather(Var table, std::span<const int> index) {
    const M& t = value(table);
    M out(static_cast<Eigen::Index>(index.size()), t.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] < 0 || index[i] >= t.rows())
        throw UsageError("embedding index " + std::to_string(index[i]) + " out of range [0, " +
                         std::to_string(t.rows()) + ")");
      out.row(static_cast<Eigen::Index>(i)) = t.row(index[i]);
    }
    std::vector<int> idx(index.begin(), index.end());
    return record(std::move(out), {table}, [this, table, idx = std::move(idx)](const M& g) {
      M& gt = grad(table);
      for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  }

  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const M& xv = value(x);
    const Eigen::Index n = xv.rows(), d = xv.cols();
    M xhat(n, d);
    std::vector<T> inv_std(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      const T mean = xv.row(r).mean();
      const T var = (xv.row(r).array() - mean).square().mean();
      inv_std[static_cast<std::size_t>(r)] = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (xv.row(r).array() - mean) * inv_std[static_cast<std::size_t>(r)];
    }
    M out = (xhat.array().rowwise() * value(gain).row(0).array()).rowwise() + value(bias).row(0).array();
    return record(std::move(out), {x, gain, bias},
                  [this, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](const M& g) {
                    if (needs_grad(gain)) grad(gain) += (g.array() * xhat.array()).colwise().sum().matrix();
                    if (needs_grad(bias)) grad(bias) += g.colwise().sum();
                    if (!needs_grad(x)) return;
                    const M dxhat = (g.array().rowwise() * value(gain).row(0).array()).matrix();
                    M& gx = grad(x);
                    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                      const T m1 = dxhat.row(r).mean();
                      const T m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
                      gx.row(r).array() += inv_std[static_cast<std::size_t>(r)] *
                                           (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                  });
  }

  /// GELU, tanh approximation.
  Var gelu(Var x) {
    constexpr T k = T(0.7978845608028654);
    constexpr T c = T(0.044715);
    const M& xv = value(x);
    M out = xv.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); });
    return record(std::move(out), {x}, [this, x](const M& g) {
      const M& xv = value(x);
      grad(x).array() += g.array() * xv.unaryExpr([](T v) {
                                       const T t = std::tanh(k * (v + c * v * v * v));
                                       return T(0.5) * (T(1) + t) +
                                              T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
                                     }).array();
    });
  }

  /// Inverted dropout. Identity when p == 0 or rng is null.
  Var dropout(Var x, double p, Rng* rng) {
    if (p <= 0.0 || rng == nullptr) return x;
    const M& xv = value(x);
    M mask(xv.rows(), xv.cols());
    const T keep = T(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < p ? T(0) : keep;
    M out = xv.cwiseProduct(mask);
    return record(std::move(out), {x}, [this, x, mask = std::move(mask)](const M& g) {
      grad(x) += g.cwiseProduct(mask);
    });
  }

  Var cols(Var x, Eigen::Index start, Eigen::Index width) {
    M out = value(x).middleCols(start, width);
    return record(std::move(out), {x}, [this, x, start, width](const M& g) {
      grad(x).middleCols(start, width) += g;
    });
  }

  Var hconcat(const std::vector<Var>& parts) {
    VW_CHECK(!parts.empty(), "hconcat of nothing");
    Eigen::Index width = 0;
    for (Var p : parts) width += value(p).cols();
    M out(value(parts[0]).rows(), width);
    Eigen::Index c = 0;
    bool any = false;
    for (Var p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
      any = any || needs_grad(p);
    }
    Var res = push(std::move(out), grad_enabled_ && any);
    if (nodes_.back().needs_grad) {
      nodes_.back().backward = [this, parts](const M& g) {
        Eigen::Index c = 0;
        for (Var p : parts) {
          if (needs_grad(p)) grad(p) += g.middleCols(c, value(p).cols());
          c += value(p).cols();
        }
      };
    }
    return res;
  }

  /// Row softmax; with `causal`, entry (i, j) is masked out for j > i.
  Var softmax_rows(Var x, bool causal) {
    const M& xv = value(x);
    M out = M::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const Eigen::Index w = causal ? std::min<Eigen::Index>(r + 1, xv.cols()) : xv.cols();
      const T mx = xv.row(r).head(w).maxCoeff();
      out.row(r).head(w) = (xv.row(r).head(w).array() - mx).exp();
      out.row(r).head(w) /= out.row(r).head(w).sum();
    }
    return record(out, {x}, [this, x, y = out](const M& g) {
      const auto dot = (g.array() * y.array()).rowwise().sum().eval();
      grad(x).array() += y.array() * (g.array().colwise() - dot);
    });
  }

  Var sum(const std::vector<Var>& scalars) {
    VW_CHECK(!scalars.empty(), "sum of nothing");
    Var acc = scalars[0];
    for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
    return acc;
  }

 private:
  struct Node {
    M value;
    M grad;
    Parameter<T>* param = nullptr;
    std::function<void(const M&)> backward;
    bool needs_grad = false;
  };

  static void check_inner(Eigen::Index a, Eigen::Index b, const char* op) {
    if (a != b) throw UsageError(std::string(op) + ": inner dimensions differ");
  }

  Var push(M value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace versewright
