// Copyright 2026 The Flexible Handover Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Matrix-valued reverse-mode differentiation. A Tape records every operation in
// creation order, which is already a topological order, so backward() is one
// reverse sweep. Ops are free functions over Var handles.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "handover/random.hpp"

namespace handover::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Named trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, int)>;

  /// With recording off, values are kept but no backward closures are stored.
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) { return push(std::move(value), nullptr); }

  Var<Scalar> parameter(Parameter<Scalar>& p) {
    Var<Scalar> v = push(p.value, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var<Scalar> push(Mat value, Backward backward) {
    Node n;
    n.value = std::move(value);
    if (record_) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const { return nodes_[id].value; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  /// Seeds d(root)/d(root) = 1 and accumulates into every reachable Parameter.
  void backward(Var<Scalar> root) {
    if (!record_) throw std::logic_error("backward() on a non-recording tape");
    if (root.value().size() != 1) throw std::invalid_argument("backward() needs a scalar root");
    grad(root.id).setOnes();
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param != nullptr) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter<Scalar>* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool record_;
};

namespace detail {
template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape != b.tape) throw std::invalid_argument("vars from different tapes");
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return a.tape->push(a.value() * b.value(), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    t.grad(a).noalias() += g * t.value(b).transpose();
    t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

/// a·bᵀ
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  return a.tape->push(a.value() * b.value().transpose(),
                      [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
                        const auto& g = t.grad(self);
                        t.grad(a).noalias() += g * t.value(b);
                        t.grad(b).noalias() += g.transpose() * t.value(a);
                      });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("add: shape mismatch");
  }
  return a.tape->push(a.value() + b.value(), [a = a.id, b = b.id](Tape<Scalar>& t, int self) {
    t.grad(a) += t.grad(self);
    t.grad(b) += t.grad(self);
  });
}

/// Adds a 1×n row to every row of a.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  detail::require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias shape mismatch");
  }
  Matrix<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->push(std::move(out), [a = a.id, r = row.id](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    t.grad(a) += g;
    t.grad(r) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  return a.tape->push(a.value() * s, [a = a.id, s](Tape<Scalar>& t, int self) {
    t.grad(a) += s * t.grad(self);
  });
}

/// Exact GeLU, x·Φ(x).
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  Matrix<Scalar> out = a.value().unaryExpr([inv_sqrt2](Scalar x) {
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2));
  });
  return a.tape->push(std::move(out), [a = a.id, inv_sqrt2](Tape<Scalar>& t, int self) {
    const Scalar inv_sqrt_2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
    const auto d = t.value(a).unaryExpr([&](Scalar x) {
      return Scalar(0.5) * (Scalar(1) + std::erf(x * inv_sqrt2)) +
             x * inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
    });
    t.grad(a) += t.grad(self).cwiseProduct(d);
  });
}

/// Row-wise layer normalization with learned gain and bias (both 1×n).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> a, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5)) {
  const Eigen::Index n = a.cols();
  const Matrix<Scalar>& x = a.value();
  Matrix<Scalar> xhat(x.rows(), n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().mean();
    inv_std[r] = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std[r];
  }
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return a.tape->push(std::move(out), [a = a.id, g = gain.id, b = bias.id, xhat, inv_std,
                                       n](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& dy = t.grad(self);
    t.grad(g) += (dy.cwiseProduct(xhat)).colwise().sum();
    t.grad(b) += dy.colwise().sum();
    Matrix<Scalar> dxhat = dy;
    dxhat.array().rowwise() *= t.value(g).row(0).array();
    Matrix<Scalar>& da = t.grad(a);
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      const Scalar mean_d = dxhat.row(r).mean();
      const Scalar mean_dx = dxhat.row(r).dot(xhat.row(r)) / Scalar(n);
      da.row(r).array() +=
          inv_std[r] * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
    }
  });
}

/// Softmax over each row, stabilized by max subtraction.
template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  Matrix<Scalar> p = a.value();
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    p.row(r).array() = (p.row(r).array() - p.row(r).maxCoeff()).exp();
    p.row(r) /= p.row(r).sum();
  }
  return a.tape->push(p, [a = a.id, p](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Matrix<Scalar>& da = t.grad(a);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const Scalar dot = g.row(r).dot(p.row(r));
      da.row(r).array() += p.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

/// Inverted dropout: zeroes entries with probability p and rescales the rest.
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  Matrix<Scalar> mask(a.rows(), a.cols());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < p ? Scalar(0) : keep_scale;
  }
  return a.tape->push(a.value().cwiseProduct(mask), [a = a.id, mask](Tape<Scalar>& t, int self) {
    t.grad(a) += t.grad(self).cwiseProduct(mask);
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  return a.tape->push(a.value().middleCols(start, count),
                      [a = a.id, start, count](Tape<Scalar>& t, int self) {
                        t.grad(a).middleCols(start, count) += t.grad(self);
                      });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to join");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(parts.front().rows(), cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id, at);
    at += p.cols();
  }
  return parts.front().tape->push(std::move(out), [spans](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    for (const auto& [id, start] : spans) {
      const Eigen::Index c = t.value(id).cols();
      t.grad(id) += g.middleCols(start, c);
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to join");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw std::invalid_argument("concat_rows: col mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, parts.front().cols());
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id, at);
    at += p.rows();
  }
  return parts.front().tape->push(std::move(out), [spans](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    for (const auto& [id, start] : spans) {
      const Eigen::Index r = t.value(id).rows();
      t.grad(id) += g.middleRows(start, r);
    }
  });
}

/// out.row(i) = table.row(indices[i]); gradients scatter-add back.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> table, std::vector<int> indices) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) throw std::out_of_range("gather_rows");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  return table.tape->push(std::move(out),
                          [tb = table.id, indices = std::move(indices)](Tape<Scalar>& t, int self) {
                            const Matrix<Scalar>& g = t.grad(self);
                            Matrix<Scalar>& dt = t.grad(tb);
                            for (std::size_t i = 0; i < indices.size(); ++i) {
                              dt.row(indices[i]) += g.row(static_cast<Eigen::Index>(i));
                            }
                          });
}

/// Log-softmax over consecutive column blocks of each row (block sizes sum to cols).
template <typename Scalar>
Var<Scalar> block_log_softmax(Var<Scalar> a, std::vector<Eigen::Index> blocks) {
  Eigen::Index total = 0;
  for (auto b : blocks) total += b;
  if (total != a.cols()) throw std::invalid_argument("block_log_softmax: blocks do not tile row");
  Matrix<Scalar> out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::Index at = 0;
    for (auto b : blocks) {
      auto seg = out.row(r).segment(at, b);
      const Scalar mx = seg.maxCoeff();
      const Scalar lse = mx + std::log((seg.array() - mx).exp().sum());
      seg.array() -= lse;
      at += b;
    }
  }
  Matrix<Scalar> probs = out.array().exp().matrix();
  return a.tape->push(std::move(out), [a = a.id, probs = std::move(probs),
                                       blocks = std::move(blocks)](Tape<Scalar>& t, int self) {
    const Matrix<Scalar>& g = t.grad(self);
    Matrix<Scalar>& da = t.grad(a);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      Eigen::Index at = 0;
      for (auto b : blocks) {
        const Scalar gsum = g.row(r).segment(at, b).sum();
        da.row(r).segment(at, b) += g.row(r).segment(at, b) - gsum * probs.row(r).segment(at, b);
        at += b;
      }
    }
  });
}

/// Σ w ∘ a as a 1×1 value; w is a constant.
template <typename Scalar>
Var<Scalar> weighted_sum(Var<Scalar> a, Matrix<Scalar> w) {
  if (w.rows() != a.rows() || w.cols() != a.cols()) {
    throw std::invalid_argument("weighted_sum: weight shape mismatch");
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().cwiseProduct(w).sum();
  return a.tape->push(std::move(out), [a = a.id, w = std::move(w)](Tape<Scalar>& t, int self) {
    t.grad(a) += t.grad(self)(0, 0) * w;
  });
}

template <typename Scalar>
bool all_finite(const Matrix<Scalar>& m) {
  return m.allFinite();
}

}  // namespace handover::ad
