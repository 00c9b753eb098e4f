// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle onto a node holding values and an optional
// gradient buffer. Operations record a backward rule on the thread's active
// Tape (see TapeScope) whenever at least one input requires a gradient.
// Without an active tape nothing is recorded and operations are pure
// forward evaluation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace avcap {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Matrix from nested rows; every row must have the same length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);
  static Tensor uniform(Shape shape, double low, double high, std::mt19937_64& rng,
                        bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  /// Leading extent for rank-2 tensors (1 for rank 1).
  std::size_t rows() const;
  /// Trailing extent.
  std::size_t cols() const;

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && numel() > 0; }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy without gradient history.
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, bool);

  std::shared_ptr<TensorNode> node_;
};

/// Ordered record of differentiable operations. Inputs of every entry were
/// produced before the entry itself, so reverse replay is a valid
/// topological traversal.
class Tape {
 public:
  struct Entry {
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;
  };

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Populates gradients of every requires_grad tensor reachable from `loss`.
/// Gradients accumulate across fan-out and across repeated calls until
/// zero_grad() is called.
void backward(const Tensor& loss, Tape& tape);

// ---------------------------------------------------------------------------
// Primitives. All matrices are rank 2; vectors used as biases may be rank 1.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a length-n vector to every row of an m×n matrix.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Softmax along `axis` (0 = down columns, 1 = along rows) of a matrix.
Tensor softmax(const Tensor& x, int axis = 1);
/// Row softmax where `allowed[i*cols+j] == 0` excludes an entry. Rows with
/// no allowed entry produce all zeros.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed);
Tensor log_softmax(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Mean of -log softmax(logits)[t, targets[t]] over rows whose target is not
/// `ignore_id`. Returns 0 (with zero gradient) when every row is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id);

/// Inverted dropout; identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

/// Gathers rows of `table` (V×d) at `ids` into a |ids|×d matrix.
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// ---------------------------------------------------------------------------

/// Central finite-difference check of d f(x) / dx. `f` must return a scalar
/// and may read `x` through any path sharing its node. Returns the maximum
/// over coordinates of |a - n| / max(|a|, |n|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-5);

}  // namespace avcap
