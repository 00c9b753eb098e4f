// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "avcap/errors.h"

namespace avcap {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

thread_local Tape* g_active_tape = nullptr;

ConstMapMatrix view(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMapMatrix(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapMatrix as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MapMatrix(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Records `rule` when a tape is active and some input needs gradients.
// `rule` receives the output node; it reads output->grad and accumulates
// into its captured input nodes.
template <typename Rule>
void record(std::initializer_list<const Tensor*> inputs, const Tensor& out, Rule rule) {
  Tape* tape = g_active_tape;
  if (tape == nullptr || !out.requires_grad()) return;
  Tape::Entry entry;
  for (const Tensor* t : inputs) entry.inputs.push_back(t->node());
  entry.output = out.node();
  TensorNode* out_raw = out.node().get();
  entry.backward = [rule = std::move(rule), out_raw]() mutable {
    if (out_raw->grad.empty()) return;
    rule(*out_raw);
  };
  tape->record(std::move(entry));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad && g_active_tape != nullptr;
  return Tensor(std::move(node));
}

Tensor::Tensor() : node_(std::make_shared<TensorNode>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got shape " + shape_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("matrix: empty input");
  std::vector<double> flat;
  flat.reserve(rows.size() * rows.front().size());
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw DimensionError("matrix: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), rows.front().size()}, std::move(flat));
}

Tensor Tensor::uniform(Shape shape, double low, double high, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(low, high);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() >= 2 ? shape()[rank() - 2] * (rank() == 3 ? shape()[0] : 1) : 1;
}

std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss, Tape& tape) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  const auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = view(a.node()->value, m, k) * view(b.node()->value, k, n);
  Tensor c = make_result({m, n}, std::move(out), any_requires_grad({&a, &b}));
  record({&a, &b}, c, [an = a.node(), bn = b.node(), m, k, n](TensorNode& cn) {
    auto dc = as_matrix(cn.grad, m, n);
    if (an->requires_grad) {
      an->ensure_grad();
      as_matrix(an->grad, m, k).noalias() += dc * view(bn->value, k, n).transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      as_matrix(bn->grad, k, n).noalias() += view(an->value, m, k).transpose() * dc;
    }
  });
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() =
      view(a.node()->value, m, k) * view(b.node()->value, n, k).transpose();
  Tensor c = make_result({m, n}, std::move(out), any_requires_grad({&a, &b}));
  record({&a, &b}, c, [an = a.node(), bn = b.node(), m, k, n](TensorNode& cn) {
    auto dc = as_matrix(cn.grad, m, n);
    if (an->requires_grad) {
      an->ensure_grad();
      as_matrix(an->grad, m, k).noalias() += dc * view(bn->value, n, k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      as_matrix(bn->grad, n, k).noalias() += dc.transpose() * view(an->value, m, k);
    }
  });
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  as_matrix(out, n, m) = view(a.node()->value, m, n).transpose();
  Tensor c = make_result({n, m}, std::move(out), a.requires_grad());
  record({&a}, c, [an = a.node(), m, n](TensorNode& cn) {
    an->ensure_grad();
    as_matrix(an->grad, m, n) += as_matrix(cn.grad, n, m).transpose();
  });
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor c = make_result(a.shape(), std::move(out), any_requires_grad({&a, &b}));
  record({&a, &b}, c, [an = a.node(), bn = b.node()](TensorNode& cn) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      n->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) n->grad[i] += cn.grad[i];
    }
  });
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor c = make_result(a.shape(), std::move(out), any_requires_grad({&a, &b}));
  record({&a, &b}, c, [an = a.node(), bn = b.node()](TensorNode& cn) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) an->grad[i] += cn.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) bn->grad[i] -= cn.grad[i];
    }
  });
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor c = make_result(a.shape(), std::move(out), any_requires_grad({&a, &b}));
  record({&a, &b}, c, [an = a.node(), bn = b.node()](TensorNode& cn) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) an->grad[i] += cn.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) bn->grad[i] += cn.grad[i] * an->value[i];
    }
  });
  return c;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  Tensor c = make_result(a.shape(), std::move(out), a.requires_grad());
  record({&a}, c, [an = a.node(), factor](TensorNode& cn) {
    an->ensure_grad();
    for (std::size_t i = 0; i < cn.grad.size(); ++i) an->grad[i] += cn.grad[i] * factor;
  });
  return c;
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row_vector");
  const auto m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row_vector: bias " + shape_string(bias.shape()) + " does not fit rows of " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(a.node()->value);
  const auto& bv = bias.node()->value;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  }
  Tensor c = make_result(a.shape(), std::move(out), any_requires_grad({&a, &bias}));
  record({&a, &bias}, c, [an = a.node(), bn = bias.node(), m, n](TensorNode& cn) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < cn.grad.size(); ++i) an->grad[i] += cn.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) bn->grad[j] += cn.grad[r * n + j];
      }
    }
  });
  return c;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  Tensor c = make_result(a.shape(), std::move(out), a.requires_grad());
  record({&a}, c, [an = a.node()](TensorNode& cn) {
    an->ensure_grad();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < cn.grad.size(); ++i) {
      if (an->value[i] > 0.0) an->grad[i] += cn.grad[i];
    }
  });
  return c;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor c = make_result({1}, {s}, a.requires_grad());
  record({&a}, c, [an = a.node()](TensorNode& cn) {
    an->ensure_grad();
    for (auto& g : an->grad) g += cn.grad[0];
  });
  return c;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

namespace {

// Row-wise softmax over entries where allowed (nullptr = all allowed).
std::vector<double> softmax_rows(const std::vector<double>& x, std::size_t m, std::size_t n,
                                 const std::uint8_t* allowed) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.data() + r * n;
    double* dst = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (allowed == nullptr || allowed[r * n + j]) mx = std::max(mx, row[j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (allowed == nullptr || allowed[r * n + j]) {
        dst[j] = std::exp(row[j] - mx);
        z += dst[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= z;
  }
  return out;
}

void softmax_rows_backward(const std::vector<double>& y, const std::vector<double>& dy, std::vector<double>& dx,
                           std::size_t m, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * dy[r * n + j];
    for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += y[r * n + j] * (dy[r * n + j] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require_matrix(x, "softmax");
  if (axis == 0) return transpose(softmax(transpose(x), 1));
  if (axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  const auto m = x.rows(), n = x.cols();
  Tensor y = make_result(x.shape(), softmax_rows(x.node()->value, m, n, nullptr), x.requires_grad());
  record({&x}, y, [xn = x.node(), yn = y.node().get(), m, n](TensorNode& cn) {
    xn->ensure_grad();
    softmax_rows_backward(yn->value, cn.grad, xn->grad, m, n);
  });
  return y;
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed) {
  require_matrix(x, "masked_softmax");
  const auto m = x.rows(), n = x.cols();
  if (allowed.size() != m * n) {
    throw DimensionError("masked_softmax: mask of " + std::to_string(allowed.size()) + " entries for scores " +
                         shape_string(x.shape()));
  }
  Tensor y = make_result(x.shape(), softmax_rows(x.node()->value, m, n, allowed.data()), x.requires_grad());
  record({&x}, y, [xn = x.node(), yn = y.node().get(), m, n](TensorNode& cn) {
    xn->ensure_grad();
    // Masked and fully-masked entries have y == 0 and receive no gradient.
    softmax_rows_backward(yn->value, cn.grad, xn->grad, m, n);
  });
  return y;
}

Tensor log_softmax(const Tensor& x) {
  require_matrix(x, "log_softmax");
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto& xv = x.node()->value;
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lz;
  }
  Tensor y = make_result(x.shape(), std::move(out), x.requires_grad());
  record({&x}, y, [xn = x.node(), yn = y.node().get(), m, n](TensorNode& cn) {
    xn->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += cn.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        xn->grad[r * n + j] += cn.grad[r * n + j] - std::exp(yn->value[r * n + j]) * gs;
      }
    }
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const auto m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias of " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " for input " + shape_string(x.shape()));
  }
  const auto& xv = x.node()->value;
  const auto& gv = gain.node()->value;
  const auto& bv = bias.node()->value;
  std::vector<double> xhat(m * n), out(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * inv_std[r];
      out[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
    }
  }
  Tensor y = make_result(x.shape(), std::move(out), any_requires_grad({&x, &gain, &bias}));
  record({&x, &gain, &bias}, y,
         [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat), inv_std = std::move(inv_std), m,
          n](TensorNode& cn) {
           const auto& dy = cn.grad;
           if (gn->requires_grad) {
             gn->ensure_grad();
             for (std::size_t r = 0; r < m; ++r) {
               for (std::size_t j = 0; j < n; ++j) gn->grad[j] += dy[r * n + j] * xhat[r * n + j];
             }
           }
           if (bn->requires_grad) {
             bn->ensure_grad();
             for (std::size_t r = 0; r < m; ++r) {
               for (std::size_t j = 0; j < n; ++j) bn->grad[j] += dy[r * n + j];
             }
           }
           if (xn->requires_grad) {
             xn->ensure_grad();
             const double inv_n = 1.0 / static_cast<double>(n);
             for (std::size_t r = 0; r < m; ++r) {
               double s1 = 0.0, s2 = 0.0;
               for (std::size_t j = 0; j < n; ++j) {
                 const double g = dy[r * n + j] * gn->value[j];
                 s1 += g;
                 s2 += g * xhat[r * n + j];
               }
               for (std::size_t j = 0; j < n; ++j) {
                 const double g = dy[r * n + j] * gn->value[j];
                 xn->grad[r * n + j] += inv_std[r] * (g - inv_n * s1 - xhat[r * n + j] * inv_n * s2);
               }
             }
           }
         });
  return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id) {
  require_matrix(logits, "cross_entropy");
  const auto m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  const auto& lv = logits.node()->value;
  std::vector<double> probs(m * n, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const int t = targets[r];
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= n) {
      throw IndexError("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(n));
    }
    const double* row = lv.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[r * n + j] = std::exp(row[j] - mx);
      z += probs[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= z;
    total -= row[t] - mx - std::log(z);
    ++counted;
  }
  const double denom = counted == 0 ? 0.0 : 1.0 / static_cast<double>(counted);
  Tensor loss = make_result({1}, {total * denom}, logits.requires_grad());
  std::vector<int> tgt(targets.begin(), targets.end());
  record({&logits}, loss,
         [ln = logits.node(), probs = std::move(probs), tgt = std::move(tgt), denom, ignore_id, m, n](TensorNode& cn) {
           ln->ensure_grad();
           const double g = cn.grad[0] * denom;
           if (g == 0.0) return;
           for (std::size_t r = 0; r < m; ++r) {
             if (tgt[r] == ignore_id) continue;
             for (std::size_t j = 0; j < n; ++j) ln->grad[r * n + j] += g * probs[r * n + j];
             ln->grad[r * n + static_cast<std::size_t>(tgt[r])] -= g;
           }
         });
  return loss;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double inv = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& v : mask) v = keep(rng) ? inv : 0.0;
  std::vector<double> out(x.numel());
  const auto& xv = x.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  Tensor y = make_result(x.shape(), std::move(out), x.requires_grad());
  record({&x}, y, [xn = x.node(), mask = std::move(mask)](TensorNode& cn) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < cn.grad.size(); ++i) xn->grad[i] += cn.grad[i] * mask[i];
  });
  return y;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  const auto v = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  std::vector<double> out(ids.size() * d);
  const auto& tv = table.node()->value;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v) +
                       " rows");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Tensor y = make_result({ids.size(), d}, std::move(out), table.requires_grad());
  record({&table}, y, [tn = table.node(), idv = std::vector<int>(ids.begin(), ids.end()), d](TensorNode& cn) {
    tn->ensure_grad();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      const std::size_t base = static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t j = 0; j < d; ++j) tn->grad[base + j] += cn.grad[i * d + j];
    }
  });
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  const auto n = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(x.shape()));
  }
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  Tensor y = make_result({count, n}, std::move(out), x.requires_grad());
  record({&x}, y, [xn = x.node(), begin, n](TensorNode& cn) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < cn.grad.size(); ++i) xn->grad[begin * n + i] += cn.grad[i];
  });
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const auto m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto& xv = x.node()->value;
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * n + begin), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  Tensor y = make_result({m, count}, std::move(out), x.requires_grad());
  record({&x}, y, [xn = x.node(), begin, count, m, n](TensorNode& cn) {
    xn->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < count; ++j) xn->grad[r * n + begin + j] += cn.grad[r * count + j];
    }
  });
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto n = parts.front().cols();
  std::size_t m = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    m += p.rows();
    needs_grad = needs_grad || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor y = make_result({m, n}, std::move(out), needs_grad);
  if (active_tape() != nullptr && y.requires_grad()) {
    Tape::Entry entry;
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    entry.inputs = nodes;
    entry.output = y.node();
    TensorNode* yn = y.node().get();
    entry.backward = [nodes = std::move(nodes), yn]() {
      if (yn->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& pn : nodes) {
        const auto sz = pn->value.size();
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < sz; ++i) pn->grad[i] += yn->grad[offset + i];
        }
        offset += sz;
      }
    };
    active_tape()->record(std::move(entry));
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const auto m = parts.front().rows();
  std::size_t n = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    n += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  std::vector<double> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto pc = p.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r * n + col));
    }
    col += pc;
  }
  Tensor y = make_result({m, n}, std::move(out), needs_grad);
  if (active_tape() != nullptr && y.requires_grad()) {
    Tape::Entry entry;
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    entry.inputs = nodes;
    entry.output = y.node();
    TensorNode* yn = y.node().get();
    entry.backward = [nodes = std::move(nodes), yn, m, n]() {
      if (yn->grad.empty()) return;
      std::size_t c0 = 0;
      for (const auto& pn : nodes) {
        const auto pc = pn->shape.back();
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < pc; ++j) pn->grad[r * pc + j] += yn->grad[r * n + c0 + j];
          }
        }
        c0 += pc;
      }
    };
    active_tape()->record(std::move(entry));
  }
  return y;
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(x);
    backward(loss, tape);
  }
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.zero_grad();

  auto values = x.values();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double fp = f(x).item();
    values[i] = orig - h;
    const double fm = f(x).item();
    values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace avcap
