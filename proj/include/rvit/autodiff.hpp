#pragma once

// Reverse-mode differentiation over a dynamic tape. A Tape is rebuilt for each
// forward pass; a Var is a handle to one recorded node. Tapes are confined to
// one thread.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "rvit/tensor.hpp"

namespace rvit::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradients of a scalar with respect to every leaf of the tape.
class Gradients {
 public:
  /// Gradient for a leaf created on the differentiated tape.
  const Tensor& of(const Var& leaf) const;
  std::size_t leaf_count() const { return by_id_.size(); }

 private:
  friend class Tape;
  std::vector<std::pair<int, Tensor>> by_id_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input; gradients never flow into it.
  Var constant(Tensor value);

  /// Sweeps the tape once in reverse from a scalar output. Consumes the tape.
  Gradients backward(const Var& output);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // -- for primitive implementations --
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of a node, zero-initialized on first access.
  std::vector<double>& grad(int id);
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_live() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Entry point matching the module contract: throws StateError for a Var
/// with no tape, ContractError for a non-scalar output.
Gradients backward(const Var& output);

// ---- primitives ----

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x[m x n] + v broadcast over rows (v has n elements).
Var add_row(const Var& x, const Var& v);
/// x[m x n] * v broadcast over rows (v has n elements).
Var mul_row(const Var& x, const Var& v);
Var scale(const Var& x, double c);
/// Elementwise product with a fixed mask; no gradient flows to the mask.
Var mask_multiply(const Var& x, const Tensor& mask);
/// Row-wise layer normalization over the last axis: gamma * (x - mu) / sqrt(var + eps) + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Exact GELU, x * Phi(x).
Var gelu(const Var& x);
Var relu(const Var& x);
/// Softmax over the last axis with max subtraction.
Var softmax_rows(const Var& x);
/// -log softmax(logits)[label]; logits may be any shape, read flat.
Var cross_entropy(const Var& logits, int label);
Var sum(const Var& x);
Var mean(const Var& x);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Reorders blocks along axis 0: out[i] = x[perm[i]].
Var permute_blocks(const Var& x, std::span<const int> perm);
/// out.flat[i] = x.flat[index[i]], or 0 where index[i] < 0.
Var gather(const Var& x, std::shared_ptr<const std::vector<std::int64_t>> index, Shape out_shape);
Var reshape(const Var& x, Shape shape);

}  // namespace rvit::ad
