#pragma once

// Reverse-mode differentiation over the op set in ops.hpp.
//
// A Tape owns every value produced while it records. Vars are lightweight
// handles (tape pointer + node index); they stay valid for the lifetime of
// the tape. A tape is single-writer: never record into one tape from two
// threads.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "myolo/ops.hpp"
#include "myolo/tensor.hpp"

namespace myolo {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Computes the input adjoints of one node from its output adjoint.
  using Backward = std::function<std::vector<Tensor>(
      const Tensor& gout, std::span<const Tensor* const> inputs,
      const Tensor& output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a leaf (an input or parameter).
  Var input(Tensor value, std::string name = {});

  /// Records an op node. `backward` must return one tensor per input, each
  /// shaped like that input.
  Var record(std::string op, Tensor value, std::vector<Var> inputs,
             Backward backward);

  /// Marks the scalar whose gradients backward() computes.
  void seed(Var scalar);
  std::optional<Var> seed() const;

  const Tensor& value(Var v) const;
  const std::string& op(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from the seed. Returns one gradient per node, shaped like
  /// the node's value (zeros for nodes the seed does not depend on).
  const std::vector<Tensor>& backward() const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    Backward backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::optional<std::size_t> seed_;
  mutable std::optional<std::vector<Tensor>> grads_;
};

/// d(seed)/d(wrt). Throws ValueError if the tape has no seed or `wrt` was not
/// recorded on it.
Tensor grad(const Tape& tape, Var wrt);

/// Differentiable counterparts of the kernels in ops.hpp.
namespace ad {

Var conv2d(Var x, Var kernel, std::optional<Var> bias, std::size_t stride,
           std::size_t pad);
Var pool_global(Var x, PoolMode mode);
Var pool_channelwise(Var x, PoolMode mode);
Var dense(Var x, Var w, std::optional<Var> bias, Activation act);
Var upsample(Var x, std::size_t factor, UpsampleMode mode);
Var elementwise(Var a, Var b, BinaryOp op);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var sigmoid(Var x);
Var leaky_relu(Var x, double slope);
Var concat_channels(Var a, Var b);
Var batch_norm(Var x, Var gamma, Var beta, Var mean, Var var, double eps);
/// Scalar sum of all elements, shaped (1).
Var sum(Var x);

}  // namespace ad
}  // namespace myolo
