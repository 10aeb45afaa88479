#include "myolo/tape.hpp"

#include <utility>

namespace myolo {

const Tensor& Var::value() const {
  if (!tape_) throw ValueError("value() on a default-constructed Var");
  return tape_->value(*this);
}

Var Tape::input(Tensor value, std::string name) {
  grads_.reset();
  nodes_.push_back(Node{name.empty() ? "input" : std::move(name),
                        std::move(value), {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs,
                 Backward backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    ids.push_back(v.id());
  }
  grads_.reset();
  nodes_.push_back(
      Node{std::move(op), std::move(value), std::move(ids), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

void Tape::seed(Var scalar) {
  check_owned(scalar);
  if (value(scalar).size() != 1) {
    throw ShapeError("seed must be a scalar, got " +
                     to_string(value(scalar).shape()));
  }
  grads_.reset();
  seed_ = scalar.id();
}

std::optional<Var> Tape::seed() const {
  if (!seed_) return std::nullopt;
  return Var(const_cast<Tape*>(this), *seed_);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

const std::string& Tape::op(Var v) const {
  check_owned(v);
  return nodes_[v.id()].op;
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw ValueError("variable is not recorded on this tape");
  }
}

const std::vector<Tensor>& Tape::backward() const {
  if (grads_) return *grads_;
  if (!seed_) throw ValueError("backward: tape has no seed");

  std::vector<bool> live(nodes_.size(), false);
  live[*seed_] = true;
  for (std::size_t i = *seed_ + 1; i-- > 0;) {
    if (!live[i]) continue;
    for (std::size_t in : nodes_[i].inputs) live[in] = true;
  }

  std::vector<Tensor> grads;
  grads.reserve(nodes_.size());
  for (const Node& node : nodes_) grads.emplace_back(node.value.shape());
  grads[*seed_][0] = 1.0;

  std::vector<const Tensor*> inputs;
  for (std::size_t i = *seed_ + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!live[i] || !node.backward) continue;
    inputs.clear();
    for (std::size_t in : node.inputs) inputs.push_back(&nodes_[in].value);
    std::vector<Tensor> local = node.backward(grads[i], inputs, node.value);
    if (local.size() != node.inputs.size()) {
      throw std::logic_error("backward of '" + node.op + "' returned " +
                             std::to_string(local.size()) + " gradients for " +
                             std::to_string(node.inputs.size()) + " inputs");
    }
    for (std::size_t k = 0; k < local.size(); ++k) {
      Tensor& acc = grads[node.inputs[k]];
      if (local[k].shape() != acc.shape()) {
        throw std::logic_error("backward of '" + node.op +
                               "' produced a gradient of dims " +
                               to_string(local[k].shape()) + " for input " +
                               to_string(acc.shape()));
      }
      for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += local[k][e];
    }
  }
  grads_ = std::move(grads);
  return *grads_;
}

Tensor grad(const Tape& tape, Var wrt) {
  if (wrt.tape() != &tape || wrt.id() >= tape.size()) {
    throw ValueError("grad: variable is not recorded on this tape");
  }
  return tape.backward()[wrt.id()];
}

namespace ad {
namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ValueError("uninitialised Var");
    if (t && v.tape() != t) throw ValueError("Vars belong to different tapes");
    t = v.tape();
  }
  return *t;
}

}  // namespace

Var conv2d(Var x, Var kernel, std::optional<Var> bias, std::size_t stride,
           std::size_t pad) {
  Tape& tape = bias ? same_tape({x, kernel, *bias}) : same_tape({x, kernel});
  Tensor y = ops::conv2d(x.value(), kernel.value(),
                         bias ? bias->value() : Tensor(), stride, pad);
  std::vector<Var> inputs{x, kernel};
  const bool has_bias = bias.has_value();
  if (has_bias) inputs.push_back(*bias);
  return tape.record(
      "conv2d", std::move(y), std::move(inputs),
      [stride, pad, has_bias](const Tensor& g, std::span<const Tensor* const> in,
                              const Tensor&) {
        auto r = ops::conv2d_backward(g, *in[0], *in[1], has_bias, stride, pad);
        std::vector<Tensor> out{std::move(r.dx), std::move(r.dkernel)};
        if (has_bias) out.push_back(std::move(r.dbias));
        return out;
      });
}

Var pool_global(Var x, PoolMode mode) {
  Tape& tape = same_tape({x});
  return tape.record(
      mode == PoolMode::avg ? "pool_global_avg" : "pool_global_max",
      ops::pool_global(x.value(), mode), {x},
      [mode](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        return std::vector<Tensor>{ops::pool_global_backward(g, *in[0], mode)};
      });
}

Var pool_channelwise(Var x, PoolMode mode) {
  Tape& tape = same_tape({x});
  return tape.record(
      mode == PoolMode::avg ? "pool_channel_avg" : "pool_channel_max",
      ops::pool_channelwise(x.value(), mode), {x},
      [mode](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        return std::vector<Tensor>{
            ops::pool_channelwise_backward(g, *in[0], mode)};
      });
}

Var dense(Var x, Var w, std::optional<Var> bias, Activation act) {
  Tape& tape = bias ? same_tape({x, w, *bias}) : same_tape({x, w});
  Tensor y = ops::dense(x.value(), w.value(), bias ? bias->value() : Tensor(), act);
  std::vector<Var> inputs{x, w};
  const bool has_bias = bias.has_value();
  if (has_bias) inputs.push_back(*bias);
  return tape.record(
      "dense", std::move(y), std::move(inputs),
      [has_bias, act](const Tensor& g, std::span<const Tensor* const> in,
                      const Tensor& y) {
        auto r = ops::dense_backward(g, *in[0], *in[1], y, has_bias, act);
        std::vector<Tensor> out{std::move(r.dx), std::move(r.dw)};
        if (has_bias) out.push_back(std::move(r.dbias));
        return out;
      });
}

Var upsample(Var x, std::size_t factor, UpsampleMode mode) {
  Tape& tape = same_tape({x});
  return tape.record(
      "upsample", ops::upsample(x.value(), factor, mode), {x},
      [factor, mode](const Tensor& g, std::span<const Tensor* const> in,
                     const Tensor&) {
        return std::vector<Tensor>{
            ops::upsample_backward(g, in[0]->shape(), factor, mode)};
      });
}

Var elementwise(Var a, Var b, BinaryOp op) {
  Tape& tape = same_tape({a, b});
  return tape.record(
      op == BinaryOp::add ? "add" : "mul",
      ops::elementwise(a.value(), b.value(), op), {a, b},
      [op](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        auto r = ops::elementwise_backward(g, *in[0], *in[1], op);
        return std::vector<Tensor>{std::move(r.da), std::move(r.db)};
      });
}

Var add(Var a, Var b) { return elementwise(a, b, BinaryOp::add); }
Var mul(Var a, Var b) { return elementwise(a, b, BinaryOp::mul); }

Var sigmoid(Var x) {
  Tape& tape = same_tape({x});
  return tape.record(
      "sigmoid", ops::sigmoid(x.value()), {x},
      [](const Tensor& g, std::span<const Tensor* const>, const Tensor& y) {
        return std::vector<Tensor>{ops::sigmoid_backward(g, y)};
      });
}

Var leaky_relu(Var x, double slope) {
  Tape& tape = same_tape({x});
  return tape.record(
      "leaky_relu", ops::leaky_relu(x.value(), slope), {x},
      [slope](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        return std::vector<Tensor>{ops::leaky_relu_backward(g, *in[0], slope)};
      });
}

Var concat_channels(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  return tape.record(
      "concat_channels", ops::concat_channels(a.value(), b.value()), {a, b},
      [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        const std::size_t plane = a.h() * a.w();
        const std::size_t ca = a.c(), cb = b.c();
        Tensor ga(a.shape()), gb(b.shape());
        for (std::size_t n = 0; n < a.n(); ++n) {
          for (std::size_t i = 0; i < ca * plane; ++i) {
            ga[n * ca * plane + i] = g[n * (ca + cb) * plane + i];
          }
          for (std::size_t i = 0; i < cb * plane; ++i) {
            gb[n * cb * plane + i] = g[(n * (ca + cb) + ca) * plane + i];
          }
        }
        return std::vector<Tensor>{std::move(ga), std::move(gb)};
      });
}

Var batch_norm(Var x, Var gamma, Var beta, Var mean, Var var, double eps) {
  Tape& tape = same_tape({x, gamma, beta, mean, var});
  return tape.record(
      "batch_norm",
      ops::batch_norm(x.value(), gamma.value(), beta.value(), mean.value(),
                      var.value(), eps),
      {x, gamma, beta, mean, var},
      [eps](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        auto r = ops::batch_norm_backward(g, *in[0], *in[1], *in[3], *in[4], eps);
        return std::vector<Tensor>{std::move(r.dx), std::move(r.dgamma),
                                   std::move(r.dbeta), std::move(r.dmean),
                                   std::move(r.dvar)};
      });
}

Var sum(Var x) {
  Tape& tape = same_tape({x});
  return tape.record(
      "sum", Tensor::scalar(ops::sum(x.value())), {x},
      [](const Tensor& g, std::span<const Tensor* const> in, const Tensor&) {
        return std::vector<Tensor>{Tensor(in[0]->shape(), g[0])};
      });
}

}  // namespace ad
}  // namespace myolo
