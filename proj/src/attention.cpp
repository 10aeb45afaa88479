#include "myolo/attention.hpp"

#include <string>

namespace myolo {
namespace {

void validate_mlp(const Tensor& w0, const Tensor& w1, std::size_t reduction,
                  const char* what) {
  if (w0.rank() != 2 || w1.rank() != 2) {
    throw ShapeError(std::string(what) + ": MLP weights must be matrices");
  }
  const std::size_t c = w0.dim(1);
  const std::size_t hidden = w0.dim(0);
  if (w1.dim(0) != c || w1.dim(1) != hidden) {
    throw ShapeError(std::string(what) + ": w0 " + to_string(w0.shape()) +
                     " and w1 " + to_string(w1.shape()) + " do not chain");
  }
  if (reduction < 1 || c % reduction != 0 || c / reduction != hidden) {
    throw ShapeError(std::string(what) + ": reduction " +
                     std::to_string(reduction) + " inconsistent with " +
                     std::to_string(c) + " channels and hidden width " +
                     std::to_string(hidden));
  }
}

void require_channels(const Tensor& f, std::size_t expected, const char* what) {
  if (f.rank() != 4 || f.c() != expected) {
    throw ShapeError(std::string(what) + ": parameters expect " +
                     std::to_string(expected) + " channels, input is " +
                     to_string(f.shape()));
  }
}

Var mlp(Var v, Var w0, Var w1) {
  return ad::dense(ad::dense(v, w0, std::nullopt, Activation::relu), w1,
                   std::nullopt, Activation::none);
}

}  // namespace

std::size_t effective_reduction(std::size_t channels, std::size_t requested) {
  if (channels == 0) throw ValueError("effective_reduction: zero channels");
  std::size_t r = std::max<std::size_t>(1, std::min(requested, channels));
  while (channels % r != 0) --r;
  return r;
}

void ChannelAttentionParams::validate() const {
  validate_mlp(w0, w1, reduction, "channel attention");
}

ChannelAttentionParams ChannelAttentionParams::zeros(std::size_t channels,
                                                     std::size_t reduction) {
  const std::size_t r = effective_reduction(channels, reduction);
  return {Tensor({channels / r, channels}), Tensor({channels, channels / r}), r};
}

ChannelAttentionParams ChannelAttentionParams::random(std::size_t channels,
                                                      std::size_t reduction,
                                                      Rng& rng, double scale) {
  const std::size_t r = effective_reduction(channels, reduction);
  const std::size_t hidden = channels / r;
  Tensor w0 = rng.tensor({hidden, channels}, -scale, scale);
  Tensor w1 = rng.tensor({channels, hidden}, -scale, scale);
  return {std::move(w0), std::move(w1), r};
}

void SpatialAttentionParams::validate() const {
  if (kernel.rank() != 4 || kernel.dim(0) != 1 || kernel.dim(1) != 2 ||
      kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("spatial attention: kernel must be (1,2,k,k), got " +
                     to_string(kernel.shape()));
  }
  if (kernel.dim(2) % 2 == 0) {
    throw ShapeError("spatial attention: kernel size must be odd, got " +
                     std::to_string(kernel.dim(2)));
  }
}

SpatialAttentionParams SpatialAttentionParams::zeros(std::size_t k) {
  SpatialAttentionParams p{Tensor({1, 2, k, k}), 0.0};
  p.validate();
  return p;
}

SpatialAttentionParams SpatialAttentionParams::random(std::size_t k, Rng& rng,
                                                      double scale) {
  Tensor kernel = rng.tensor({1, 2, k, k}, -scale, scale);
  const double bias = rng.uniform(-scale, scale);
  SpatialAttentionParams p{std::move(kernel), bias};
  p.validate();
  return p;
}

void SEParams::validate() const { validate_mlp(w0, w1, reduction, "SE"); }

SEParams SEParams::zeros(std::size_t channels, std::size_t reduction) {
  auto p = ChannelAttentionParams::zeros(channels, reduction);
  return {std::move(p.w0), std::move(p.w1), p.reduction};
}

SEParams SEParams::random(std::size_t channels, std::size_t reduction, Rng& rng,
                          double scale) {
  auto p = ChannelAttentionParams::random(channels, reduction, rng, scale);
  return {std::move(p.w0), std::move(p.w1), p.reduction};
}

ChannelAttentionVars bind(Tape& tape, const ChannelAttentionParams& p) {
  p.validate();
  return {tape.input(p.w0, "ca.w0"), tape.input(p.w1, "ca.w1")};
}

SpatialAttentionVars bind(Tape& tape, const SpatialAttentionParams& p) {
  p.validate();
  return {tape.input(p.kernel, "sa.kernel"),
          tape.input(Tensor::scalar(p.bias), "sa.bias")};
}

SEVars bind(Tape& tape, const SEParams& p) {
  p.validate();
  return {tape.input(p.w0, "se.w0"), tape.input(p.w1, "se.w1")};
}

namespace ad {

Var channel_attention(Var f, const ChannelAttentionVars& p) {
  require_channels(f.value(), p.w0.value().dim(1), "channel attention");
  Var avg = mlp(pool_global(f, PoolMode::avg), p.w0, p.w1);
  Var max = mlp(pool_global(f, PoolMode::max), p.w0, p.w1);
  return sigmoid(add(avg, max));
}

Var spatial_attention(Var f, const SpatialAttentionVars& p) {
  if (f.value().rank() != 4) {
    throw ShapeError("spatial attention: expected (n,c,h,w), got " +
                     to_string(f.value().shape()));
  }
  const std::size_t k = p.kernel.value().dim(2);
  Var pooled = concat_channels(pool_channelwise(f, PoolMode::avg),
                               pool_channelwise(f, PoolMode::max));
  return sigmoid(conv2d(pooled, p.kernel, p.bias, 1, (k - 1) / 2));
}

Var apply_cbam(Var f, const ChannelAttentionVars& ca,
               const SpatialAttentionVars& sa) {
  Var refined = mul(f, channel_attention(f, ca));
  return mul(refined, spatial_attention(refined, sa));
}

Var apply_se(Var f, const SEVars& p) {
  require_channels(f.value(), p.w0.value().dim(1), "SE");
  Var gate = sigmoid(mlp(pool_global(f, PoolMode::avg), p.w0, p.w1));
  return mul(f, gate);
}

}  // namespace ad

FeatureMap channel_attention(const FeatureMap& f,
                             const ChannelAttentionParams& p) {
  Tape tape;
  return ad::channel_attention(tape.input(f), bind(tape, p)).value();
}

FeatureMap spatial_attention(const FeatureMap& f,
                             const SpatialAttentionParams& p) {
  Tape tape;
  return ad::spatial_attention(tape.input(f), bind(tape, p)).value();
}

FeatureMap apply_cbam(const FeatureMap& f, const ChannelAttentionParams& ca,
                      const SpatialAttentionParams& sa) {
  Tape tape;
  Var x = tape.input(f);
  return ad::apply_cbam(x, bind(tape, ca), bind(tape, sa)).value();
}

FeatureMap apply_se(const FeatureMap& f, const SEParams& p) {
  Tape tape;
  return ad::apply_se(tape.input(f), bind(tape, p)).value();
}

}  // namespace myolo
