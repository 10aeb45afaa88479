#pragma once

// CBAM channel/spatial attention and the squeeze-and-excitation baseline.
//
//   channel gate  Mc(F) = sigmoid(MLP(avgpool F) + MLP(maxpool F)),
//                 MLP(v) = W1 relu(W0 v), one MLP shared by both branches
//   spatial gate  Ms(F) = sigmoid(conv_kxk([mean_c F ; max_c F]))
//   CBAM          F' = F * Mc(F),  F'' = F' * Ms(F')
//   SE            F * sigmoid(W1 relu(W0 avgpool F))

#include <cstddef>

#include "myolo/rng.hpp"
#include "myolo/tape.hpp"
#include "myolo/tensor.hpp"

namespace myolo {

inline constexpr std::size_t kDefaultReduction = 16;
inline constexpr std::size_t kDefaultSpatialKernel = 7;

/// Largest divisor of `channels` not exceeding `requested`, so the MLP
/// bottleneck `channels / r` is a positive integer.
std::size_t effective_reduction(std::size_t channels, std::size_t requested);

/// Bottleneck MLP weights: w0 is (c/r, c), w1 is (c, c/r).
struct ChannelAttentionParams {
  Tensor w0;
  Tensor w1;
  std::size_t reduction = kDefaultReduction;

  std::size_t channels() const { return w0.dim(1); }
  std::size_t hidden() const { return w0.dim(0); }
  void validate() const;

  static ChannelAttentionParams zeros(std::size_t channels,
                                      std::size_t reduction = kDefaultReduction);
  static ChannelAttentionParams random(std::size_t channels,
                                       std::size_t reduction, Rng& rng,
                                       double scale = 0.5);
};

/// Spatial gate convolution: kernel is (1, 2, k, k) with odd k.
struct SpatialAttentionParams {
  Tensor kernel;
  double bias = 0.0;

  std::size_t kernel_size() const { return kernel.dim(2); }
  void validate() const;

  static SpatialAttentionParams zeros(std::size_t k = kDefaultSpatialKernel);
  static SpatialAttentionParams random(std::size_t k, Rng& rng,
                                       double scale = 0.5);
};

/// SE excitation weights, same layout as the channel-attention MLP.
struct SEParams {
  Tensor w0;
  Tensor w1;
  std::size_t reduction = kDefaultReduction;

  std::size_t channels() const { return w0.dim(1); }
  void validate() const;

  static SEParams zeros(std::size_t channels,
                        std::size_t reduction = kDefaultReduction);
  static SEParams random(std::size_t channels, std::size_t reduction, Rng& rng,
                         double scale = 0.5);
};

// Parameter sets lifted onto a tape so gradients can flow into them.
struct ChannelAttentionVars {
  Var w0;
  Var w1;
};
struct SpatialAttentionVars {
  Var kernel;
  Var bias;  // shape (1)
};
struct SEVars {
  Var w0;
  Var w1;
};

ChannelAttentionVars bind(Tape& tape, const ChannelAttentionParams& p);
SpatialAttentionVars bind(Tape& tape, const SpatialAttentionParams& p);
SEVars bind(Tape& tape, const SEParams& p);

namespace ad {
Var channel_attention(Var f, const ChannelAttentionVars& p);
Var spatial_attention(Var f, const SpatialAttentionVars& p);
Var apply_cbam(Var f, const ChannelAttentionVars& ca,
               const SpatialAttentionVars& sa);
Var apply_se(Var f, const SEVars& p);
}  // namespace ad

/// (n, c, 1, 1) channel weights, each strictly inside (0, 1).
FeatureMap channel_attention(const FeatureMap& f,
                             const ChannelAttentionParams& p);
/// (n, 1, h, w) spatial weights, each strictly inside (0, 1).
FeatureMap spatial_attention(const FeatureMap& f,
                             const SpatialAttentionParams& p);
FeatureMap apply_cbam(const FeatureMap& f, const ChannelAttentionParams& ca,
                      const SpatialAttentionParams& sa);
FeatureMap apply_se(const FeatureMap& f, const SEParams& p);

}  // namespace myolo
