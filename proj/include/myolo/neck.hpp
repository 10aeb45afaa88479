#pragma once

// Mirror-detection neck: per-level DBL blocks, projection to a common width
// delta, and multi-resolution fusion.
//
// Two fusion schemes over a pyramid F_1 (finest) ... F_n (coarsest):
//   hypercolumn  sum_i up(m(F_i), 2^(i-1))
//   stairstep    acc = m(F_n); acc = up(acc, 2) + m(F_i) for i = n-1 .. 1
//
// Attention hooks for the ablation placements:
//   a  after every stairstep addition (n-1 hooks, delta channels)
//   b  after each per-level DBL       (n hooks, level width)
//   c  on each raw backbone level     (n hooks, level width)
//   d  once on the fused output       (1 hook, delta channels)

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "myolo/attention.hpp"
#include "myolo/fmap_io.hpp"
#include "myolo/ops.hpp"
#include "myolo/rng.hpp"
#include "myolo/tape.hpp"

namespace myolo {

enum class Placement { a, b, c, d, none };
enum class AttentionKind { cbam, se, none };

std::string_view to_string(Placement p);
std::string_view to_string(AttentionKind k);
std::string_view to_string(UpsampleMode m);
Placement parse_placement(std::string_view s);
AttentionKind parse_attention(std::string_view s);
UpsampleMode parse_upsample(std::string_view s);

/// Conv (no bias) + inference batch-norm + leaky relu.
struct DblParams {
  Tensor kernel;  // (out_c, in_c, k, k), k odd; padded to keep spatial size
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double leaky_slope = 0.1;

  void validate() const;
  static DblParams identity(std::size_t channels, double slope = 0.1);
  static DblParams random(std::size_t in_c, std::size_t out_c, std::size_t k,
                          Rng& rng, double slope = 0.1);
};

struct NeckConfig {
  std::size_t levels = 3;
  std::vector<std::size_t> widths{64, 128, 256};  // F_1 .. F_n channels
  std::size_t delta = 128;
  Placement placement = Placement::a;
  AttentionKind attention = AttentionKind::cbam;
  UpsampleMode upsample = UpsampleMode::nearest;
  std::size_t reduction = kDefaultReduction;
  std::size_t spatial_kernel = kDefaultSpatialKernel;
  std::size_t dbl_kernel = 1;
  double leaky_slope = 0.1;
  double bn_eps = 1e-5;

  void validate() const;

  /// `key=value` lines; '#' starts a comment. Unknown keys are an error.
  static NeckConfig parse(std::string_view text);
  static NeckConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  /// Channel width seen by each attention hook for the active placement.
  std::vector<std::size_t> hook_widths() const;
};

/// One attention hook; which member is used follows `kind`.
struct AttentionBlock {
  AttentionKind kind = AttentionKind::none;
  ChannelAttentionParams channel;
  SpatialAttentionParams spatial;
  SEParams se;

  static AttentionBlock zeros(AttentionKind kind, std::size_t channels,
                              std::size_t reduction, std::size_t spatial_kernel);
  static AttentionBlock random(AttentionKind kind, std::size_t channels,
                               std::size_t reduction,
                               std::size_t spatial_kernel, Rng& rng);
};

struct NeckParams {
  std::vector<DblParams> dbl;          // one per level
  std::vector<Tensor> projections;     // m weights, (delta, width_i, 1, 1)
  std::vector<AttentionBlock> hooks;   // sized by NeckConfig::hook_widths()

  void validate(const NeckConfig& cfg) const;

  static NeckParams random(const NeckConfig& cfg, Rng& rng);
  /// Random DBLs and projections, all attention parameters zero.
  static NeckParams random_with_zero_attention(const NeckConfig& cfg, Rng& rng);

  fmap::TensorMap to_tensors() const;
  static NeckParams from_tensors(const NeckConfig& cfg,
                                 const fmap::TensorMap& tensors);
};

/// Checks F_i spatial = 2 x F_{i+1} spatial and a shared batch size.
void validate_pyramid(std::span<const FeatureMap> pyramid);

// Differentiable forms.
struct DblVars {
  Var kernel, gamma, beta, mean, var;
  double eps;
  double slope;
};
DblVars bind(Tape& tape, const DblParams& p);

struct AttentionVars {
  AttentionKind kind = AttentionKind::none;
  ChannelAttentionVars channel;
  SpatialAttentionVars spatial;
  SEVars se;
};
AttentionVars bind(Tape& tape, const AttentionBlock& block);

namespace ad {
Var dbl(Var x, const DblVars& p);
Var project_m(Var x, Var weights);
Var attend(Var x, const AttentionVars& hook);
Var hypercolumn_fuse(std::span<const Var> pyramid, std::span<const Var> weights,
                     UpsampleMode mode);
Var stairstep_fuse(std::span<const Var> pyramid, std::span<const Var> weights,
                   UpsampleMode mode);
Var assemble_neck(std::span<const Var> pyramid, const NeckConfig& cfg,
                  std::span<const DblVars> dbl, std::span<const Var> projections,
                  std::span<const AttentionVars> hooks);
}  // namespace ad

FeatureMap dbl(const FeatureMap& x, const DblParams& p);
/// 1x1 projection to delta = weights.dim(0) channels.
FeatureMap project_m(const FeatureMap& x, const Tensor& weights);
FeatureMap hypercolumn_fuse(std::span<const FeatureMap> pyramid,
                            std::span<const Tensor> weights, UpsampleMode mode);
FeatureMap stairstep_fuse(std::span<const FeatureMap> pyramid,
                          std::span<const Tensor> weights, UpsampleMode mode);
FeatureMap assemble_neck(std::span<const FeatureMap> pyramid,
                         const NeckConfig& cfg, const NeckParams& params);

}  // namespace myolo
