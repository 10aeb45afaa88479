#pragma once

// Salient-object style evaluation of a prediction map against a binary mask,
// plus SSIM for dataset-level similarity.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "myolo/image.hpp"

namespace myolo::metrics {

inline constexpr double kDefaultBeta2 = 0.3;
inline constexpr double kEnhancedEps = 1e-8;
inline constexpr double kDefaultAlpha = 0.5;
inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr std::size_t kSimilaritySide = 256;

/// Mean |pred - gt|.
double mae(const PredictionMap& pred, const BinaryMask& gt);

/// min(2 * mean(pred), 1).
double adaptive_threshold(const PredictionMap& pred);

struct FBetaOptions {
  double beta2 = kDefaultBeta2;
  /// Fixed binarisation threshold; adaptive when unset.
  std::optional<double> threshold;
};

/// F-measure of pred binarised at the (adaptive) threshold. nullopt when the
/// ground truth has no foreground (the score is undefined there).
std::optional<double> f_beta(const PredictionMap& pred, const BinaryMask& gt,
                             const FBetaOptions& opt = {});

/// F-measure from precision and recall; 0 when the denominator vanishes.
double f_beta_from_pr(double precision, double recall, double beta2);

/// Enhanced-alignment measure of a binary prediction. `kEnhancedEps` floors
/// the alignment denominator rather than being added to it.
double e_measure(const BinaryMask& pred, const BinaryMask& gt);

/// Structure measure: alpha * object-aware + (1 - alpha) * region-aware.
double s_measure(const PredictionMap& pred, const BinaryMask& gt,
                 double alpha = kDefaultAlpha);

/// Component scores of s_measure, exposed for inspection.
double s_object(const PredictionMap& pred, const BinaryMask& gt);
double s_region(const PredictionMap& pred, const BinaryMask& gt);

/// Mean SSIM over all 11x11 Gaussian (sigma 1.5) windows that fit the image,
/// with C1 = 0.01^2 and C2 = 0.03^2 for data in [0, 1].
double ssim(const PredictionMap& a, const PredictionMap& b);

/// Pairs drawn without replacement from all i < j, in ascending order. All
/// pairs when `wanted` is 0 or covers them.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(
    std::size_t count, std::size_t wanted, std::uint64_t seed);

struct SimilarityResult {
  double mean_ssim = 0.0;
  std::size_t pairs = 0;
};

/// Mean SSIM over sampled distinct unordered pairs. Images must already share
/// one size. `threads` only changes wall time, never the result.
SimilarityResult dataset_similarity(std::span<const PredictionMap> images,
                                    std::size_t wanted,
                                    std::uint64_t seed = kDefaultSeed,
                                    std::size_t threads = 1);

}  // namespace myolo::metrics
