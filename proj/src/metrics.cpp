#include "myolo/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "myolo/parallel.hpp"
#include "myolo/rng.hpp"

namespace myolo::metrics {
namespace {

// Machine epsilon as used by the reference structure-measure code.
constexpr double kEps = std::numeric_limits<double>::epsilon();

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::size_t kWindow = 11;
constexpr double kWindowSigma = 1.5;

template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": dims " + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

double mask_mean(const BinaryMask& m) {
  return static_cast<double>(m.count()) / static_cast<double>(m.size());
}

// Similarity of a region's prediction values to a uniform target.
double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = values.size() > 1
                        ? std::sqrt(var / static_cast<double>(values.size() - 1))
                        : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

struct Rect {
  std::size_t y0, y1, x0, x1;  // half-open
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

double region_similarity(const PredictionMap& pred, const BinaryMask& gt,
                         const Rect& r) {
  const auto n = static_cast<double>(r.area());
  double mx = 0.0, my = 0.0;
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      mx += pred(y, x);
      my += gt(y, x) ? 1.0 : 0.0;
    }
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const double dx = pred(y, x) - mx;
      const double dy = (gt(y, x) ? 1.0 : 0.0) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  const double denom = n - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable 'valid' Gaussian filtering of a row-major plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t H,
                                 std::size_t W,
                                 const std::array<double, kWindow>& w) {
  const std::size_t OW = W - kWindow + 1;
  const std::size_t OH = H - kWindow + 1;
  std::vector<double> rows(H * OW);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < OW; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += w[k] * src[y * W + x + k];
      rows[y * OW + x] = acc;
    }
  }
  std::vector<double> out(OH * OW);
  for (std::size_t y = 0; y < OH; ++y) {
    for (std::size_t x = 0; x < OW; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += w[k] * rows[(y + k) * OW + x];
      out[y * OW + x] = acc;
    }
  }
  return out;
}

}  // namespace

double mae(const PredictionMap& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i] - (gt[i] ? 1.0 : 0.0));
  }
  return acc / static_cast<double>(pred.size());
}

double adaptive_threshold(const PredictionMap& pred) {
  return std::min(2.0 * pred.mean(), 1.0);
}

double f_beta_from_pr(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (!(denom > 0.0)) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

std::optional<double> f_beta(const PredictionMap& pred, const BinaryMask& gt,
                             const FBetaOptions& opt) {
  require_same_dims(pred, gt, "f_beta");
  if (gt.count() == 0) return std::nullopt;
  const double thr = opt.threshold.value_or(adaptive_threshold(pred));
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= thr;
    if (p && gt[i]) ++tp;
    else if (p) ++fp;
    else if (gt[i]) ++fn;
  }
  const double precision =
      tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return f_beta_from_pr(precision, recall, opt.beta2);
}

double e_measure(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "e_measure");
  const double gt_mean = mask_mean(gt);
  const double pred_mean = mask_mean(pred);
  if (gt.count() == 0) return 1.0 - pred_mean;
  if (gt.count() == gt.size()) return pred_mean;
  double acc = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double bp = (pred[i] ? 1.0 : 0.0) - pred_mean;
    const double bg = (gt[i] ? 1.0 : 0.0) - gt_mean;
    const double align = 2.0 * bp * bg / std::max(bp * bp + bg * bg, kEnhancedEps);
    acc += 0.25 * (1.0 + align) * (1.0 + align);
  }
  return acc / static_cast<double>(gt.size());
}

double s_object(const PredictionMap& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "s_object");
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i]) fg.push_back(pred[i]);
    else bg.push_back(1.0 - pred[i]);
  }
  const double u = mask_mean(gt);
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double s_region(const PredictionMap& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "s_region");
  const std::size_t H = gt.height(), W = gt.width();
  // Split point: the rounded foreground centroid in 1-based pixel indices,
  // i.e. the number of columns / rows in the left / top parts.
  std::size_t X = 0, Y = 0;
  const std::size_t total = gt.count();
  if (total == 0) {
    X = static_cast<std::size_t>(std::round(static_cast<double>(W) / 2.0));
    Y = static_cast<std::size_t>(std::round(static_cast<double>(H) / 2.0));
  } else {
    double sx = 0.0, sy = 0.0;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        if (!gt(y, x)) continue;
        sx += static_cast<double>(x + 1);
        sy += static_cast<double>(y + 1);
      }
    }
    X = static_cast<std::size_t>(std::round(sx / static_cast<double>(total)));
    Y = static_cast<std::size_t>(std::round(sy / static_cast<double>(total)));
  }
  const Rect parts[4] = {{0, Y, 0, X}, {0, Y, X, W}, {Y, H, 0, X}, {Y, H, X, W}};
  const auto area = static_cast<double>(H * W);
  double score = 0.0;
  for (const Rect& r : parts) {
    if (r.area() == 0) continue;
    score += static_cast<double>(r.area()) / area * region_similarity(pred, gt, r);
  }
  return score;
}

double s_measure(const PredictionMap& pred, const BinaryMask& gt, double alpha) {
  require_same_dims(pred, gt, "s_measure");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("s_measure: alpha outside [0,1]");
  if (gt.count() == 0) return 1.0 - pred.mean();
  if (gt.count() == gt.size()) return pred.mean();
  const double q = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
  return std::clamp(q, 0.0, 1.0);
}

double ssim(const PredictionMap& a, const PredictionMap& b) {
  require_same_dims(a, b, "ssim");
  const std::size_t H = a.height(), W = a.width();
  if (H < kWindow || W < kWindow) {
    throw ShapeError("ssim: images must be at least 11x11, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  static const auto window = gaussian_window();
  // Second moments are shift invariant; centring first avoids cancellation in
  // E[x^2] - E[x]^2 on flat regions.
  const double shift_a = a.mean(), shift_b = b.mean();
  std::vector<double> ca(H * W), cb(H * W), aa(H * W), bb(H * W), ab(H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    ca[i] = a[i] - shift_a;
    cb[i] = b[i] - shift_b;
    aa[i] = ca[i] * ca[i];
    bb[i] = cb[i] * cb[i];
    ab[i] = ca[i] * cb[i];
  }
  const auto mu_a = filter_valid(a.values(), H, W, window);
  const auto mu_b = filter_valid(b.values(), H, W, window);
  const auto mc_a = filter_valid(ca, H, W, window);
  const auto mc_b = filter_valid(cb, H, W, window);
  const auto e_aa = filter_valid(aa, H, W, window);
  const auto e_bb = filter_valid(bb, H, W, window);
  const auto e_ab = filter_valid(ab, H, W, window);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mc_a[i] * mc_a[i];
    const double var_b = e_bb[i] - mc_b[i] * mc_b[i];
    const double cov = e_ab[i] - mc_a[i] * mc_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (var_a + var_b + kC2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_a.size());
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(
    std::size_t count, std::size_t wanted, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (count < 2) return pairs;
  const std::size_t total = count * (count - 1) / 2;
  auto decode = [count](std::size_t idx) {
    for (std::size_t i = 0;; ++i) {
      const std::size_t row = count - 1 - i;
      if (idx < row) return std::pair{i, i + 1 + idx};
      idx -= row;
    }
  };
  if (wanted == 0 || wanted >= total) {
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = i + 1; j < count; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
  }
  Rng rng(seed);
  std::set<std::size_t> chosen;
  while (chosen.size() < wanted) chosen.insert(rng.below(total));
  for (std::size_t idx : chosen) pairs.push_back(decode(idx));
  return pairs;
}

SimilarityResult dataset_similarity(std::span<const PredictionMap> images,
                                    std::size_t wanted, std::uint64_t seed,
                                    std::size_t threads) {
  if (images.size() < 2) throw ValueError("dataset_similarity: need at least 2 images");
  for (const auto& img : images) require_same_dims(images[0], img, "dataset_similarity");
  const auto pairs = sample_pairs(images.size(), wanted, seed);
  std::vector<double> scores(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    scores[k] = ssim(images[pairs[k].first], images[pairs[k].second]);
  });
  double acc = 0.0;
  for (double s : scores) acc += s;
  return {pairs.empty() ? 0.0 : acc / static_cast<double>(pairs.size()), pairs.size()};
}

}  // namespace myolo::metrics
