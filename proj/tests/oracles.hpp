#pragma once
// Brute-force reference implementations. These deliberately avoid the
// library's kernels: plain nested loops over explicit index arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "myolo/image.hpp"
#include "myolo/polygon.hpp"
#include "myolo/tensor.hpp"

namespace oracle {

using myolo::Tensor;

inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias,
                     std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  const long n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
  const long co = ks[0], kh = ks[2], kw = ks[3];
  const long oh = (h + 2 * (long)pad - kh) / (long)stride + 1;
  const long ow = (w + 2 * (long)pad - kw) / (long)stride + 1;
  Tensor y({(std::size_t)n, (std::size_t)co, (std::size_t)oh, (std::size_t)ow});
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < co; ++o)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (long c = 0; c < ci; ++c)
            for (long u = 0; u < kh; ++u)
              for (long v = 0; v < kw; ++v) {
                const long yy = i * (long)stride + u - (long)pad;
                const long xx = j * (long)stride + v - (long)pad;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += x[((b * ci + c) * h + yy) * w + xx] *
                       k[((o * ci + c) * kh + u) * kw + v];
              }
          y[((b * co + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

inline Tensor pool_global(const Tensor& x, bool max) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c, 1, 1});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = max ? -INFINITY : 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        const double v = x[(b * c + ch) * hw + p];
        acc = max ? std::max(acc, v) : acc + v;
      }
      y[b * c + ch] = max ? acc : acc / double(hw);
    }
  return y;
}

inline Tensor pool_channel(const Tensor& x, bool max) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, 1, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p) {
      double acc = max ? -INFINITY : 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = x[(b * c + ch) * hw + p];
        acc = max ? std::max(acc, v) : acc + v;
      }
      y[b * hw + p] = max ? acc : acc / double(c);
    }
  return y;
}

/// Single vector: y = act(W x + b).
inline std::vector<double> dense(const std::vector<double>& x, const Tensor& w,
                                 const Tensor& bias, bool relu) {
  std::vector<double> y(w.dim(0));
  for (std::size_t o = 0; o < w.dim(0); ++o) {
    double acc = bias.empty() ? 0.0 : bias[o];
    for (std::size_t i = 0; i < w.dim(1); ++i) acc += w[o * w.dim(1) + i] * x[i];
    y[o] = relu && acc < 0.0 ? 0.0 : acc;
  }
  return y;
}

inline Tensor upsample_nearest(const Tensor& x, std::size_t f) {
  Tensor y({x.dim(0), x.dim(1), x.dim(2) * f, x.dim(3) * f});
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t i = 0; i < y.dim(2); ++i)
        for (std::size_t j = 0; j < y.dim(3); ++j) y.at(b, c, i, j) = x.at(b, c, i / f, j / f);
  return y;
}

/// Per-pixel align-corners=false interpolation: source coordinate
/// (d + 1/2) / f - 1/2, clamped to the valid range.
inline Tensor upsample_bilinear(const Tensor& x, std::size_t f) {
  const long h = x.dim(2), w = x.dim(3);
  Tensor y({x.dim(0), x.dim(1), h * f, w * f});
  auto coord = [f](long d, long size, long& i0, long& i1, double& t) {
    double s = (double(d) + 0.5) / double(f) - 0.5;
    if (s < 0.0) s = 0.0;
    i0 = std::min((long)std::floor(s), size - 1);
    i1 = std::min(i0 + 1, size - 1);
    t = s - double(i0);
  };
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (long i = 0; i < h * (long)f; ++i)
        for (long j = 0; j < w * (long)f; ++j) {
          long y0, y1, x0, x1;
          double ty, tx;
          coord(i, h, y0, y1, ty);
          coord(j, w, x0, x1, tx);
          const double top = x.at(b, c, y0, x0) * (1 - tx) + x.at(b, c, y0, x1) * tx;
          const double bot = x.at(b, c, y1, x0) * (1 - tx) + x.at(b, c, y1, x1) * tx;
          y.at(b, c, i, j) = top * (1 - ty) + bot * ty;
        }
  return y;
}

/// Rank-4 broadcasting by clamping each index to the operand's extent.
inline Tensor broadcast(const Tensor& a, const Tensor& b, bool mul) {
  std::size_t d[4];
  for (int k = 0; k < 4; ++k) d[k] = std::max(a.dim(k), b.dim(k));
  Tensor y({d[0], d[1], d[2], d[3]});
  auto pick = [](const Tensor& t, std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return t.at(t.dim(0) == 1 ? 0 : i, t.dim(1) == 1 ? 0 : j, t.dim(2) == 1 ? 0 : k,
                t.dim(3) == 1 ? 0 : l);
  };
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k)
        for (std::size_t l = 0; l < d[3]; ++l) {
          const double va = pick(a, i, j, k, l), vb = pick(b, i, j, k, l);
          y.at(i, j, k, l) = mul ? va * vb : va + vb;
        }
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// W. Randolph Franklin's crossing test.
inline bool pnpoly(const std::vector<myolo::Point>& poly, double px, double py) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

inline myolo::BinaryMask fill(const std::vector<myolo::Point>& poly, std::size_t h,
                              std::size_t w) {
  myolo::BinaryMask m(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.set(y, x, pnpoly(poly, x + 0.5, y + 0.5));
  return m;
}

/// F-measure from an explicit confusion matrix.
inline double f_beta(const myolo::PredictionMap& pred, const myolo::BinaryMask& gt,
                     double threshold, double beta2) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t y = 0; y < gt.height(); ++y)
    for (std::size_t x = 0; x < gt.width(); ++x) {
      const bool p = pred(y, x) >= threshold;
      const bool g = gt(y, x);
      if (p && g) tp += 1;
      if (p && !g) fp += 1;
      if (!p && g) fn += 1;
    }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double den = beta2 * precision + recall;
  return den > 0 ? (1 + beta2) * precision * recall / den : 0.0;
}

/// Enhanced alignment evaluated pixel by pixel.
inline double e_measure(const myolo::BinaryMask& pred, const myolo::BinaryMask& gt) {
  const double n = double(gt.size());
  double mp = 0, mg = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    mp += pred[i];
    mg += gt[i];
  }
  mp /= n;
  mg /= n;
  if (mg == 0.0) return 1.0 - mp;
  if (mg == 1.0) return mp;
  double acc = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double a = pred[i] - mp, b = gt[i] - mg;
    const double den = a * a + b * b;
    const double xi = 2 * a * b / (den > 1e-8 ? den : 1e-8);
    acc += (1 + xi) * (1 + xi) / 4;
  }
  return acc / n;
}

/// SSIM between two constant images: the variance terms vanish.
inline double ssim_constant(double p, double q) {
  const double c1 = 1e-4;
  return (2 * p * q + c1) / (p * p + q * q + c1);
}

}  // namespace oracle
