#include "myolo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace myolo::ops {
namespace {

void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected (n,c,h,w), got " +
                     to_string(x.shape()));
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                            std::size_t pad) {
  const std::size_t padded = in + 2 * pad;
  if (padded < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) +
                     " larger than padded input " + std::to_string(padded));
  }
  if ((padded - k) % stride != 0) {
    throw ShapeError("conv2d: (" + std::to_string(in) + " + 2*" +
                     std::to_string(pad) + " - " + std::to_string(k) +
                     ") is not divisible by stride " + std::to_string(stride));
  }
  return (padded - k) / stride + 1;
}

struct DenseLayout {
  std::size_t batch;
  std::size_t in;
  Shape out_shape;
};

DenseLayout dense_layout(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) {
    throw ShapeError("dense: weight must be (out, in), got " +
                     to_string(w.shape()));
  }
  DenseLayout l{};
  Shape out = x.shape();
  if (x.rank() == 1) {
    l.batch = 1;
    l.in = x.size();
    out[0] = w.dim(0);
  } else if (x.rank() >= 2) {
    l.batch = x.dim(0);
    l.in = x.dim(1);
    for (std::size_t a = 2; a < x.rank(); ++a) {
      if (x.dim(a) != 1) {
        throw ShapeError("dense: trailing axes must be 1, got " +
                         to_string(x.shape()));
      }
    }
    out[1] = w.dim(0);
  } else {
    throw ShapeError("dense: empty input");
  }
  if (w.dim(1) != l.in) {
    throw ShapeError("dense: weight " + to_string(w.shape()) +
                     " does not accept input width " + std::to_string(l.in));
  }
  l.out_shape = std::move(out);
  return l;
}

// Source taps for one axis of bilinear resampling.
struct Taps {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

Taps bilinear_taps(std::size_t dst, std::size_t factor, std::size_t in) {
  double src = (static_cast<double>(dst) + 0.5) / static_cast<double>(factor) - 0.5;
  if (src < 0.0) src = 0.0;
  auto i0 = static_cast<std::size_t>(std::floor(src));
  if (i0 > in - 1) i0 = in - 1;
  const std::size_t i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

// Visits every element of the broadcast result, handing out the flat
// indices into a and b.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b,
                        Fn&& fn) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t stride_a = 1;
  std::size_t stride_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = a[i] == 1 ? 0 : stride_a;
    sb[i] = b[i] == 1 ? 0 : stride_b;
    stride_a *= a[i];
    stride_b *= b[i];
  }
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = shape_size(out);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    fn(flat, ia, ib);
    for (std::size_t axis = rank; axis-- > 0;) {
      ++idx[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (idx[axis] < out[axis]) break;
      ia -= sa[axis] * idx[axis];
      ib -= sb[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
}

void check_channel_vector(const Tensor& v, std::size_t channels,
                          const char* what) {
  if (v.size() != channels) {
    throw ShapeError(std::string("batch_norm: ") + what + " has " +
                     std::to_string(v.size()) + " entries, expected " +
                     std::to_string(channels));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  require_rank4(x, "conv2d");
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d: kernel must be (out_c,in_c,k,k), got " +
                     to_string(kernel.shape()));
  }
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const std::size_t O = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) +
                     " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input " + to_string(x.shape()));
  }
  if (!bias.empty() && bias.size() != O) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.size()) +
                     " entries for " + std::to_string(O) + " output channels");
  }
  const std::size_t OH = conv_out_extent(H, KH, stride, pad);
  const std::size_t OW = conv_out_extent(W, KW, stride, pad);
  Tensor y({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const double b = bias.empty() ? 0.0 : bias[o];
      for (std::size_t oy = 0; oy < OH; ++oy) {
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = b;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ky = 0; ky < KH; ++ky) {
              const std::size_t py = oy * stride + ky;
              if (py < pad || py - pad >= H) continue;
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const std::size_t px = ox * stride + kx;
                if (px < pad || px - pad >= W) continue;
                acc += x.at(n, c, py - pad, px - pad) * kernel.at(o, c, ky, kx);
              }
            }
          }
          y.at(n, o, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& gout, const Tensor& x,
                            const Tensor& kernel, bool has_bias,
                            std::size_t stride, std::size_t pad) {
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const std::size_t O = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  const std::size_t OH = gout.h(), OW = gout.w();
  Conv2dGrads g{Tensor(x.shape()), Tensor(kernel.shape()),
                has_bias ? Tensor({O}) : Tensor()};
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t oy = 0; oy < OH; ++oy) {
        for (std::size_t ox = 0; ox < OW; ++ox) {
          const double go = gout.at(n, o, oy, ox);
          if (has_bias) g.dbias[o] += go;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ky = 0; ky < KH; ++ky) {
              const std::size_t py = oy * stride + ky;
              if (py < pad || py - pad >= H) continue;
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const std::size_t px = ox * stride + kx;
                if (px < pad || px - pad >= W) continue;
                g.dx.at(n, c, py - pad, px - pad) += go * kernel.at(o, c, ky, kx);
                g.dkernel.at(o, c, ky, kx) += go * x.at(n, c, py - pad, px - pad);
              }
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor pool_global(const Tensor& x, PoolMode mode) {
  require_rank4(x, "pool_global");
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (H == 0 || W == 0) throw ShapeError("pool_global: empty spatial extent");
  Tensor y({N, C, 1, 1});
  const std::size_t plane = H * W;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* p = x.data().data() + nc * plane;
    if (mode == PoolMode::avg) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      y[nc] = acc / static_cast<double>(plane);
    } else {
      y[nc] = *std::max_element(p, p + plane);
    }
  }
  return y;
}

Tensor pool_global_backward(const Tensor& gout, const Tensor& x, PoolMode mode) {
  const std::size_t plane = x.h() * x.w();
  Tensor dx(x.shape());
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const double* p = x.data().data() + nc * plane;
    double* d = dx.data().data() + nc * plane;
    if (mode == PoolMode::avg) {
      const double share = gout[nc] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) d[i] = share;
    } else {
      // max_element returns the first maximum, giving row-major tie-breaking.
      d[std::max_element(p, p + plane) - p] = gout[nc];
    }
  }
  return dx;
}

Tensor pool_channelwise(const Tensor& x, PoolMode mode) {
  require_rank4(x, "pool_channelwise");
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (C == 0) throw ShapeError("pool_channelwise: no channels");
  Tensor y({N, 1, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t yy = 0; yy < H; ++yy) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        double acc = x.at(n, 0, yy, xx);
        for (std::size_t c = 1; c < C; ++c) {
          const double v = x.at(n, c, yy, xx);
          acc = mode == PoolMode::avg ? acc + v : std::max(acc, v);
        }
        y.at(n, 0, yy, xx) =
            mode == PoolMode::avg ? acc / static_cast<double>(C) : acc;
      }
    }
  }
  return y;
}

Tensor pool_channelwise_backward(const Tensor& gout, const Tensor& x,
                                 PoolMode mode) {
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  Tensor dx(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t yy = 0; yy < H; ++yy) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const double go = gout.at(n, 0, yy, xx);
        if (mode == PoolMode::avg) {
          for (std::size_t c = 0; c < C; ++c) {
            dx.at(n, c, yy, xx) = go / static_cast<double>(C);
          }
        } else {
          std::size_t best = 0;
          for (std::size_t c = 1; c < C; ++c) {
            if (x.at(n, c, yy, xx) > x.at(n, best, yy, xx)) best = c;
          }
          dx.at(n, best, yy, xx) = go;
        }
      }
    }
  }
  return dx;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias,
             Activation act) {
  const DenseLayout l = dense_layout(x, w);
  const std::size_t out = w.dim(0);
  if (!bias.empty() && bias.size() != out) {
    throw ShapeError("dense: bias has " + std::to_string(bias.size()) +
                     " entries, expected " + std::to_string(out));
  }
  Tensor y(l.out_shape);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += w[o * l.in + i] * x[b * l.in + i];
      y[b * out + o] = act == Activation::relu ? std::max(acc, 0.0) : acc;
    }
  }
  return y;
}

DenseGrads dense_backward(const Tensor& gout, const Tensor& x, const Tensor& w,
                          const Tensor& y, bool has_bias, Activation act) {
  const DenseLayout l = dense_layout(x, w);
  const std::size_t out = w.dim(0);
  DenseGrads g{Tensor(x.shape()), Tensor(w.shape()),
               has_bias ? Tensor({out}) : Tensor()};
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double go = gout[b * out + o];
      if (act == Activation::relu && !(y[b * out + o] > 0.0)) go = 0.0;
      if (has_bias) g.dbias[o] += go;
      for (std::size_t i = 0; i < l.in; ++i) {
        g.dx[b * l.in + i] += go * w[o * l.in + i];
        g.dw[o * l.in + i] += go * x[b * l.in + i];
      }
    }
  }
  return g;
}

Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode) {
  require_rank4(x, "upsample");
  if (factor < 2) {
    throw ValueError("upsample: factor must be >= 2, got " +
                     std::to_string(factor));
  }
  const std::size_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const std::size_t OH = H * factor, OW = W * factor;
  Tensor y({N, C, OH, OW});
  if (mode == UpsampleMode::nearest) {
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      for (std::size_t oy = 0; oy < OH; ++oy) {
        for (std::size_t ox = 0; ox < OW; ++ox) {
          y[(nc * OH + oy) * OW + ox] = x[(nc * H + oy / factor) * W + ox / factor];
        }
      }
    }
    return y;
  }
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* p = x.data().data() + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const Taps ty = bilinear_taps(oy, factor, H);
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const Taps tx = bilinear_taps(ox, factor, W);
        const double top = (1.0 - tx.frac) * p[ty.i0 * W + tx.i0] + tx.frac * p[ty.i0 * W + tx.i1];
        const double bot = (1.0 - tx.frac) * p[ty.i1 * W + tx.i0] + tx.frac * p[ty.i1 * W + tx.i1];
        y[(nc * OH + oy) * OW + ox] = (1.0 - ty.frac) * top + ty.frac * bot;
      }
    }
  }
  return y;
}

Tensor upsample_backward(const Tensor& gout, const Shape& in_shape,
                         std::size_t factor, UpsampleMode mode) {
  Tensor dx(in_shape);
  const std::size_t N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  const std::size_t OH = H * factor, OW = W * factor;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double* d = dx.data().data() + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const double go = gout[(nc * OH + oy) * OW + ox];
        if (mode == UpsampleMode::nearest) {
          d[(oy / factor) * W + ox / factor] += go;
          continue;
        }
        const Taps ty = bilinear_taps(oy, factor, H);
        const Taps tx = bilinear_taps(ox, factor, W);
        d[ty.i0 * W + tx.i0] += go * (1.0 - ty.frac) * (1.0 - tx.frac);
        d[ty.i0 * W + tx.i1] += go * (1.0 - ty.frac) * tx.frac;
        d[ty.i1 * W + tx.i0] += go * ty.frac * (1.0 - tx.frac);
        d[ty.i1 * W + tx.i1] += go * ty.frac * tx.frac;
      }
    }
  }
  return dx;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError("broadcast: rank mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError("broadcast: incompatible dims " + to_string(a) +
                       " vs " + to_string(b));
    }
  }
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor y(out_shape);
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) {
                       y[o] = op == BinaryOp::add ? a[ia] + b[ib] : a[ia] * b[ib];
                     });
  return y;
}

Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r(target);
  for_each_broadcast(g.shape(), target, target,
                     [&](std::size_t o, std::size_t it, std::size_t) {
                       r[it] += g[o];
                     });
  return r;
}

BinaryGrads elementwise_backward(const Tensor& gout, const Tensor& a,
                                 const Tensor& b, BinaryOp op) {
  if (op == BinaryOp::add) {
    return {reduce_to(gout, a.shape()), reduce_to(gout, b.shape())};
  }
  Tensor ga(gout.shape());
  Tensor gb(gout.shape());
  for_each_broadcast(gout.shape(), a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) {
                       ga[o] = gout[o] * b[ib];
                       gb[o] = gout[o] * a[ia];
                     });
  return {reduce_to(ga, a.shape()), reduce_to(gb, b.shape())};
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& gout, const Tensor& y) {
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = gout[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& gout, const Tensor& x, double slope) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? gout[i] : slope * gout[i];
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t plane = a.h() * a.w();
  const std::size_t ca = a.c(), cb = b.c();
  Tensor y({a.n(), ca + cb, a.h(), a.w()});
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(n * ca * plane), ca * plane,
                y.data().begin() + static_cast<std::ptrdiff_t>(n * (ca + cb) * plane));
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(n * cb * plane), cb * plane,
                y.data().begin() + static_cast<std::ptrdiff_t>((n * (ca + cb) + ca) * plane));
  }
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  const Tensor& mean, const Tensor& var, double eps) {
  require_rank4(x, "batch_norm");
  if (!(eps > 0.0)) throw ValueError("batch_norm: eps must be > 0");
  const std::size_t C = x.c();
  check_channel_vector(gamma, C, "gamma");
  check_channel_vector(beta, C, "beta");
  check_channel_vector(mean, C, "running_mean");
  check_channel_vector(var, C, "running_var");
  const std::size_t plane = x.h() * x.w();
  Tensor y(x.shape());
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      if (var[c] < 0.0) throw ValueError("batch_norm: running_var < 0");
      const double scale = gamma[c] / std::sqrt(var[c] + eps);
      const std::size_t base = (n * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        y[base + i] = (x[base + i] - mean[c]) * scale + beta[c];
      }
    }
  }
  return y;
}

BatchNormGrads batch_norm_backward(const Tensor& gout, const Tensor& x,
                                   const Tensor& gamma, const Tensor& mean,
                                   const Tensor& var, double eps) {
  const std::size_t C = x.c();
  const std::size_t plane = x.h() * x.w();
  BatchNormGrads g{Tensor(x.shape()), Tensor({C}), Tensor({C}), Tensor({C}),
                   Tensor({C})};
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(var[c] + eps);
      const std::size_t base = (n * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double go = gout[base + i];
        const double centered = x[base + i] - mean[c];
        g.dx[base + i] = go * gamma[c] * inv;
        g.dgamma[c] += go * centered * inv;
        g.dbeta[c] += go;
        g.dmean[c] -= go * gamma[c] * inv;
        g.dvar[c] -= 0.5 * go * gamma[c] * centered * inv * inv * inv;
      }
    }
  }
  return g;
}

double sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return acc;
}

}  // namespace myolo::ops
