#pragma once

// Forward kernels and their analytic adjoints. Every function here is a pure
// function of its arguments; the recording layer in tape.hpp composes them.

#include <cstddef>

#include "myolo/tensor.hpp"

namespace myolo {

enum class PoolMode { avg, max };
enum class UpsampleMode { nearest, bilinear };
enum class Activation { none, relu };
enum class BinaryOp { add, mul };

namespace ops {

/// Cross-correlation with zero padding. `bias` may be an empty tensor.
/// kernel is (out_c, in_c, kh, kw); bias is (out_c).
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t pad);

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;  // empty when the forward pass had no bias
};
Conv2dGrads conv2d_backward(const Tensor& gout, const Tensor& x,
                            const Tensor& kernel, bool has_bias,
                            std::size_t stride, std::size_t pad);

/// Global pooling over the spatial extent, (n,c,h,w) -> (n,c,1,1).
Tensor pool_global(const Tensor& x, PoolMode mode);
Tensor pool_global_backward(const Tensor& gout, const Tensor& x, PoolMode mode);

/// Pooling across channels, (n,c,h,w) -> (n,1,h,w).
Tensor pool_channelwise(const Tensor& x, PoolMode mode);
Tensor pool_channelwise_backward(const Tensor& gout, const Tensor& x,
                                 PoolMode mode);

/// y = act(w x + b) applied row-wise. x is (in), (batch, in) or
/// (batch, in, 1, 1); w is (out, in); bias is (out) or empty. The output keeps
/// the rank of x with `in` replaced by `out`.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias,
             Activation act);

struct DenseGrads {
  Tensor dx;
  Tensor dw;
  Tensor dbias;
};
/// `y` is the forward output (needed to mask the relu).
DenseGrads dense_backward(const Tensor& gout, const Tensor& x, const Tensor& w,
                          const Tensor& y, bool has_bias, Activation act);

/// Integer-factor upsampling. Nearest maps dst -> floor(dst / factor);
/// bilinear samples at (dst + 0.5) / factor - 0.5 (align-corners = false).
Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode);
Tensor upsample_backward(const Tensor& gout, const Shape& in_shape,
                         std::size_t factor, UpsampleMode mode);

/// Broadcasting elementwise op. Ranks must agree; on every axis the dims are
/// equal or one of them is 1.
Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);

struct BinaryGrads {
  Tensor da;
  Tensor db;
};
BinaryGrads elementwise_backward(const Tensor& gout, const Tensor& a,
                                 const Tensor& b, BinaryOp op);

Shape broadcast_shape(const Shape& a, const Shape& b);
/// Sums `g` (shaped like the broadcast result) back down to `target`.
Tensor reduce_to(const Tensor& g, const Shape& target);

double sigmoid(double v);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& gout, const Tensor& y);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& gout, const Tensor& x, double slope);

/// Channel concatenation of rank-4 tensors with equal n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Inference-mode batch normalisation with per-channel statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  const Tensor& mean, const Tensor& var, double eps);

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
  Tensor dmean;
  Tensor dvar;
};
BatchNormGrads batch_norm_backward(const Tensor& gout, const Tensor& x,
                                   const Tensor& gamma, const Tensor& mean,
                                   const Tensor& var, double eps);

double sum(const Tensor& x);

}  // namespace ops
}  // namespace myolo
