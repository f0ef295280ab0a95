#pragma once

#include "slm/rng.hpp"
#include "slm/tensor.hpp"

namespace slm {

enum class Mode { Train, Eval };

/// Per-channel running statistics for batch normalization. Plain buffers,
/// never differentiated; saved alongside parameters in checkpoints.
struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  static BatchNormState make(int channels);
};

namespace ops {

/// 2-D convolution, NCHW input, [K,C,kh,kw] weight, [K] bias.
/// Output spatial size (H + 2*padding - kh) / stride + 1 must be exact.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

/// Transposed convolution with fixed 2x2 kernel and stride 2; weight [C,K,2,2].
/// Output spatial dims are exactly doubled.
Tensor conv_transpose2x2_s2(const Tensor& x, const Tensor& w);

/// 2x2 max pooling, stride 2. Gradient routes to the argmax of each window,
/// ties broken by the first occurrence in row-major scan order.
Tensor max_pool2(const Tensor& x);

/// Batch normalization over [N,C] or [N,C,H,W]. Train mode standardizes with
/// batch statistics and updates running stats as (1-momentum)*old + momentum*batch;
/// eval mode uses the running stats.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                  BatchNormState& state, double momentum = 0.1, double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Inverted dropout: train mode zeroes elements with probability p and scales
/// survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

/// Affine map y = x * w^T + b with x [N,D], w [M,D], b [M].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// [N, ...] -> [N, D] keeping row-major order.
Tensor flatten(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);

/// Concatenate two NCHW tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);

/// 1 - (2*sum(pred*target) + smooth) / (sum(pred) + sum(target) + smooth).
/// `target` is treated as a constant.
Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth = 1.0);

/// Mean of squared differences; `target` is treated as a constant.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace ops

}  // namespace slm
