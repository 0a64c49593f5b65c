#pragma once

#include <cstddef>
#include <vector>

#include "mlf/tensor.hpp"

namespace mlf {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// x[..., C] + bias[C]
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[B, ...] + p[...], p shared across the leading axis.
Tensor add_broadcast(const Tensor& x, const Tensor& p);

/// Plain 2-D product a[p,q] * b[q,r].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Affine map over the last axis: x[..., in] * W[out,in]^T + b[out].
/// `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched product a[B,p,q] * b[B,q,r], or a * b^T with b[B,r,q].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& x, Shape shape);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);
/// General axis permutation; out.shape[i] = x.shape[perm[i]].
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);

/// Numerically stable softmax (slice max subtracted) along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

enum class Activation { kTanh, kSigmoid, kRelu };
Tensor activate(const Tensor& x, Activation kind);
inline Tensor tanh(const Tensor& x) { return activate(x, Activation::kTanh); }
inline Tensor sigmoid(const Tensor& x) {
  return activate(x, Activation::kSigmoid);
}
inline Tensor relu(const Tensor& x) { return activate(x, Activation::kRelu); }

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Batch normalisation over every axis except `channel_axis`. In training
/// mode batch statistics are used (biased variance) and `state` is updated
/// with momentum 0.1 (unbiased variance); otherwise running statistics.
Tensor batch_norm(const Tensor& x, std::size_t channel_axis,
                  const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// Cross-correlation of x[B,Cin,T] with w[F,Cin,k] (k odd), zero padded by
/// (k-1)/2 on both sides so the length is preserved. No bias.
Tensor conv1d_same(const Tensor& x, const Tensor& weight);
/// Max pooling over the last axis with kernel = stride = `window`.
Tensor max_pool1d(const Tensor& x, std::size_t window);

struct ConvBnPoolParams {
  Tensor conv_weight;  // [F, Cin, k]
  Tensor bn_gamma;     // [F]
  Tensor bn_beta;      // [F]
  BatchNormState bn_state;
};

/// MaxPool(BN(Conv(Pad(x)))) for x[B,Cin,T]; output [B,F,T/2].
Tensor conv_bn_pool(const Tensor& x, ConvBnPoolParams& params, bool training);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean of squared differences, identical shapes.
Tensor mse(const Tensor& pred, const Tensor& target);
/// Elementwise mean of same-shaped tensors.
Tensor average(const std::vector<Tensor>& parts);

}  // namespace mlf
