#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mlf/nn.hpp"

namespace mlf {

struct EncoderConfig {
  std::size_t d_model = 16;  // D
  std::size_t n_heads = 4;   // H
  std::size_t d_ff = 32;
  std::size_t head_dim() const { return d_model / n_heads; }  // d_k
  void validate() const;
};

/// Multi-head self-attention over all tokens, then
/// z = BN(x + MHA(x)); z = BN(z + FFN(z)) with batch norm over the model
/// dimension and a ReLU feed-forward network.
struct AttentionLayer {
  EncoderConfig config;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  BatchNorm norm_attention;
  Linear ff_in;
  Linear ff_out;
  BatchNorm norm_ff;

  AttentionLayer() = default;
  AttentionLayer(const std::string& name, const EncoderConfig& config,
                 const Initializer& init);

  /// x [B, T, D] -> [B, T, D]. When `scores` is non-null it receives the
  /// softmax probabilities, shape [B * H, T, T].
  Tensor operator()(const Tensor& x, bool training, Tensor* scores = nullptr);
  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);
};

/// Multi-head scaled dot-product attention alone (no residual/norm/FFN).
Tensor multi_head_attention(const Tensor& x, const Linear& query, const Linear& key,
                            const Linear& value, std::size_t n_heads,
                            Tensor* scores = nullptr);

struct SppOutput {
  Tensor forecast;    // [B, m]
  Tensor redundancy;  // [B, T_s, D]
};

/// Single-period head: two linear branches on the flattened token block.
struct SppHead {
  Linear forecast;
  Linear redundancy;

  SppHead() = default;
  SppHead(const std::string& name, std::size_t tokens, std::size_t d_model,
          std::size_t horizon, const Initializer& init);

  SppOutput operator()(const Tensor& block) const;
  void visit(const ParamVisitor& fn);
};

/// Splits [B, sum(T_s), D] into consecutive token blocks of the given sizes.
std::vector<Tensor> split_periods(const Tensor& z, const std::vector<std::size_t>& tokens);
/// Equal split into `periods` blocks; throws if the token count is indivisible.
std::vector<Tensor> split_periods(const Tensor& z, std::size_t periods);

/// z_hat_s = z_s - sum_{j<s} eps_j / sqrt(d_k). Periods are ordered shortest
/// first, so the first block passes through. When a shorter period has fewer
/// tokens its estimate is applied to the most recent tokens of the longer one.
std::vector<Tensor> irf_filter(const std::vector<Tensor>& blocks,
                               const std::vector<Tensor>& redundancy, double head_dim);

/// Block-level average: out[s] = (1/E) sum_e forecasts[e][s].
std::vector<Tensor> aggregate_block_forecasts(
    const std::vector<std::vector<Tensor>>& forecasts);

struct EncoderBlock {
  AttentionLayer attention;
  std::vector<SppHead> heads;  // one per period

  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);
};

}  // namespace mlf
