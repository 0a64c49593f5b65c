#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mlf/nn.hpp"

namespace mlf {

struct SqueezeConfig {
  std::size_t patch_count = 64;  // patches per period
  std::size_t factor = 8;        // r
  std::size_t d_model = 16;      // D

  std::size_t tokens() const { return patch_count / factor; }
  /// Throws unless r is one of {1,2,4,8} and divides the patch count.
  void validate() const;
};

/// Tokens per period after squeezing N patches by r (at least one).
std::size_t squeezed_tokens(std::size_t patch_count, std::size_t factor);

/// PatchEnc: a single linear map over the patch axis, N -> N/r, applied to
/// every embedding row. One instance is shared by all periods.
struct PatchSqueeze {
  Linear encoder;

  PatchSqueeze() = default;
  PatchSqueeze(const std::string& name, std::size_t patch_count, std::size_t tokens,
               const Initializer& init);

  /// [B, N, D] -> [B, N/r, D]
  Tensor operator()(const Tensor& embedded) const;
  /// Sets the encoder to the identity map (requires N == N/r).
  void set_identity();
  void visit(const ParamVisitor& fn) { encoder.visit(fn); }
};

/// Per-period decoder: MLP over the token axis (N/r -> N) followed by an MLP
/// over the embedding axis (D -> L). Hidden widths are max(in, out).
struct PatchDecoder {
  Mlp tokens_to_patches;
  Mlp embedding_to_patch;

  PatchDecoder() = default;
  PatchDecoder(const std::string& name, std::size_t tokens, std::size_t patch_count,
               std::size_t d_model, std::size_t patch_length, const Initializer& init);

  /// [B, N/r, D] -> [B, N, L]
  Tensor operator()(const Tensor& squeezed) const;
  void visit(const ParamVisitor& fn);
};

/// Concatenates per-period token blocks [B, T_s, D] along the token axis,
/// shortest period first.
Tensor concat_periods(const std::vector<Tensor>& blocks);

/// (1/S) * sum_s MSE(reconstructed_s, raw_s).
Tensor reconstruction_loss(const std::vector<Tensor>& reconstructed,
                           const std::vector<Tensor>& raw);

}  // namespace mlf
