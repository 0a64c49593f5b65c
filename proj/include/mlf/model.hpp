#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlf/data.hpp"
#include "mlf/encoder.hpp"
#include "mlf/lwi.hpp"
#include "mlf/nn.hpp"
#include "mlf/patching.hpp"
#include "mlf/squeeze.hpp"

namespace mlf {

/// Stage switches. Every flag on is the full model; turning one off is the
/// corresponding ablation.
struct AblationFlags {
  bool irf = true;                  // redundancy subtraction between periods
  bool lwi = true;                  // learned weights vs plain mean
  bool map = true;                  // adaptive patching vs fixed (L, K)
  bool reconstruction_loss = true;  // auxiliary patch reconstruction term
  bool attention = true;            // multi-period attention layer

  bool operator==(const AblationFlags&) const = default;
};

struct MlfConfig {
  std::vector<std::size_t> period_lengths{5, 10, 30, 60, 120, 150};
  std::size_t horizon = 5;        // m
  std::size_t patch_count = 64;   // target patches per period
  std::size_t squeeze_factor = 8; // r
  std::size_t d_model = 16;       // D
  std::size_t n_heads = 4;        // H
  std::size_t n_blocks = 3;       // E
  std::size_t d_ff = 0;           // 0 -> 2 * D
  std::size_t conv_filters = 16;  // F
  std::size_t alpha = kPatchAlpha;
  // Geometry used when adaptive patching is disabled.
  std::size_t fixed_patch_length = 16;
  std::size_t fixed_patch_stride = 8;

  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  double grad_clip = 0.0;         // global-norm clipping, 0 disables
  std::size_t window_stride = 1;  // subsampling of training anchors
  std::size_t eval_stride = 1;    // subsampling of val/test anchors

  AblationFlags ablation;

  std::size_t periods() const { return period_lengths.size(); }
  std::size_t longest() const { return period_lengths.back(); }
  std::size_t ff_width() const { return d_ff ? d_ff : 2 * d_model; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Everything mlf_forward produces for one batch.
struct ForecastBundle {
  std::vector<std::vector<Tensor>> block_forecasts;  // [E][S] of [B, m]
  std::vector<Tensor> period_forecasts;              // [S] of [B, m]
  Tensor weights;                                    // [B, S, m] or undefined
  Tensor forecast;                                   // [B, m]
  std::vector<Tensor> reconstructions;               // [S] of [B, N_s, L_s]
  std::vector<Tensor> attention;                     // [E] of [B*H, T, T]
  std::size_t tokens = 0;                            // attention token count
};

/// Model inputs for a batch of windows (all from the same channel space).
struct Batch {
  std::vector<Tensor> patches;  // [S] of [B, N_s, L_s]
  Tensor longest;               // [B, n^S]
  Tensor target;                // [B, m]
  std::size_t size = 0;
};

struct LossTerms {
  Tensor total;
  Tensor forecast;
  Tensor reconstruction;  // undefined when the term is disabled
};

class MlfModel {
 public:
  MlfModel(const MlfConfig& config, std::uint64_t seed);

  const MlfConfig& config() const { return config_; }
  const std::vector<PatchParams>& patch_params() const { return patch_params_; }
  const std::vector<std::size_t>& period_tokens() const { return tokens_; }
  std::size_t total_tokens() const;

  Batch make_batch(const std::vector<const MultiPeriodWindow*>& windows) const;
  ForecastBundle forward(const Batch& batch, bool training);

  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::size_t parameter_count();

  /// Deep copy of all parameter values and buffers.
  struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
  };
  Snapshot snapshot();
  void restore(const Snapshot& snap);

  struct PeriodModules {
    Linear embed;     // W_p
    Tensor position;  // W_pos, stored token-major [N, D]
    PatchDecoder decoder;
  };
  std::vector<PeriodModules>& periods() { return periods_; }
  std::vector<PatchSqueeze>& squeezers() { return squeezers_; }
  std::vector<EncoderBlock>& blocks() { return blocks_; }
  Lwi& lwi() { return lwi_; }
  /// Squeezer used for period s (shared under adaptive patching).
  const PatchSqueeze& squeezer(std::size_t s) const;

 private:
  MlfConfig config_;
  std::vector<PatchParams> patch_params_;
  std::vector<std::size_t> tokens_;
  std::vector<PeriodModules> periods_;
  std::vector<PatchSqueeze> squeezers_;
  std::vector<EncoderBlock> blocks_;
  Lwi lwi_;
};

/// MAP -> embed -> squeeze -> E x (attention, SPP, IRF) -> block average ->
/// LWI. Convenience wrapper around model.forward.
ForecastBundle mlf_forward(MlfModel& model, const Batch& batch, bool training);

/// MSE(final, target) + (1/S) sum_s MSE(reconstruction_s, patches_s); the
/// second term is omitted when the reconstruction flag is off.
LossTerms mlf_loss(const ForecastBundle& bundle, const Batch& batch,
                   const AblationFlags& flags);

}  // namespace mlf
