#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlf/tensor.hpp"

namespace mlf {

/// Patch geometry for one period.
struct PatchParams {
  std::size_t period = 0;         // period index s (0-based)
  std::size_t window_length = 0;  // n^s
  std::size_t stride = 1;         // K^s
  std::size_t patch_length = 2;   // L^s
  std::size_t patch_count = 0;    // patches produced
  std::size_t alpha = 2;          // L / K
  /// Length the window is trimmed/padded to before patchify.
  std::size_t fitted_length() const;
};

inline constexpr std::size_t kPatchAlpha = 2;

/// Self-adaptive geometry: K = max(1, floor(n / target)), L = alpha * K,
/// so that every period yields exactly `target` patches after fit_length.
PatchParams derive_patch_params(std::size_t window_length, std::size_t target,
                                std::size_t alpha = kPatchAlpha,
                                std::size_t period = 0);

/// Fixed geometry used when adaptive patching is disabled. The window is
/// trimmed (oldest values) so the last patch ends on the newest value and
/// left-padded to at least one patch length.
PatchParams fixed_patch_params(std::size_t window_length, std::size_t patch_length,
                               std::size_t stride, std::size_t period = 0);

/// Trims the oldest values or left-pads with the first value so the result
/// has exactly params.fitted_length() values.
std::vector<double> fit_length(std::span<const double> window,
                               const PatchParams& params);

/// Appends K copies of the last value and cuts windows of length L at
/// stride K. Returns patches row-major as [N, L] (one patch per row) and
/// sets `count` to N = floor((n - L) / K) + 2.
std::vector<double> patchify(std::span<const double> window, std::size_t patch_length,
                             std::size_t stride, std::size_t* count = nullptr);

/// fit_length followed by patchify; the result holds params.patch_count rows.
std::vector<double> patch_window(std::span<const double> window,
                                 const PatchParams& params);

/// Stacks per-sample patches into a [B, N, L] constant tensor.
Tensor patch_batch(const std::vector<std::span<const double>>& windows,
                   const PatchParams& params);

/// Patch projection plus additive positional encoding. Token-major layout:
/// patches [B, N, L] -> embeddings [B, N, D]; weight [D, L], position [N, D].
Tensor embed_patches(const Tensor& patches, const Tensor& weight,
                     const Tensor& position);

}  // namespace mlf
