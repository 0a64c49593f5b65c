#include "mlf/patching.hpp"

#include <algorithm>

#include "mlf/ops.hpp"

namespace mlf {

std::size_t PatchParams::fitted_length() const {
  // N = (n' - L) / K + 2 with n' a multiple-of-K offset from L.
  return patch_length + (patch_count - 2) * stride;
}

PatchParams derive_patch_params(std::size_t window_length, std::size_t target,
                                std::size_t alpha, std::size_t period) {
  if (window_length == 0) throw DimensionError("window length must be positive");
  if (target < 2) throw DimensionError("target patch count must be at least 2");
  if (alpha < 1) throw DimensionError("alpha must be at least 1");
  PatchParams p;
  p.period = period;
  p.window_length = window_length;
  p.alpha = alpha;
  p.stride = std::max<std::size_t>(1, window_length / target);
  p.patch_length = alpha * p.stride;
  p.patch_count = target;
  return p;
}

PatchParams fixed_patch_params(std::size_t window_length, std::size_t patch_length,
                               std::size_t stride, std::size_t period) {
  if (window_length == 0 || stride == 0 || patch_length < stride) {
    throw DimensionError("invalid fixed patch geometry");
  }
  PatchParams p;
  p.period = period;
  p.window_length = window_length;
  p.stride = stride;
  p.patch_length = patch_length;
  p.alpha = patch_length / stride;
  const std::size_t n = std::max(window_length, patch_length);
  p.patch_count = (n - patch_length) / stride + 2;
  return p;
}

std::vector<double> fit_length(std::span<const double> window,
                               const PatchParams& params) {
  if (window.empty()) throw DimensionError("fit_length: empty window");
  const std::size_t want = params.fitted_length();
  if (window.size() >= want) {
    return {window.end() - static_cast<std::ptrdiff_t>(want), window.end()};
  }
  std::vector<double> out(want - window.size(), window.front());
  out.insert(out.end(), window.begin(), window.end());
  return out;
}

std::vector<double> patchify(std::span<const double> window, std::size_t patch_length,
                             std::size_t stride, std::size_t* count) {
  if (stride == 0 || patch_length < stride) {
    throw DimensionError("patchify: need 0 < K <= L");
  }
  if (window.size() + stride < patch_length) {
    throw DimensionError("patchify: window of " + std::to_string(window.size()) +
                         " values is shorter than L - K");
  }
  std::vector<double> padded(window.begin(), window.end());
  padded.insert(padded.end(), stride, window.back());
  const std::size_t n = (padded.size() - patch_length) / stride + 1;
  std::vector<double> out;
  out.reserve(n * patch_length);
  for (std::size_t i = 0; i < n; ++i) {
    const auto first = padded.begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(patch_length));
  }
  if (count) *count = n;
  return out;
}

std::vector<double> patch_window(std::span<const double> window,
                                 const PatchParams& params) {
  const auto fitted = fit_length(window, params);
  std::size_t n = 0;
  auto patches = patchify(fitted, params.patch_length, params.stride, &n);
  if (n != params.patch_count) {
    throw DimensionError("patch_window: produced " + std::to_string(n) +
                         " patches, expected " + std::to_string(params.patch_count));
  }
  return patches;
}

Tensor patch_batch(const std::vector<std::span<const double>>& windows,
                   const PatchParams& params) {
  if (windows.empty()) throw DimensionError("patch_batch: empty batch");
  std::vector<double> values;
  values.reserve(windows.size() * params.patch_count * params.patch_length);
  for (const auto& w : windows) {
    const auto p = patch_window(w, params);
    values.insert(values.end(), p.begin(), p.end());
  }
  return Tensor::from({windows.size(), params.patch_count, params.patch_length},
                      std::move(values));
}

Tensor embed_patches(const Tensor& patches, const Tensor& weight,
                     const Tensor& position) {
  if (patches.rank() != 3) {
    throw DimensionError("embed_patches: expected [B, N, L], got " +
                         shape_str(patches.shape()));
  }
  return add_broadcast(linear(patches, weight, Tensor{}), position);
}

}  // namespace mlf
