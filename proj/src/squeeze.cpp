#include "mlf/squeeze.hpp"

#include <algorithm>

namespace mlf {

void SqueezeConfig::validate() const {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8) {
    throw DimensionError("squeeze factor must be one of 1, 2, 4, 8; got " +
                         std::to_string(factor));
  }
  if (patch_count % factor != 0) {
    throw DimensionError("squeeze factor " + std::to_string(factor) +
                         " does not divide patch count " + std::to_string(patch_count));
  }
}

std::size_t squeezed_tokens(std::size_t patch_count, std::size_t factor) {
  return std::max<std::size_t>(1, patch_count / std::max<std::size_t>(1, factor));
}

PatchSqueeze::PatchSqueeze(const std::string& name, std::size_t patch_count,
                           std::size_t tokens, const Initializer& init)
    : encoder(name, patch_count, tokens, init) {}

Tensor PatchSqueeze::operator()(const Tensor& embedded) const {
  if (embedded.rank() != 3 || embedded.dim(1) != encoder.in_features()) {
    throw DimensionError("squeeze: expected [B, " +
                         std::to_string(encoder.in_features()) + ", D], got " +
                         shape_str(embedded.shape()));
  }
  return transpose_last2(encoder(transpose_last2(embedded)));
}

void PatchSqueeze::set_identity() {
  const std::size_t n = encoder.in_features();
  if (encoder.out_features() != n) {
    throw DimensionError("identity squeeze needs r = 1");
  }
  auto w = encoder.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
  if (encoder.bias.defined()) {
    auto b = encoder.bias.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
}

PatchDecoder::PatchDecoder(const std::string& name, std::size_t tokens,
                           std::size_t patch_count, std::size_t d_model,
                           std::size_t patch_length, const Initializer& init)
    : tokens_to_patches(name + ".mlp_n", tokens, std::max(tokens, patch_count),
                        patch_count, init),
      embedding_to_patch(name + ".mlp_l", d_model, std::max(d_model, patch_length),
                         patch_length, init) {}

Tensor PatchDecoder::operator()(const Tensor& squeezed) const {
  auto expanded = transpose_last2(tokens_to_patches(transpose_last2(squeezed)));
  return embedding_to_patch(expanded);
}

void PatchDecoder::visit(const ParamVisitor& fn) {
  tokens_to_patches.visit(fn);
  embedding_to_patch.visit(fn);
}

Tensor concat_periods(const std::vector<Tensor>& blocks) {
  if (blocks.empty()) throw DimensionError("concat_periods: no periods");
  for (const auto& b : blocks) {
    if (b.rank() != 3 || b.dim(0) != blocks[0].dim(0) || b.dim(2) != blocks[0].dim(2)) {
      throw DimensionError("concat_periods: inconsistent block " + shape_str(b.shape()) +
                           " vs " + shape_str(blocks[0].shape()));
    }
  }
  return blocks.size() == 1 ? blocks[0] : concat(blocks, 1);
}

Tensor reconstruction_loss(const std::vector<Tensor>& reconstructed,
                           const std::vector<Tensor>& raw) {
  if (reconstructed.size() != raw.size() || raw.empty()) {
    throw DimensionError("reconstruction_loss: " + std::to_string(reconstructed.size()) +
                         " reconstructions for " + std::to_string(raw.size()) + " periods");
  }
  std::vector<Tensor> terms;
  for (std::size_t s = 0; s < raw.size(); ++s) terms.push_back(mse(reconstructed[s], raw[s]));
  return average(terms);
}

}  // namespace mlf
