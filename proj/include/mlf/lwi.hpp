#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mlf/nn.hpp"

namespace mlf {

/// Learnable weighted-average integration. A Conv -> BN -> MaxPool feature
/// extractor over the longest window feeds two tanh branches whose product
/// is squashed by a sigmoid into per-period, per-horizon weights.
struct Lwi {
  std::size_t periods = 0;   // S
  std::size_t horizon = 0;   // m
  std::size_t filters = 16;  // F
  std::size_t longest = 0;   // n^S
  ConvBnPoolParams features;
  Linear branch_a;  // Theta_1, b_1
  Linear branch_b;  // Theta_2, b_2

  Lwi() = default;
  Lwi(const std::string& name, std::size_t periods, std::size_t horizon,
      std::size_t longest, std::size_t filters, const Initializer& init);

  std::size_t feature_length() const { return filters * (longest / 2); }

  /// window [B, n^S] -> nu [B, F * floor(n^S / 2)]
  Tensor extract_features(const Tensor& window, bool training);
  /// nu -> Att [B, S, m], every entry in (sigmoid(-1), sigmoid(1)).
  Tensor period_weights(const Tensor& nu) const;

  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);

 private:
  std::string name_;
};

/// (1/S) sum_s forecasts[s] (.) weights[:, s, :]; forecasts[s] is [B, m].
Tensor integrate(const std::vector<Tensor>& forecasts, const Tensor& weights);
/// Unweighted (1/S) sum_s forecasts[s].
Tensor integrate_mean(const std::vector<Tensor>& forecasts);

}  // namespace mlf
