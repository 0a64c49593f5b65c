#include "mlf/lwi.hpp"

#include <cmath>

namespace mlf {

Lwi::Lwi(const std::string& name, std::size_t n_periods, std::size_t m,
         std::size_t longest_window, std::size_t n_filters, const Initializer& init)
    : periods(n_periods), horizon(m), filters(n_filters), longest(longest_window),
      name_(name) {
  if (longest < 2) {
    throw DimensionError("LWI needs a longest window of at least 2 steps, got " +
                         std::to_string(longest));
  }
  const double conv_bound = 1.0 / std::sqrt(3.0);
  features.conv_weight = init.uniform(name + ".conv.weight", {filters, 1, 3}, conv_bound);
  features.bn_gamma = Initializer::constant({filters}, 1.0);
  features.bn_beta = Initializer::constant({filters}, 0.0);
  features.bn_state = BatchNormState(filters);
  branch_a = Linear(name + ".theta1", feature_length(), periods * horizon, init);
  branch_b = Linear(name + ".theta2", feature_length(), periods * horizon, init);
}

Tensor Lwi::extract_features(const Tensor& window, bool training) {
  if (window.rank() != 2 || window.dim(1) != longest) {
    throw DimensionError("LWI features: expected [B, " + std::to_string(longest) +
                         "], got " + shape_str(window.shape()));
  }
  const std::size_t batch = window.dim(0);
  auto pooled = conv_bn_pool(reshape(window, {batch, 1, longest}), features, training);
  return reshape(pooled, {batch, feature_length()});
}

Tensor Lwi::period_weights(const Tensor& nu) const {
  auto gate = mul(tanh(branch_a(nu)), tanh(branch_b(nu)));
  return reshape(sigmoid(gate), {nu.dim(0), periods, horizon});
}

void Lwi::visit(const ParamVisitor& fn) {
  fn(name_ + ".conv.weight", features.conv_weight);
  fn(name_ + ".bn.gamma", features.bn_gamma);
  fn(name_ + ".bn.beta", features.bn_beta);
  branch_a.visit(fn);
  branch_b.visit(fn);
}

void Lwi::visit_buffers(const BufferVisitor& fn) {
  fn(name_ + ".bn.running_mean", features.bn_state.running_mean);
  fn(name_ + ".bn.running_var", features.bn_state.running_var);
}

Tensor integrate(const std::vector<Tensor>& forecasts, const Tensor& weights) {
  if (weights.rank() != 3 || weights.dim(1) != forecasts.size()) {
    throw DimensionError("integrate: " + std::to_string(forecasts.size()) +
                         " forecasts vs weights " + shape_str(weights.shape()));
  }
  const std::size_t batch = weights.dim(0), horizon = weights.dim(2);
  std::vector<Tensor> weighted;
  for (std::size_t s = 0; s < forecasts.size(); ++s) {
    auto w = reshape(slice(weights, 1, s, 1), {batch, horizon});
    weighted.push_back(mul(forecasts[s], w));
  }
  return integrate_mean(weighted);
}

Tensor integrate_mean(const std::vector<Tensor>& forecasts) {
  if (forecasts.empty()) throw DimensionError("integrate: no forecasts");
  return average(forecasts);
}

}  // namespace mlf
