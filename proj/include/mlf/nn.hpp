#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlf/ops.hpp"
#include "mlf/tensor.hpp"

namespace mlf {

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;
using BufferVisitor =
    std::function<void(const std::string& name, std::vector<double>& buffer)>;

/// Deterministic per-parameter initialisation: each parameter draws from
/// its own stream seeded by (master seed, parameter name), so models that
/// share a parameter name and shape share its initial value.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  Tensor uniform(const std::string& name, Shape shape, double bound) const;
  Tensor normal(const std::string& name, Shape shape, double stddev) const;
  static Tensor constant(Shape shape, double value);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t stream_seed(const std::string& name) const;
  std::uint64_t seed_;
};

/// y = x W^T + b over the last axis; weight [out, in], uniform(+-1/sqrt(in)).
struct Linear {
  std::string name;
  Tensor weight;
  Tensor bias;  // undefined when built without bias

  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out,
         const Initializer& init, bool with_bias = true);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  void visit(const ParamVisitor& fn);
};

/// Linear -> ReLU -> Linear.
struct Mlp {
  Linear hidden;
  Linear output;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, std::size_t hidden_width,
      std::size_t out, const Initializer& init);

  Tensor operator()(const Tensor& x) const { return output(relu(hidden(x))); }
  void visit(const ParamVisitor& fn);
};

struct BatchNorm {
  std::string name;
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t channels);

  Tensor operator()(const Tensor& x, std::size_t channel_axis, bool training) {
    return batch_norm(x, channel_axis, gamma, beta, state, training);
  }
  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);
};

}  // namespace mlf
