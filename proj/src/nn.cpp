#include "mlf/nn.hpp"

#include <cmath>
#include <random>

namespace mlf {

std::uint64_t Initializer::stream_seed(const std::string& name) const {
  // FNV-1a over the name, mixed with the master seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Tensor Initializer::uniform(const std::string& name, Shape shape, double bound) const {
  std::mt19937_64 rng(stream_seed(name));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor Initializer::normal(const std::string& name, Shape shape, double stddev) const {
  std::mt19937_64 rng(stream_seed(name));
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor Initializer::constant(Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

Linear::Linear(std::string n, std::size_t in, std::size_t out,
               const Initializer& init, bool with_bias)
    : name(std::move(n)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = init.uniform(name + ".weight", {out, in}, bound);
  if (with_bias) bias = init.uniform(name + ".bias", {out}, bound);
}

void Linear::visit(const ParamVisitor& fn) {
  fn(name + ".weight", weight);
  if (bias.defined()) fn(name + ".bias", bias);
}

Mlp::Mlp(const std::string& name, std::size_t in, std::size_t hidden_width,
         std::size_t out, const Initializer& init)
    : hidden(name + ".hidden", in, hidden_width, init),
      output(name + ".output", hidden_width, out, init) {}

void Mlp::visit(const ParamVisitor& fn) {
  hidden.visit(fn);
  output.visit(fn);
}

BatchNorm::BatchNorm(std::string n, std::size_t channels)
    : name(std::move(n)),
      gamma(Initializer::constant({channels}, 1.0)),
      beta(Initializer::constant({channels}, 0.0)),
      state(channels) {}

void BatchNorm::visit(const ParamVisitor& fn) {
  fn(name + ".gamma", gamma);
  fn(name + ".beta", beta);
}

void BatchNorm::visit_buffers(const BufferVisitor& fn) {
  fn(name + ".running_mean", state.running_mean);
  fn(name + ".running_var", state.running_var);
}

}  // namespace mlf
