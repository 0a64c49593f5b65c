#include "mlf/encoder.hpp"

#include <cmath>

namespace mlf {

void EncoderConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw DimensionError("d_model " + std::to_string(d_model) +
                         " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (d_ff == 0) throw DimensionError("d_ff must be positive");
}

AttentionLayer::AttentionLayer(const std::string& name, const EncoderConfig& cfg,
                               const Initializer& init)
    : config(cfg),
      query(name + ".query", cfg.d_model, cfg.d_model, init, false),
      key(name + ".key", cfg.d_model, cfg.d_model, init, false),
      value(name + ".value", cfg.d_model, cfg.d_model, init, false),
      output(name + ".output", cfg.d_model, cfg.d_model, init),
      norm_attention(name + ".norm_attention", cfg.d_model),
      ff_in(name + ".ff_in", cfg.d_model, cfg.d_ff, init),
      ff_out(name + ".ff_out", cfg.d_ff, cfg.d_model, init),
      norm_ff(name + ".norm_ff", cfg.d_model) {
  cfg.validate();
}

Tensor multi_head_attention(const Tensor& x, const Linear& query, const Linear& key,
                            const Linear& value, std::size_t n_heads, Tensor* scores) {
  if (x.rank() != 3) {
    throw DimensionError("attention: expected [B, T, D], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), tokens = x.dim(1), d_model = x.dim(2);
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw DimensionError("attention: d_model " + std::to_string(d_model) +
                         " not divisible by " + std::to_string(n_heads) + " heads");
  }
  const std::size_t d_k = d_model / n_heads;
  auto heads = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {batch, tokens, n_heads, d_k}), {0, 2, 1, 3}),
                   {batch * n_heads, tokens, d_k});
  };
  const auto q = heads(query(x));
  const auto k = heads(key(x));
  const auto v = heads(value(x));
  auto probs = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(d_k))), 2);
  if (scores) *scores = probs;
  auto o = bmm(probs, v);
  return reshape(permute(reshape(o, {batch, n_heads, tokens, d_k}), {0, 2, 1, 3}),
                 {batch, tokens, d_model});
}

Tensor AttentionLayer::operator()(const Tensor& x, bool training, Tensor* scores) {
  auto attended = output(multi_head_attention(x, query, key, value, config.n_heads, scores));
  auto z = norm_attention(add(x, attended), 2, training);
  auto ff = ff_out(relu(ff_in(z)));
  return norm_ff(add(z, ff), 2, training);
}

void AttentionLayer::visit(const ParamVisitor& fn) {
  query.visit(fn);
  key.visit(fn);
  value.visit(fn);
  output.visit(fn);
  norm_attention.visit(fn);
  ff_in.visit(fn);
  ff_out.visit(fn);
  norm_ff.visit(fn);
}

void AttentionLayer::visit_buffers(const BufferVisitor& fn) {
  norm_attention.visit_buffers(fn);
  norm_ff.visit_buffers(fn);
}

SppHead::SppHead(const std::string& name, std::size_t tokens, std::size_t d_model,
                 std::size_t horizon, const Initializer& init)
    : forecast(name + ".forecast", tokens * d_model, horizon, init),
      redundancy(name + ".redundancy", tokens * d_model, tokens * d_model, init) {}

SppOutput SppHead::operator()(const Tensor& block) const {
  if (block.rank() != 3 || block.dim(1) * block.dim(2) != forecast.in_features()) {
    throw DimensionError("spp: block " + shape_str(block.shape()) +
                         " does not match head input " +
                         std::to_string(forecast.in_features()));
  }
  const auto flat = reshape(block, {block.dim(0), block.dim(1) * block.dim(2)});
  return {forecast(flat), reshape(redundancy(flat), block.shape())};
}

void SppHead::visit(const ParamVisitor& fn) {
  forecast.visit(fn);
  redundancy.visit(fn);
}

std::vector<Tensor> split_periods(const Tensor& z, const std::vector<std::size_t>& tokens) {
  std::size_t total = 0;
  for (auto t : tokens) total += t;
  if (z.rank() != 3 || z.dim(1) != total) {
    throw DimensionError("split_periods: " + shape_str(z.shape()) + " does not hold " +
                         std::to_string(total) + " tokens");
  }
  if (tokens.size() == 1) return {z};
  std::vector<Tensor> out;
  std::size_t start = 0;
  for (auto t : tokens) {
    out.push_back(slice(z, 1, start, t));
    start += t;
  }
  return out;
}

std::vector<Tensor> split_periods(const Tensor& z, std::size_t periods) {
  if (periods == 0 || z.rank() != 3 || z.dim(1) % periods != 0) {
    throw DimensionError("split_periods: token count of " + shape_str(z.shape()) +
                         " is not divisible by " + std::to_string(periods));
  }
  return split_periods(z, std::vector<std::size_t>(periods, z.dim(1) / periods));
}

std::vector<Tensor> irf_filter(const std::vector<Tensor>& blocks,
                               const std::vector<Tensor>& redundancy, double head_dim) {
  if (blocks.size() != redundancy.size()) {
    throw DimensionError("irf_filter: block/redundancy count mismatch");
  }
  const double inv_scale = 1.0 / std::sqrt(head_dim);
  std::vector<Tensor> out;
  out.reserve(blocks.size());
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    Tensor filtered = blocks[s];
    const std::size_t tokens = blocks[s].dim(1);
    for (std::size_t j = 0; j < s; ++j) {
      Tensor eps = scale(redundancy[j], inv_scale);
      const std::size_t eps_tokens = eps.dim(1);
      if (eps_tokens == tokens) {
        filtered = sub(filtered, eps);
      } else if (eps_tokens < tokens) {
        const std::size_t head = tokens - eps_tokens;
        filtered = concat({slice(filtered, 1, 0, head),
                           sub(slice(filtered, 1, head, eps_tokens), eps)},
                          1);
      } else {
        filtered = sub(filtered, slice(eps, 1, eps_tokens - tokens, tokens));
      }
    }
    out.push_back(filtered);
  }
  return out;
}

std::vector<Tensor> aggregate_block_forecasts(
    const std::vector<std::vector<Tensor>>& forecasts) {
  if (forecasts.empty()) throw DimensionError("aggregate: no blocks");
  const std::size_t periods = forecasts.front().size();
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < periods; ++s) {
    std::vector<Tensor> per_block;
    for (const auto& block : forecasts) {
      if (block.size() != periods) throw DimensionError("aggregate: ragged forecasts");
      per_block.push_back(block[s]);
    }
    out.push_back(average(per_block));
  }
  return out;
}

void EncoderBlock::visit(const ParamVisitor& fn) {
  attention.visit(fn);
  for (auto& h : heads) h.visit(fn);
}

void EncoderBlock::visit_buffers(const BufferVisitor& fn) { attention.visit_buffers(fn); }

}  // namespace mlf
