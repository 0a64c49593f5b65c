#include "mlf/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mlf {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument(field + ": " + why);
}

}  // namespace

void MlfConfig::validate() const {
  require(!period_lengths.empty(), "period_lengths", "must list at least one period");
  for (std::size_t i = 0; i < period_lengths.size(); ++i) {
    require(period_lengths[i] > 0, "period_lengths", "lengths must be positive");
    require(i == 0 || period_lengths[i] > period_lengths[i - 1], "period_lengths",
            "lengths must be strictly increasing");
  }
  require(longest() >= 2, "period_lengths", "longest period must be at least 2 steps");
  require(horizon >= 1, "horizon", "must be positive");
  require(patch_count >= 2, "patch_count", "must be at least 2");
  require(alpha >= 1, "alpha", "must be at least 1");
  require(d_model >= 1, "d_model", "must be positive");
  require(n_heads >= 1 && d_model % n_heads == 0, "n_heads", "must divide d_model");
  require(n_blocks >= 1, "n_blocks", "must be at least 1");
  require(conv_filters >= 1, "conv_filters", "must be positive");
  require(batch_size >= 1, "batch_size", "must be positive");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate",
          "must be finite and non-negative");
  require(grad_clip >= 0.0, "grad_clip", "must be non-negative");
  require(fixed_patch_stride >= 1 && fixed_patch_length >= fixed_patch_stride,
          "fixed_patch_length", "need 0 < stride <= length");
  if (ablation.map) {
    SqueezeConfig sq{patch_count, squeeze_factor, d_model};
    try {
      sq.validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("squeeze_factor: ") + e.what());
    }
  } else {
    require(squeeze_factor >= 1, "squeeze_factor", "must be positive");
  }
}

MlfModel::MlfModel(const MlfConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const Initializer init(seed);
  const std::size_t periods = config_.periods();
  const std::size_t d_model = config_.d_model;

  for (std::size_t s = 0; s < periods; ++s) {
    const std::size_t n = config_.period_lengths[s];
    patch_params_.push_back(
        config_.ablation.map
            ? derive_patch_params(n, config_.patch_count, config_.alpha, s)
            : fixed_patch_params(n, config_.fixed_patch_length, config_.fixed_patch_stride, s));
    tokens_.push_back(squeezed_tokens(patch_params_.back().patch_count, config_.squeeze_factor));
  }

  for (std::size_t s = 0; s < periods; ++s) {
    const auto& pp = patch_params_[s];
    const std::string name = "period" + std::to_string(s);
    PeriodModules m;
    m.embed = Linear(name + ".embed", pp.patch_length, d_model, init, false);
    m.position = init.normal(name + ".position", {pp.patch_count, d_model}, 0.02);
    m.decoder = PatchDecoder(name + ".decoder", tokens_[s], pp.patch_count, d_model,
                             pp.patch_length, init);
    periods_.push_back(std::move(m));
  }

  if (config_.ablation.map) {
    squeezers_.emplace_back("squeeze", config_.patch_count, tokens_[0], init);
  } else {
    for (std::size_t s = 0; s < periods; ++s) {
      squeezers_.emplace_back("period" + std::to_string(s) + ".squeeze",
                              patch_params_[s].patch_count, tokens_[s], init);
    }
  }

  const EncoderConfig enc{d_model, config_.n_heads, config_.ff_width()};
  for (std::size_t e = 0; e < config_.n_blocks; ++e) {
    const std::string name = "block" + std::to_string(e);
    EncoderBlock block;
    block.attention = AttentionLayer(name + ".attention", enc, init);
    for (std::size_t s = 0; s < periods; ++s) {
      block.heads.emplace_back(name + ".spp" + std::to_string(s), tokens_[s], d_model,
                               config_.horizon, init);
    }
    blocks_.push_back(std::move(block));
  }

  lwi_ = Lwi("lwi", periods, config_.horizon, config_.longest(), config_.conv_filters, init);
}

std::size_t MlfModel::total_tokens() const {
  std::size_t total = 0;
  for (auto t : tokens_) total += t;
  return total;
}

const PatchSqueeze& MlfModel::squeezer(std::size_t s) const {
  return squeezers_.size() == 1 ? squeezers_.front() : squeezers_.at(s);
}

Batch MlfModel::make_batch(const std::vector<const MultiPeriodWindow*>& windows) const {
  if (windows.empty()) throw DimensionError("make_batch: empty batch");
  const std::size_t periods = config_.periods();
  Batch batch;
  batch.size = windows.size();
  for (std::size_t s = 0; s < periods; ++s) {
    std::vector<std::span<const double>> views;
    for (const auto* w : windows) {
      if (w->periods.size() != periods) {
        throw DimensionError("window has " + std::to_string(w->periods.size()) +
                             " periods, model expects " + std::to_string(periods));
      }
      if (w->periods[s].size() != config_.period_lengths[s]) {
        throw DimensionError("period " + std::to_string(s) + " window has length " +
                             std::to_string(w->periods[s].size()) + ", expected " +
                             std::to_string(config_.period_lengths[s]));
      }
      views.emplace_back(w->periods[s]);
    }
    batch.patches.push_back(patch_batch(views, patch_params_[s]));
  }
  std::vector<double> longest, target;
  longest.reserve(windows.size() * config_.longest());
  for (const auto* w : windows) {
    longest.insert(longest.end(), w->periods.back().begin(), w->periods.back().end());
  }
  batch.longest = Tensor::from({windows.size(), config_.longest()}, std::move(longest));
  if (!windows.front()->target.empty()) {
    for (const auto* w : windows) {
      if (w->target.size() != config_.horizon) {
        throw DimensionError("target length " + std::to_string(w->target.size()) +
                             " differs from horizon " + std::to_string(config_.horizon));
      }
      target.insert(target.end(), w->target.begin(), w->target.end());
    }
    batch.target = Tensor::from({windows.size(), config_.horizon}, std::move(target));
  }
  return batch;
}

ForecastBundle MlfModel::forward(const Batch& batch, bool training) {
  const std::size_t periods = config_.periods();
  const auto& flags = config_.ablation;
  if (batch.patches.size() != periods) {
    throw DimensionError("forward: batch has " + std::to_string(batch.patches.size()) +
                         " periods, model expects " + std::to_string(periods));
  }

  ForecastBundle bundle;
  std::vector<Tensor> squeezed;
  for (std::size_t s = 0; s < periods; ++s) {
    auto embedded = embed_patches(batch.patches[s], periods_[s].embed.weight,
                                  periods_[s].position);
    auto sq = squeezer(s)(embedded);
    if (flags.reconstruction_loss) bundle.reconstructions.push_back(periods_[s].decoder(sq));
    squeezed.push_back(std::move(sq));
  }

  Tensor x = concat_periods(squeezed);
  bundle.tokens = x.dim(1);
  const double head_dim = static_cast<double>(config_.d_model / config_.n_heads);
  for (std::size_t e = 0; e < blocks_.size(); ++e) {
    auto& block = blocks_[e];
    Tensor z = x;
    if (flags.attention) {
      Tensor scores;
      z = block.attention(x, training, &scores);
      bundle.attention.push_back(scores);
    }
    auto parts = split_periods(z, tokens_);
    const bool filter = flags.irf && e + 1 < blocks_.size();
    std::vector<Tensor> forecasts, redundancy;
    for (std::size_t s = 0; s < periods; ++s) {
      if (filter) {
        auto out = block.heads[s](parts[s]);
        forecasts.push_back(out.forecast);
        redundancy.push_back(out.redundancy);
      } else {
        const auto flat = reshape(parts[s], {parts[s].dim(0), parts[s].dim(1) * parts[s].dim(2)});
        forecasts.push_back(block.heads[s].forecast(flat));
      }
    }
    bundle.block_forecasts.push_back(std::move(forecasts));
    if (e + 1 < blocks_.size()) {
      x = filter ? concat_periods(irf_filter(parts, redundancy, head_dim)) : z;
    }
  }

  bundle.period_forecasts = aggregate_block_forecasts(bundle.block_forecasts);
  if (flags.lwi) {
    bundle.weights = lwi_.period_weights(lwi_.extract_features(batch.longest, training));
    bundle.forecast = integrate(bundle.period_forecasts, bundle.weights);
  } else {
    bundle.forecast = integrate_mean(bundle.period_forecasts);
  }
  return bundle;
}

void MlfModel::visit(const ParamVisitor& fn) {
  for (std::size_t s = 0; s < periods_.size(); ++s) {
    periods_[s].embed.visit(fn);
    fn("period" + std::to_string(s) + ".position", periods_[s].position);
  }
  for (auto& sq : squeezers_) sq.visit(fn);
  for (auto& p : periods_) p.decoder.visit(fn);
  for (auto& b : blocks_) b.visit(fn);
  lwi_.visit(fn);
}

void MlfModel::visit_buffers(const BufferVisitor& fn) {
  for (auto& b : blocks_) b.visit_buffers(fn);
  lwi_.visit_buffers(fn);
}

std::vector<std::pair<std::string, Tensor>> MlfModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  visit([&](const std::string& name, Tensor& p) { out.emplace_back(name, p); });
  return out;
}

std::size_t MlfModel::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor& p) { n += p.numel(); });
  return n;
}

MlfModel::Snapshot MlfModel::snapshot() {
  Snapshot snap;
  visit([&](const std::string&, Tensor& p) {
    snap.params.emplace_back(p.data().begin(), p.data().end());
  });
  visit_buffers([&](const std::string&, std::vector<double>& b) { snap.buffers.push_back(b); });
  return snap;
}

void MlfModel::restore(const Snapshot& snap) {
  std::size_t i = 0;
  visit([&](const std::string& name, Tensor& p) {
    if (i >= snap.params.size() || snap.params[i].size() != p.numel()) {
      throw DimensionError("snapshot does not match parameter " + name);
    }
    std::copy(snap.params[i].begin(), snap.params[i].end(), p.mutable_data().begin());
    ++i;
  });
  std::size_t j = 0;
  visit_buffers([&](const std::string& name, std::vector<double>& b) {
    if (j >= snap.buffers.size() || snap.buffers[j].size() != b.size()) {
      throw DimensionError("snapshot does not match buffer " + name);
    }
    b = snap.buffers[j++];
  });
}

ForecastBundle mlf_forward(MlfModel& model, const Batch& batch, bool training) {
  return model.forward(batch, training);
}

LossTerms mlf_loss(const ForecastBundle& bundle, const Batch& batch,
                   const AblationFlags& flags) {
  if (!batch.target.defined()) throw DimensionError("mlf_loss: batch has no target");
  LossTerms terms;
  terms.forecast = mse(bundle.forecast, batch.target);
  terms.total = terms.forecast;
  if (flags.reconstruction_loss) {
    terms.reconstruction = reconstruction_loss(bundle.reconstructions, batch.patches);
    terms.total = add(terms.forecast, terms.reconstruction);
  }
  return terms;
}

}  // namespace mlf
