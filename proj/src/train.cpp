#include "mlf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace mlf {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    first_.emplace_back(p.numel(), 0.0);
    second_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto values = p.mutable_data();
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

PreparedData prepare_data(const SeriesDataset& raw, SplitScheme scheme,
                          const MlfConfig& config, std::size_t steps_per_day) {
  PreparedData out;
  out.splits = split_dataset(raw.length, scheme, config.longest(), config.horizon,
                             steps_per_day);
  out.data = standardize(raw, out.splits.train_end);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t derive_seed(std::uint64_t master, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    stream};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

constexpr std::uint32_t kShuffleStream = 0x5eed;

struct WindowSource {
  std::size_t count = 0;
  std::function<MultiPeriodWindow(std::size_t)> get;
};

double validation_loss(MlfModel& model, const WindowSource& val, std::size_t batch_size) {
  NoGradScope no_grad;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start < val.count; start += batch_size) {
    const std::size_t end = std::min(val.count, start + batch_size);
    std::vector<MultiPeriodWindow> windows;
    for (std::size_t i = start; i < end; ++i) windows.push_back(val.get(i));
    std::vector<const MultiPeriodWindow*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const auto batch = model.make_batch(ptrs);
    const auto bundle = model.forward(batch, false);
    const auto pred = bundle.forecast.data();
    const auto target = batch.target.data();
    for (std::size_t i = 0; i < pred.size(); ++i) sum_sq += (pred[i] - target[i]) * (pred[i] - target[i]);
    n += pred.size();
  }
  return sum_sq / static_cast<double>(n);
}

TrainResult run_training(MlfModel& model, const WindowSource& train_set,
                         const WindowSource& val_set, const TrainOptions& options) {
  const auto& config = model.config();
  if (train_set.count == 0) throw DataError("training split yields no windows");
  std::vector<Tensor> params;
  for (auto& [name, p] : model.named_parameters()) params.push_back(p);
  Adam optimizer(params, AdamOptions{config.learning_rate});

  std::mt19937_64 shuffle_rng(derive_seed(options.seed, kShuffleStream));
  std::vector<std::size_t> order(train_set.count);
  TrainResult result;
  std::optional<MlfModel::Snapshot> best;
  bool stop = false;

  for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    const auto started = Clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0, forecast_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<MultiPeriodWindow> windows;
      for (std::size_t i = start; i < end; ++i) windows.push_back(train_set.get(order[i]));
      std::vector<const MultiPeriodWindow*> ptrs;
      for (const auto& w : windows) ptrs.push_back(&w);
      const auto batch = model.make_batch(ptrs);

      optimizer.zero_grad();
      const auto bundle = model.forward(batch, true);
      const auto loss = mlf_loss(bundle, batch, config.ablation);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged: loss is " + std::to_string(value) +
                                  " at step " + std::to_string(optimizer.steps() + 1),
                              optimizer.steps() + 1);
      }
      loss.total.backward();
      if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
      optimizer.step();
      loss_sum += value;
      forecast_sum += loss.forecast.item();
      ++batches;
      if (options.on_step) options.on_step(optimizer.steps(), value);
      if (options.max_steps && optimizer.steps() >= options.max_steps) {
        stop = true;
        break;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.steps = optimizer.steps();
    record.train_loss = loss_sum / static_cast<double>(batches);
    record.train_forecast_loss = forecast_sum / static_cast<double>(batches);
    if (val_set.count > 0) {
      record.val_loss = validation_loss(model, val_set, std::max<std::size_t>(config.batch_size, 64));
      if (!result.best_val_loss || *record.val_loss < *result.best_val_loss) {
        result.best_val_loss = record.val_loss;
        result.best_epoch = epoch;
        if (options.keep_best) best = model.snapshot();
      }
    } else {
      result.best_epoch = epoch;
    }
    record.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    result.log.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  result.steps = optimizer.steps();
  if (best) model.restore(*best);
  return result;
}

}  // namespace

TrainResult train(MlfModel& model, const PreparedData& prepared, const TrainOptions& options) {
  const auto& config = model.config();
  const auto& ds = prepared.data;
  const std::size_t channels = ds.channels();
  const auto train_anchors = window_anchors(prepared.splits.train, config.longest(),
                                            config.horizon, config.window_stride);
  const auto val_anchors = window_anchors(prepared.splits.val, config.longest(),
                                          config.horizon, config.eval_stride);
  auto source = [&](const std::vector<std::size_t>& anchors) {
    const auto* list = &anchors;
    return WindowSource{anchors.size() * channels, [&ds, &config, list, channels](std::size_t i) {
                          return make_window(ds, (*list)[i / channels], i % channels,
                                             config.period_lengths, config.horizon);
                        }};
  };
  return run_training(model, source(train_anchors), source(val_anchors), options);
}

TrainResult train_on_windows(MlfModel& model, const std::vector<MultiPeriodWindow>& train_set,
                             const std::vector<MultiPeriodWindow>& val_set,
                             const TrainOptions& options) {
  WindowSource tr{train_set.size(), [&](std::size_t i) { return train_set[i]; }};
  WindowSource va{val_set.size(), [&](std::size_t i) { return val_set[i]; }};
  return run_training(model, tr, va, options);
}

Predictions predict(MlfModel& model, const SeriesDataset& data, const IndexRange& range,
                    const PredictOptions& options) {
  const auto& config = model.config();
  const std::size_t channels = data.channels();
  const std::size_t horizon = config.horizon;
  const std::size_t periods = config.periods();
  const auto anchors = window_anchors(range, config.longest(), horizon, options.stride);
  NoGradScope no_grad;

  Predictions out;
  out.horizon = horizon;
  const std::size_t total = anchors.size() * channels;
  const std::size_t tokens = model.total_tokens();
  if (options.collect_diagnostics) {
    out.weights_sum.assign(periods * horizon, 0.0);
    if (config.ablation.attention) {
      out.attention_sum.assign(config.n_blocks, std::vector<double>(tokens * tokens, 0.0));
    }
    out.weights_min_max = {1.0, 0.0};
  }
  const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t start = 0; start < total; start += batch_size) {
    const std::size_t end = std::min(total, start + batch_size);
    std::vector<MultiPeriodWindow> windows;
    for (std::size_t i = start; i < end; ++i) {
      windows.push_back(make_window(data, anchors[i / channels], i % channels,
                                    config.period_lengths, horizon));
    }
    std::vector<const MultiPeriodWindow*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const auto batch = model.make_batch(ptrs);
    const auto bundle = model.forward(batch, false);
    const auto pred = bundle.forecast.data();
    out.pred.insert(out.pred.end(), pred.begin(), pred.end());
    for (const auto& w : windows) {
      out.target.insert(out.target.end(), w.target.begin(), w.target.end());
      out.naive.insert(out.naive.end(), horizon, w.periods.back().back());
      out.channels.push_back(w.channel);
      out.anchors.push_back(w.anchor);
    }
    if (options.collect_diagnostics) {
      if (bundle.weights.defined()) {
        const auto att = bundle.weights.data();
        for (std::size_t i = 0; i < att.size(); ++i) {
          out.weights_sum[i % (periods * horizon)] += att[i];
          out.weights_min_max[0] = std::min(out.weights_min_max[0], att[i]);
          out.weights_min_max[1] = std::max(out.weights_min_max[1], att[i]);
        }
      }
      for (std::size_t e = 0; e < bundle.attention.size(); ++e) {
        const auto scores = bundle.attention[e].data();
        const std::size_t heads = config.n_heads;
        auto& acc = out.attention_sum[e];
        for (std::size_t i = 0; i < scores.size(); ++i) {
          acc[i % (tokens * tokens)] += scores[i] / static_cast<double>(heads);
        }
      }
    }
  }
  if (options.collect_diagnostics) {
    for (const auto& acc : out.attention_sum) {
      double worst = 0.0;
      for (std::size_t r = 0; r < tokens; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < tokens; ++c) row += acc[r * tokens + c];
        worst = std::max(worst, std::abs(row / static_cast<double>(out.windows()) - 1.0));
      }
      out.attention_row_error.push_back(worst);
    }
  }
  return out;
}

EvalResult evaluate(const Predictions& p, const SeriesDataset& data) {
  if (p.windows() == 0) throw DataError("evaluation split yields no windows");
  EvalResult r;
  r.normalized = compute_metrics(p.pred, p.target, p.horizon, "normalized", p.channels, false);
  r.naive_normalized = compute_metrics(p.naive, p.target, p.horizon, "normalized", p.channels, false);
  if (data.normalized()) {
    auto restore = [&](const std::vector<double>& v) {
      std::vector<double> out(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = denormalize(data, v[i], p.channels[i / p.horizon]);
      }
      return out;
    };
    const auto pred = restore(p.pred), target = restore(p.target), naive = restore(p.naive);
    r.original = compute_metrics(pred, target, p.horizon, "original", p.channels, true);
    r.naive_original = compute_metrics(naive, target, p.horizon, "original", p.channels, true);
  } else {
    r.original = compute_metrics(p.pred, p.target, p.horizon, "original", p.channels, true);
    r.naive_original = compute_metrics(p.naive, p.target, p.horizon, "original", p.channels, true);
  }
  return r;
}

std::vector<std::string> normalize_ablation_flags(const std::vector<std::string>& flags) {
  static const std::vector<std::string> known{"irf", "lwi", "map", "ma", "reconstruction_loss"};
  std::vector<std::string> out;
  for (auto f : flags) {
    std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
    if (f == "attention") f = "ma";
    if (f == "reconstruction" || f == "recon") f = "reconstruction_loss";
    if (std::find(known.begin(), known.end(), f) == known.end()) {
      throw std::invalid_argument("unknown ablation flag '" + f +
                                  "' (expected irf, lwi, map, ma, reconstruction_loss)");
    }
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  return out;
}

MlfConfig apply_ablation(const MlfConfig& base, const std::string& flag) {
  MlfConfig c = base;
  if (flag == "irf") c.ablation.irf = false;
  else if (flag == "lwi") c.ablation.lwi = false;
  else if (flag == "map") c.ablation.map = false;
  else if (flag == "ma") c.ablation.attention = false;
  else if (flag == "reconstruction_loss") c.ablation.reconstruction_loss = false;
  else throw std::invalid_argument("unknown ablation flag '" + flag + "'");
  return c;
}

namespace {

void summarize(AblationRow& row) {
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(acc / static_cast<double>(v.size() - 1)) : 0.0;
  };
  stats(row.mse, row.mse_mean, row.mse_std);
  stats(row.mae, row.mae_mean, row.mae_std);
}

}  // namespace

AblationReport ablate(const SeriesDataset& raw, SplitScheme scheme, const MlfConfig& base,
                      const std::vector<std::string>& flags,
                      const std::vector<std::uint64_t>& seeds, std::size_t steps_per_day) {
  if (seeds.empty()) throw std::invalid_argument("ablate: need at least one seed");
  AblationReport report;
  report.seeds = seeds;
  std::vector<std::pair<std::string, MlfConfig>> variants{{"base", base}};
  for (const auto& f : normalize_ablation_flags(flags)) {
    variants.emplace_back("w/o " + f, apply_ablation(base, f));
  }
  const auto prepared = prepare_data(raw, scheme, base, steps_per_day);
  for (const auto& [name, config] : variants) {
    AblationRow row;
    row.variant = name;
    row.config = config;
    for (auto seed : seeds) {
      MlfModel model(config, seed);
      TrainOptions opts;
      opts.seed = seed;
      train(model, prepared, opts);
      PredictOptions po;
      po.stride = config.eval_stride;
      const auto result = evaluate(predict(model, prepared.data, prepared.splits.test, po),
                                   prepared.data);
      row.mse.push_back(result.normalized.mse);
      row.mae.push_back(result.normalized.mae);
    }
    summarize(row);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_ablation_table(const AblationReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "variant" << std::right << std::setw(12) << "mse"
     << std::setw(12) << "mse_std" << std::setw(12) << "mae" << std::setw(12) << "mae_std"
     << '\n';
  os << std::fixed << std::setprecision(6);
  for (const auto& r : report.rows) {
    os << std::left << std::setw(26) << r.variant << std::right << std::setw(12) << r.mse_mean
       << std::setw(12) << r.mse_std << std::setw(12) << r.mae_mean << std::setw(12)
       << r.mae_std << '\n';
  }
  return os.str();
}

}  // namespace mlf
