#include "mlf/metrics.hpp"

#include <cmath>

namespace mlf {

namespace {

void require_same(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(a.size()) + " predictions vs " +
                                std::to_string(b.size()) + " targets");
  }
  if (a.empty()) throw std::invalid_argument("metrics: no values");
}

}  // namespace

double mse_of(std::span<const double> pred, std::span<const double> target) {
  require_same(pred, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = target[i] - pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double mae_of(std::span<const double> pred, std::span<const double> target) {
  require_same(pred, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(target[i] - pred[i]);
  return acc / static_cast<double>(pred.size());
}

double wmape_of(std::span<const double> pred, std::span<const double> target) {
  require_same(pred, target);
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err += std::abs(target[i] - pred[i]);
    scale += std::abs(target[i]);
  }
  if (scale == 0.0) throw UndefinedMetricError("WMAPE undefined: sum of |target| is zero");
  return 100.0 * err / scale;
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target,
                              std::size_t horizon, const std::string& units,
                              std::span<const std::size_t> channels, bool with_wmape) {
  require_same(pred, target);
  if (horizon == 0 || pred.size() % horizon != 0) {
    throw std::invalid_argument("metrics: value count is not a multiple of the horizon");
  }
  const std::size_t samples = pred.size() / horizon;
  if (!channels.empty() && channels.size() != samples) {
    throw std::invalid_argument("metrics: channel ids do not match sample count");
  }
  MetricsReport r;
  r.units = units;
  r.samples = samples;
  r.mse = mse_of(pred, target);
  r.mae = mae_of(pred, target);
  r.horizon_mse.assign(horizon, 0.0);
  r.horizon_mae.assign(horizon, 0.0);
  for (std::size_t i = 0; i < samples; ++i)
    for (std::size_t h = 0; h < horizon; ++h) {
      const double d = target[i * horizon + h] - pred[i * horizon + h];
      r.horizon_mse[h] += d * d;
      r.horizon_mae[h] += std::abs(d);
    }
  for (std::size_t h = 0; h < horizon; ++h) {
    r.horizon_mse[h] /= static_cast<double>(samples);
    r.horizon_mae[h] /= static_cast<double>(samples);
  }
  if (with_wmape) try {
    r.wmape = wmape_of(pred, target);
    if (!channels.empty()) {
      std::size_t n_channels = 0;
      for (auto c : channels) n_channels = std::max(n_channels, c + 1);
      std::vector<double> err(n_channels, 0.0), scale(n_channels, 0.0);
      for (std::size_t i = 0; i < samples; ++i)
        for (std::size_t h = 0; h < horizon; ++h) {
          const auto k = i * horizon + h;
          err[channels[i]] += std::abs(target[k] - pred[k]);
          scale[channels[i]] += std::abs(target[k]);
        }
      for (std::size_t c = 0; c < n_channels; ++c) {
        if (scale[c] == 0.0) {
          throw UndefinedMetricError("WMAPE undefined for channel " + std::to_string(c) +
                                     ": sum of |target| is zero");
        }
        r.wmape_per_channel.push_back(100.0 * err[c] / scale[c]);
        r.wmape_channel_sum += r.wmape_per_channel.back();
      }
    } else {
      r.wmape_channel_sum = *r.wmape;
    }
  } catch (const UndefinedMetricError&) {
    // reported as absent rather than failing the whole evaluation
    r.wmape.reset();
    r.wmape_per_channel.clear();
    r.wmape_channel_sum = 0.0;
  }
  return r;
}

double kappa(std::span<const double> history, double forecast_value) {
  if (history.size() != kKappaHistory) {
    throw std::invalid_argument("kappa needs exactly 30 history steps, got " +
                                std::to_string(history.size()));
  }
  double acc = 0.0;
  for (double x : history) acc += (x - forecast_value) * (x - forecast_value);
  return acc / static_cast<double>(history.size());
}

std::vector<KappaPartition> kappa_partitions(const std::vector<std::vector<double>>& errors,
                                             std::span<const double> kappas,
                                             const std::vector<std::string>& labels) {
  if (errors.empty() || errors.size() != labels.size()) {
    throw std::invalid_argument("kappa_partitions: need one label per candidate");
  }
  for (const auto& e : errors) {
    if (e.size() != kappas.size()) {
      throw std::invalid_argument("kappa_partitions: error/kappa length mismatch");
    }
  }
  std::vector<KappaPartition> out(errors.size());
  for (std::size_t c = 0; c < errors.size(); ++c) out[c].label = labels[c];
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < errors.size(); ++c) {
      if (errors[c][i] < errors[best][i]) best = c;
    }
    out[best].count += 1;
    out[best].mean_kappa += kappas[i];
  }
  for (auto& p : out) {
    if (p.count) p.mean_kappa /= static_cast<double>(p.count);
  }
  return out;
}

}  // namespace mlf
