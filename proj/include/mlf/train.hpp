#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlf/data.hpp"
#include "mlf/metrics.hpp"
#include "mlf/model.hpp"

namespace mlf {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  AdamOptions options_;
  std::size_t steps_ = 0;
};

/// Scales all grads so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

/// Training diverged (non-finite loss).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Normalised series plus its split ranges.
struct PreparedData {
  SeriesDataset data;  // standardised with train statistics
  DatasetSplits splits;
};

PreparedData prepare_data(const SeriesDataset& raw, SplitScheme scheme,
                          const MlfConfig& config, std::size_t steps_per_day = 24);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // cumulative optimiser steps
  double train_loss = 0.0;
  double train_forecast_loss = 0.0;
  std::optional<double> val_loss;  // forecast MSE, inference mode
  double wall_seconds = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 1;
  std::size_t max_steps = 0;  // 0: run all epochs
  bool keep_best = true;      // restore the best-validation parameters
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_loss;
};

/// Adam over shuffled mini-batches of (anchor, channel) windows from the
/// train split, minimising mlf_loss.
TrainResult train(MlfModel& model, const PreparedData& prepared,
                  const TrainOptions& options = {});

/// Trains on an explicit list of windows (used by tests and small tools).
TrainResult train_on_windows(MlfModel& model, const std::vector<MultiPeriodWindow>& train_set,
                             const std::vector<MultiPeriodWindow>& val_set,
                             const TrainOptions& options = {});

/// Per-window forecasts over a split.
struct Predictions {
  std::size_t horizon = 0;
  std::vector<double> pred;    // [N, m], normalised units
  std::vector<double> target;  // [N, m]
  std::vector<double> naive;   // repeat-last-value forecast, [N, m]
  std::vector<std::size_t> channels;
  std::vector<std::size_t> anchors;
  std::vector<double> weights_sum;  // sum over windows of Att, [S, m]
  std::vector<std::vector<double>> attention_sum;  // per block, [T, T]
  std::vector<double> weights_min_max;  // {min, max} over every Att entry
  std::vector<double> attention_row_error;  // max |row sum - 1| per block
  std::size_t windows() const { return channels.size(); }
};

struct PredictOptions {
  std::size_t batch_size = 256;
  std::size_t stride = 1;
  bool collect_diagnostics = false;
};

Predictions predict(MlfModel& model, const SeriesDataset& data, const IndexRange& range,
                    const PredictOptions& options = {});

/// Metrics in normalised and original units, with the naive baseline.
struct EvalResult {
  MetricsReport normalized;
  MetricsReport original;
  MetricsReport naive_normalized;
  MetricsReport naive_original;
};

EvalResult evaluate(const Predictions& predictions, const SeriesDataset& data);

/// One row per variant of the ablation comparison.
struct AblationRow {
  std::string variant;  // "base" or "w/o <flag>"
  MlfConfig config;
  std::vector<double> mse;  // per seed
  std::vector<double> mae;
  double mse_mean = 0.0, mse_std = 0.0;
  double mae_mean = 0.0, mae_std = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
};

/// Parses and deduplicates ablation flag names from {irf, lwi, map, ma,
/// reconstruction_loss}; throws std::invalid_argument on an unknown name.
std::vector<std::string> normalize_ablation_flags(const std::vector<std::string>& flags);
MlfConfig apply_ablation(const MlfConfig& base, const std::string& flag);

/// Trains the base config and each single-flag variant under identical
/// seeds and reports test metrics (normalised units).
AblationReport ablate(const SeriesDataset& raw, SplitScheme scheme, const MlfConfig& base,
                      const std::vector<std::string>& flags,
                      const std::vector<std::uint64_t>& seeds,
                      std::size_t steps_per_day = 24);

std::string format_ablation_table(const AblationReport& report);

}  // namespace mlf
