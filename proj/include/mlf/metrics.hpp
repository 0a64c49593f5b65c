#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlf {

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

double mse_of(std::span<const double> pred, std::span<const double> target);
double mae_of(std::span<const double> pred, std::span<const double> target);
/// 100 * sum|y - yhat| / sum|y|; throws UndefinedMetricError when sum|y| = 0.
double wmape_of(std::span<const double> pred, std::span<const double> target);

/// Forecast error summary over a set of windows.
struct MetricsReport {
  std::string units;  // "normalized" or "original"
  std::size_t samples = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> wmape;           // percent, pooled over channels
  std::vector<double> wmape_per_channel; // percent
  double wmape_channel_sum = 0.0;        // sum over channels (fund-style report)
  std::vector<double> horizon_mse;
  std::vector<double> horizon_mae;
};

/// `pred` and `target` are row-major [samples, horizon]; `channels` (one per
/// sample, may be empty) drives the per-channel WMAPE breakdown. WMAPE is
/// computed only when `with_wmape` is set.
MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target,
                              std::size_t horizon, const std::string& units,
                              std::span<const std::size_t> channels = {},
                              bool with_wmape = false);

/// Consistency statistic: mean over the 30 history steps of (x_h - x_f)^2.
inline constexpr std::size_t kKappaHistory = 30;
double kappa(std::span<const double> history, double forecast_value);

struct KappaPartition {
  std::string label;
  std::size_t count = 0;
  double mean_kappa = 0.0;
};

/// Assigns every sample to the candidate with the smallest error
/// (errors[candidate][sample]) and averages kappa within each group.
std::vector<KappaPartition> kappa_partitions(const std::vector<std::vector<double>>& errors,
                                             std::span<const double> kappas,
                                             const std::vector<std::string>& labels);

}  // namespace mlf
