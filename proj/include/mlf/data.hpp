#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlf {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A multivariate series, T rows by c channels, stored row-major.
struct SeriesDataset {
  std::vector<std::string> channel_names;
  std::vector<std::string> timestamps;
  std::vector<double> values;  // T x c
  std::size_t length = 0;      // T
  // Standardisation statistics (train split), empty until standardize().
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t channels() const { return channel_names.size(); }
  double at(std::size_t t, std::size_t channel) const {
    return values[t * channels() + channel];
  }
  std::vector<double> column(std::size_t channel) const;
  bool normalized() const { return !mean.empty(); }
};

/// Reads a comma-separated file whose first column is a date/identifier
/// (dropped). Every remaining column must parse as a decimal float.
SeriesDataset load_csv(const std::filesystem::path& path,
                       const std::string& date_column_name = "date");
/// Same, with channels restricted to `columns` (in that order).
SeriesDataset load_csv(const std::filesystem::path& path,
                       const std::string& date_column_name,
                       const std::vector<std::string>& columns);

void write_csv(const std::filesystem::path& path, const SeriesDataset& ds);

/// Half-open index range [begin, end). For val/test, `begin` is already
/// extended backwards by the longest period so every window has history.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

enum class SplitScheme {
  kRatio,      // 7:1:2
  kEttMonths,  // 12:4:4 months of 30 days
};

SplitScheme parse_split_scheme(const std::string& name);
std::string to_string(SplitScheme scheme);

struct DatasetSplits {
  IndexRange train;
  IndexRange val;
  IndexRange test;
  // Split boundaries before history extension.
  std::size_t train_end = 0;
  std::size_t val_end = 0;
};

/// `history` is the longest period length; `steps_per_day` only matters for
/// the month-based scheme (24 for hourly data).
DatasetSplits split_dataset(std::size_t length, SplitScheme scheme,
                            std::size_t history, std::size_t horizon,
                            std::size_t steps_per_day = 24);

/// Fits per-channel mean/std on [0, train_end) and transforms every row.
SeriesDataset standardize(const SeriesDataset& raw, std::size_t train_end);

/// Applies previously fitted statistics (e.g. from a checkpoint).
SeriesDataset normalize_with(const SeriesDataset& raw, const std::vector<double>& mean,
                             const std::vector<double>& std);

double denormalize(const SeriesDataset& ds, double value, std::size_t channel);
std::vector<double> denormalize(const SeriesDataset& ds,
                                const std::vector<double>& values,
                                std::size_t channel);

/// S right-aligned history windows of increasing length plus the target.
struct MultiPeriodWindow {
  std::vector<std::vector<double>> periods;  // periods[s].size() == n^s
  std::vector<double> target;                // m values after the anchor
  std::size_t channel = 0;
  std::size_t anchor = 0;  // index of the first target step
};

/// Anchors t with range.begin + n^S <= t and t + m <= range.end, every
/// `stride`-th one.
std::vector<std::size_t> window_anchors(const IndexRange& range,
                                        std::size_t longest, std::size_t horizon,
                                        std::size_t stride = 1);

MultiPeriodWindow make_window(const SeriesDataset& ds, std::size_t anchor,
                              std::size_t channel,
                              const std::vector<std::size_t>& period_lengths,
                              std::size_t horizon);

/// Every valid (anchor, channel) window in `range`, anchors outermost.
std::vector<MultiPeriodWindow> sample_windows(
    const SeriesDataset& ds, const IndexRange& range,
    const std::vector<std::size_t>& period_lengths, std::size_t horizon,
    std::size_t stride = 1);

void validate_period_lengths(const std::vector<std::size_t>& period_lengths);

// Synthetic generators bundled for tests and offline runs.
enum class SynthKind { kTrend, kRegimeSwitch };
SynthKind parse_synth_kind(const std::string& name);

struct SynthOptions {
  SynthKind kind = SynthKind::kRegimeSwitch;
  std::size_t length = 2000;
  std::size_t channels = 1;
  std::uint64_t seed = 7;
  double noise = 0.05;
};

SeriesDataset synthesize(const SynthOptions& options);

}  // namespace mlf
