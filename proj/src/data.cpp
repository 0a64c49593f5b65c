#include "mlf/data.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace mlf {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::optional<double> parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

std::vector<double> SeriesDataset::column(std::size_t channel) const {
  if (channel >= channels()) throw DataError("unknown channel " + std::to_string(channel));
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) out[t] = at(t, channel);
  return out;
}

SeriesDataset load_csv(const std::filesystem::path& path,
                       const std::string& date_column_name) {
  return load_csv(path, date_column_name, {});
}

SeriesDataset load_csv(const std::filesystem::path& path,
                       const std::string& date_column_name,
                       const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 2) {
    throw DataError(path.string() + ": need a date column and at least one value column");
  }
  if (!date_column_name.empty() && header[0] != date_column_name) {
    throw DataError(path.string() + ": first column is '" + header[0] +
                    "', expected date column '" + date_column_name + "'");
  }

  std::vector<std::size_t> selected;
  if (columns.empty()) {
    for (std::size_t c = 1; c < header.size(); ++c) selected.push_back(c);
  } else {
    for (const auto& name : columns) {
      const auto it = std::find(header.begin() + 1, header.end(), name);
      if (it == header.end()) throw DataError(path.string() + ": no column named '" + name + "'");
      selected.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  }

  SeriesDataset ds;
  for (auto c : selected) ds.channel_names.push_back(header[c]);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    ds.timestamps.push_back(trim(fields[0]));
    for (auto c : selected) {
      const auto v = parse_double(fields[c]);
      if (!v) {
        throw DataError(path.string() + ": non-numeric value '" + fields[c] +
                        "' at row " + std::to_string(row) + ", column " +
                        std::to_string(c) + " (" + header[c] + ")");
      }
      ds.values.push_back(*v);
    }
  }
  ds.length = ds.timestamps.size();
  if (ds.length < 2) {
    throw DataError(path.string() + ": need at least 2 data rows, found " +
                    std::to_string(ds.length));
  }
  return ds;
}

void write_csv(const std::filesystem::path& path, const SeriesDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date";
  for (const auto& n : ds.channel_names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < ds.length; ++t) {
    out << (t < ds.timestamps.size() ? ds.timestamps[t] : std::to_string(t));
    for (std::size_t c = 0; c < ds.channels(); ++c) out << ',' << ds.at(t, c);
    out << '\n';
  }
}

SplitScheme parse_split_scheme(const std::string& name) {
  if (name == "ratio") return SplitScheme::kRatio;
  if (name == "ett_months") return SplitScheme::kEttMonths;
  throw DataError("unknown split scheme '" + name + "' (expected ratio or ett_months)");
}

std::string to_string(SplitScheme scheme) {
  return scheme == SplitScheme::kRatio ? "ratio" : "ett_months";
}

DatasetSplits split_dataset(std::size_t length, SplitScheme scheme,
                            std::size_t history, std::size_t horizon,
                            std::size_t steps_per_day) {
  if (length < history + horizon) {
    throw DataError("dataset of length " + std::to_string(length) +
                    " is shorter than longest period + horizon = " +
                    std::to_string(history + horizon));
  }
  DatasetSplits s;
  std::size_t test_end = length;
  if (scheme == SplitScheme::kRatio) {
    s.train_end = static_cast<std::size_t>(static_cast<double>(length) * 0.7);
    const auto test_len = static_cast<std::size_t>(static_cast<double>(length) * 0.2);
    s.val_end = length - test_len;
  } else {
    const std::size_t month = 30 * steps_per_day;
    s.train_end = 12 * month;
    s.val_end = s.train_end + 4 * month;
    test_end = s.val_end + 4 * month;
    if (test_end > length) {
      throw DataError("ett_months split needs " + std::to_string(test_end) +
                      " rows, dataset has " + std::to_string(length));
    }
  }
  const auto back = [history](std::size_t b) { return b > history ? b - history : 0; };
  s.train = {0, s.train_end};
  s.val = {back(s.train_end), s.val_end};
  s.test = {back(s.val_end), test_end};
  return s;
}

SeriesDataset standardize(const SeriesDataset& raw, std::size_t train_end) {
  if (train_end < 2 || train_end > raw.length) {
    throw DataError("standardize: invalid train range of " + std::to_string(train_end) + " rows");
  }
  SeriesDataset ds = raw;
  const std::size_t c = raw.channels();
  ds.mean.assign(c, 0.0);
  ds.std.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = 0.0;
    for (std::size_t t = 0; t < train_end; ++t) m += raw.at(t, ch);
    m /= static_cast<double>(train_end);
    double var = 0.0;
    for (std::size_t t = 0; t < train_end; ++t) {
      const double d = raw.at(t, ch) - m;
      var += d * d;
    }
    var /= static_cast<double>(train_end);
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
      throw DataError("channel '" + raw.channel_names[ch] +
                      "' has zero variance on the train split");
    }
    ds.mean[ch] = m;
    ds.std[ch] = sd;
    for (std::size_t t = 0; t < raw.length; ++t) {
      ds.values[t * c + ch] = (raw.at(t, ch) - m) / sd;
    }
  }
  return ds;
}

SeriesDataset normalize_with(const SeriesDataset& raw, const std::vector<double>& mean,
                             const std::vector<double>& std) {
  const std::size_t c = raw.channels();
  if (mean.size() != c || std.size() != c) {
    throw DataError("normalisation statistics cover " + std::to_string(mean.size()) +
                    " channels, dataset has " + std::to_string(c));
  }
  SeriesDataset ds = raw;
  ds.mean = mean;
  ds.std = std;
  for (std::size_t t = 0; t < raw.length; ++t)
    for (std::size_t ch = 0; ch < c; ++ch)
      ds.values[t * c + ch] = (raw.at(t, ch) - mean[ch]) / std[ch];
  return ds;
}

double denormalize(const SeriesDataset& ds, double value, std::size_t channel) {
  if (!ds.normalized()) throw DataError("dataset carries no normalisation statistics");
  if (channel >= ds.mean.size()) throw DataError("unknown channel " + std::to_string(channel));
  return value * ds.std[channel] + ds.mean[channel];
}

std::vector<double> denormalize(const SeriesDataset& ds,
                                const std::vector<double>& values,
                                std::size_t channel) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(denormalize(ds, v, channel));
  return out;
}

void validate_period_lengths(const std::vector<std::size_t>& period_lengths) {
  if (period_lengths.empty()) throw DataError("period_lengths is empty");
  for (std::size_t i = 0; i < period_lengths.size(); ++i) {
    if (period_lengths[i] == 0) throw DataError("period lengths must be positive");
    if (i > 0 && period_lengths[i] <= period_lengths[i - 1]) {
      throw DataError("period_lengths must be strictly increasing");
    }
  }
}

std::vector<std::size_t> window_anchors(const IndexRange& range,
                                        std::size_t longest, std::size_t horizon,
                                        std::size_t stride) {
  std::vector<std::size_t> anchors;
  if (stride == 0) stride = 1;
  for (std::size_t t = range.begin + longest; t + horizon <= range.end; t += stride) {
    anchors.push_back(t);
  }
  return anchors;
}

MultiPeriodWindow make_window(const SeriesDataset& ds, std::size_t anchor,
                              std::size_t channel,
                              const std::vector<std::size_t>& period_lengths,
                              std::size_t horizon) {
  const std::size_t longest = period_lengths.back();
  if (anchor < longest || anchor + horizon > ds.length) {
    throw DataError("window at anchor " + std::to_string(anchor) + " does not fit the series");
  }
  if (channel >= ds.channels()) throw DataError("unknown channel " + std::to_string(channel));
  MultiPeriodWindow w;
  w.channel = channel;
  w.anchor = anchor;
  for (auto n : period_lengths) {
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = ds.at(anchor - n + i, channel);
    w.periods.push_back(std::move(values));
  }
  w.target.resize(horizon);
  for (std::size_t i = 0; i < horizon; ++i) w.target[i] = ds.at(anchor + i, channel);
  return w;
}

std::vector<MultiPeriodWindow> sample_windows(
    const SeriesDataset& ds, const IndexRange& range,
    const std::vector<std::size_t>& period_lengths, std::size_t horizon,
    std::size_t stride) {
  validate_period_lengths(period_lengths);
  std::vector<MultiPeriodWindow> out;
  for (auto t : window_anchors(range, period_lengths.back(), horizon, stride)) {
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      out.push_back(make_window(ds, t, c, period_lengths, horizon));
    }
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "trend") return SynthKind::kTrend;
  if (name == "regime-switch") return SynthKind::kRegimeSwitch;
  throw DataError("unknown synthetic kind '" + name + "' (expected trend or regime-switch)");
}

SeriesDataset synthesize(const SynthOptions& options) {
  if (options.length < 2 || options.channels == 0) {
    throw DataError("synthetic series needs length >= 2 and at least one channel");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  SeriesDataset ds;
  ds.length = options.length;
  ds.values.assign(options.length * options.channels, 0.0);
  for (std::size_t t = 0; t < options.length; ++t) {
    ds.timestamps.push_back(std::to_string(t));
  }
  for (std::size_t c = 0; c < options.channels; ++c) {
    ds.channel_names.push_back("ch" + std::to_string(c));
    const double phase = two_pi * unit(rng);
    if (options.kind == SynthKind::kTrend) {
      const double slope = 0.01 * (1.0 + 0.5 * static_cast<double>(c));
      for (std::size_t t = 0; t < options.length; ++t) {
        const double x = static_cast<double>(t);
        ds.values[t * options.channels + c] =
            slope * x + 0.5 * std::sin(two_pi * x / 24.0 + phase) +
            options.noise * noise(rng);
      }
      continue;
    }
    // Slow sinusoid plus a fast component whose shape follows a hidden
    // Markov regime; regimes persist for ~40 steps on average.
    constexpr double kSwitchProb = 0.025;
    constexpr double kFastPeriods[] = {4.0, 7.0, 11.0};
    constexpr double kFastAmps[] = {0.9, -0.9, 0.6};
    std::size_t regime = 0;
    double fast_phase = 0.0;
    for (std::size_t t = 0; t < options.length; ++t) {
      if (unit(rng) < kSwitchProb) regime = (regime + 1 + (unit(rng) < 0.5 ? 0 : 1)) % 3;
      fast_phase += two_pi / kFastPeriods[regime];
      const double x = static_cast<double>(t);
      ds.values[t * options.channels + c] =
          std::sin(two_pi * x / 200.0 + phase) +
          kFastAmps[regime] * std::sin(fast_phase) + options.noise * noise(rng);
    }
  }
  return ds;
}

}  // namespace mlf
