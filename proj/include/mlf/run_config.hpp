#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlf/data.hpp"
#include "mlf/model.hpp"

namespace mlf {

/// Invalid configuration; `field` is the dotted path of the culprit.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DatasetConfig {
  std::string path;  // empty: use the synthetic generator
  std::string date_column = "date";
  std::vector<std::string> columns;  // empty: all value columns
  SplitScheme split = SplitScheme::kRatio;
  std::size_t steps_per_day = 24;
  std::optional<SynthOptions> synth;
};

/// Everything needed to reproduce a run.
struct RunConfig {
  DatasetConfig dataset;
  MlfConfig model;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const MlfConfig& config);
/// Reads "model" and "train" sections; `period_lengths` and `horizon` are
/// required, everything else falls back to defaults.
MlfConfig mlf_config_from_json(const nlohmann::json& model, const nlohmann::json& train);

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` where key is a dotted path (e.g. model.d_model) and
/// value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Loads the dataset described by the config (file or synthetic).
SeriesDataset load_dataset(const DatasetConfig& config);

}  // namespace mlf
