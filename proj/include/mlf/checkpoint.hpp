#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlf/model.hpp"
#include "mlf/run_config.hpp"

namespace mlf {

inline constexpr int kCheckpointVersion = 1;

/// Per-channel standardisation statistics carried with a checkpoint.
struct Normalization {
  std::vector<std::string> channels;
  std::vector<double> mean;
  std::vector<double> std;
};

/// JSON container: run config, normalisation, and every named parameter and
/// buffer as {name, shape, data} with round-trip exact doubles.
nlohmann::json checkpoint_to_json(MlfModel& model, const RunConfig& run,
                                  const Normalization& norm);
void save_checkpoint(const std::filesystem::path& path, MlfModel& model, const RunConfig& run,
                     const Normalization& norm);

struct LoadedCheckpoint {
  RunConfig run;
  Normalization norm;
  std::unique_ptr<MlfModel> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace mlf
