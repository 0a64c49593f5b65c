#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlf/metrics.hpp"
#include "mlf/train.hpp"

namespace mlf {

/// Exit codes; stderr lines read "error[<code name>]: message".
enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kShape = 5,
  kDiverged = 6,
  kIo = 7,
};

const char* exit_code_name(ExitCode code);

/// Entry point shared by the `mlf` binary and the tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Environment variable that overrides the output directory.
inline constexpr const char* kOutputDirEnv = "MLF_OUTPUT_DIR";

nlohmann::json metrics_to_json(const MetricsReport& report);
nlohmann::json eval_to_json(const EvalResult& result, bool include_naive);
nlohmann::json ablation_to_json(const AblationReport& report);

/// Writes the mean attention matrix of each block as CSV (T x T) plus a
/// JSON sidecar mapping token ranges to periods.
void export_attention(const std::string& directory, const Predictions& predictions,
                      const MlfModel& model);
/// Writes the mean LWI weights (rows: periods, columns: horizon steps).
void export_weights(const std::string& path, const Predictions& predictions,
                    const MlfModel& model);

}  // namespace mlf
