#include "mlf/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "mlf/checkpoint.hpp"
#include "mlf/run_config.hpp"
#include "mlf/tensor.hpp"

namespace mlf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

/// Flag wins, then the environment, then the fallback.
std::string resolve_output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return fallback;
}

json read_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
}

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string synth;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config,-c", a.config, "Run config (JSON)")->required();
  cmd->add_option("--set", a.overrides, "Override a config field, key=value");
  cmd->add_option("--seed", a.seed, "Master seed");
  cmd->add_option("--output-dir,-o", a.output_dir, "Output directory");
  cmd->add_option("--synth", a.synth, "Use the synthetic generator (trend|regime-switch)");
}

RunConfig resolve_run_config(const ConfigArgs& a) {
  json j = read_config_json(a.config);
  for (const auto& o : a.overrides) apply_override(j, o);
  if (!a.synth.empty()) {
    if (!j.contains("dataset") || !j["dataset"].is_object()) j["dataset"] = json::object();
    j["dataset"].erase("path");
    if (!j["dataset"].contains("synth")) j["dataset"]["synth"] = json::object();
    j["dataset"]["synth"]["kind"] = a.synth;
  }
  RunConfig run = run_config_from_json(j);
  if (a.seed) run.seed = *a.seed;
  run.output_dir = resolve_output_dir(a.output_dir, run.output_dir);
  return run;
}

Normalization normalization_of(const SeriesDataset& data) {
  return {data.channel_names, data.mean, data.std};
}

void check_channels(const SeriesDataset& raw, const Normalization& norm) {
  if (raw.channels() != norm.channels.size()) {
    throw DimensionError("checkpoint was trained on " + std::to_string(norm.channels.size()) +
                         " channels, dataset has " + std::to_string(raw.channels()));
  }
}

IndexRange pick_split(const DatasetSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

json epoch_to_json(const EpochRecord& r) {
  json j = {{"type", "epoch"},
            {"epoch", r.epoch},
            {"steps", r.steps},
            {"train_loss", r.train_loss},
            {"train_forecast_loss", r.train_forecast_loss},
            {"wall_seconds", r.wall_seconds}};
  j["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------- train

int cmd_train(const ConfigArgs& args, std::ostream& out) {
  const RunConfig run = resolve_run_config(args);
  const fs::path dir = run.output_dir;
  fs::create_directories(dir);
  write_json(dir / "resolved_config.json", to_json(run));

  const SeriesDataset raw = load_dataset(run.dataset);
  const PreparedData prepared =
      prepare_data(raw, run.dataset.split, run.model, run.dataset.steps_per_day);
  MlfModel model(run.model, run.seed);

  auto log = open_out(dir / "train_log.jsonl");
  TrainOptions opts;
  opts.seed = run.seed;
  opts.on_epoch = [&](const EpochRecord& r) {
    log << epoch_to_json(r).dump() << '\n';
    log.flush();
    out << "epoch " << r.epoch << " train_loss " << r.train_loss;
    if (r.val_loss) out << " val_mse " << *r.val_loss;
    out << '\n';
  };
  const TrainResult result = train(model, prepared, opts);

  save_checkpoint(dir / "checkpoint.json", model, run, normalization_of(prepared.data));

  PredictOptions po;
  po.stride = run.model.eval_stride;
  const EvalResult test =
      evaluate(predict(model, prepared.data, prepared.splits.test, po), prepared.data);
  json record = {{"type", "test"}, {"split", "test"}, {"best_epoch", result.best_epoch},
                 {"steps", result.steps}};
  record["metrics"] = eval_to_json(test, false);
  log << record.dump() << '\n';
  out << "test mse " << test.normalized.mse << " mae " << test.normalized.mae
      << " (normalized)\n";
  out << "checkpoint " << (dir / "checkpoint.json").string() << '\n';
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string output_dir;
  bool export_attention = false;
  bool export_weights = false;
  bool naive = false;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  RunConfig run = ck.run;
  if (!args.data.empty()) {
    run.dataset.path = args.data;
    run.dataset.synth.reset();
  }
  const fs::path dir =
      resolve_output_dir(args.output_dir, fs::path(args.checkpoint).parent_path().string());
  fs::create_directories(dir.empty() ? fs::path(".") : dir);
  write_json(dir / "eval_config.json",
             {{"command", "eval"},
              {"checkpoint", args.checkpoint},
              {"dataset", to_json(run)["dataset"]},
              {"split", args.split},
              {"export_attention", args.export_attention},
              {"export_weights", args.export_weights},
              {"naive", args.naive}});

  const SeriesDataset raw = load_dataset(run.dataset);
  check_channels(raw, ck.norm);
  const SeriesDataset data = normalize_with(raw, ck.norm.mean, ck.norm.std);
  const auto& cfg = ck.model->config();
  const DatasetSplits splits = split_dataset(data.length, run.dataset.split, cfg.longest(),
                                             cfg.horizon, run.dataset.steps_per_day);
  PredictOptions po;
  po.stride = cfg.eval_stride;
  po.collect_diagnostics = args.export_attention || args.export_weights;
  const Predictions p = predict(*ck.model, data, pick_split(splits, args.split), po);
  json report = eval_to_json(evaluate(p, data), args.naive);
  report["split"] = args.split;
  write_json(dir / "eval_metrics.json", report);
  if (args.export_attention) export_attention((dir / "attention").string(), p, *ck.model);
  if (args.export_weights) export_weights((dir / "lwi_weights.csv").string(), p, *ck.model);
  out << report.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------- forecast

struct ForecastArgs {
  std::string checkpoint;
  std::string data;
  std::optional<std::size_t> horizon;
  std::string out_path;
  std::string output_dir;
  std::string date_column;
};

int cmd_forecast(const ForecastArgs& args, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const auto& cfg = ck.model->config();
  const std::size_t horizon = args.horizon.value_or(cfg.horizon);
  if (horizon == 0 || horizon > cfg.horizon) {
    throw UsageError("--horizon must be in [1, " + std::to_string(cfg.horizon) +
                     "] for this checkpoint");
  }
  const std::string date_col =
      args.date_column.empty() ? ck.run.dataset.date_column : args.date_column;
  const SeriesDataset raw = load_csv(args.data, date_col, ck.run.dataset.columns);
  check_channels(raw, ck.norm);
  if (raw.length < cfg.longest()) {
    throw DataError("forecast needs at least " + std::to_string(cfg.longest()) +
                    " rows of history, " + args.data + " has " + std::to_string(raw.length));
  }
  const SeriesDataset data = normalize_with(raw, ck.norm.mean, ck.norm.std);

  std::vector<MultiPeriodWindow> windows(data.channels());
  std::vector<const MultiPeriodWindow*> ptrs;
  for (std::size_t ch = 0; ch < data.channels(); ++ch) {
    auto& w = windows[ch];
    w.channel = ch;
    w.anchor = data.length;
    for (auto n : cfg.period_lengths) {
      w.periods.emplace_back();
      for (std::size_t t = data.length - n; t < data.length; ++t)
        w.periods.back().push_back(data.at(t, ch));
    }
    w.target.assign(cfg.horizon, 0.0);
    ptrs.push_back(&w);
  }
  Tensor forecast;
  {
    NoGradScope no_grad;
    const Batch batch = ck.model->make_batch(ptrs);
    forecast = ck.model->forward(batch, false).forecast;
  }

  const fs::path dir =
      resolve_output_dir(args.output_dir, fs::path(args.checkpoint).parent_path().string());
  const fs::path path = args.out_path.empty() ? dir / "forecast.csv" : fs::path(args.out_path);
  write_json((path.has_parent_path() ? path.parent_path() : fs::path(".")) /
                 "forecast_config.json",
             {{"command", "forecast"},
              {"checkpoint", args.checkpoint},
              {"data", args.data},
              {"horizon", horizon},
              {"out", path.string()}});
  auto csv = open_out(path);
  csv << "step";
  for (const auto& name : data.channel_names) csv << ',' << name;
  csv << '\n' << std::setprecision(17);
  const auto& v = forecast.data();
  for (std::size_t h = 0; h < horizon; ++h) {
    csv << h + 1;
    for (std::size_t ch = 0; ch < data.channels(); ++ch)
      csv << ',' << denormalize(data, v[ch * cfg.horizon + h], ch);
    csv << '\n';
  }
  out << "wrote " << horizon << " forecast rows to " << path.string() << '\n';
  return 0;
}

// --------------------------------------------------------------- ablate

struct AblateArgs {
  ConfigArgs config;
  std::string flags;
  std::size_t seeds = 1;
};

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(const AblateArgs& args, std::ostream& out) {
  const RunConfig run = resolve_run_config(args.config);
  if (args.seeds == 0) throw UsageError("--seeds must be at least 1");
  const auto flags = normalize_ablation_flags(split_csv_list(args.flags));
  if (flags.empty()) throw UsageError("--flags needs at least one ablation flag");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < args.seeds; ++i) seeds.push_back(run.seed + i);

  const fs::path dir = run.output_dir;
  fs::create_directories(dir);
  json snapshot = to_json(run);
  write_json(dir / "resolved_config.json", snapshot);
  write_json(dir / "ablate_config.json", {{"flags", flags}, {"seeds", seeds}});

  const SeriesDataset raw = load_dataset(run.dataset);
  const AblationReport report =
      ablate(raw, run.dataset.split, run.model, flags, seeds, run.dataset.steps_per_day);
  write_json(dir / "ablation.json", ablation_to_json(report));
  const std::string table = format_ablation_table(report);
  open_out(dir / "ablation.txt") << table;
  out << table;
  return 0;
}

// ----------------------------------------------------------- synth-data

struct SynthArgs {
  std::string kind = "regime-switch";
  std::size_t length = 2000;
  std::size_t channels = 1;
  std::uint64_t seed = 7;
  double noise = 0.05;
  std::string out_path;
};

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  SynthOptions o;
  o.kind = parse_synth_kind(args.kind);
  o.length = args.length;
  o.channels = args.channels;
  o.seed = args.seed;
  o.noise = args.noise;
  const SeriesDataset ds = synthesize(o);
  const fs::path path = args.out_path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_csv(path, ds);
  out << "wrote " << ds.length << " rows x " << ds.channels() << " channels to "
      << path.string() << '\n';
  return 0;
}

int report_error(std::ostream& err, ExitCode code, const std::string& msg) {
  err << "error[" << exit_code_name(code) << "]: " << msg << '\n';
  return static_cast<int>(code);
}

}  // namespace

const char* exit_code_name(ExitCode code) {
  switch (code) {
    case ExitCode::kOk: return "OK";
    case ExitCode::kInternal: return "E_INTERNAL";
    case ExitCode::kUsage: return "E_USAGE";
    case ExitCode::kConfig: return "E_CONFIG";
    case ExitCode::kData: return "E_DATA";
    case ExitCode::kShape: return "E_SHAPE";
    case ExitCode::kDiverged: return "E_DIVERGED";
    case ExitCode::kIo: return "E_IO";
  }
  return "E_INTERNAL";
}

json metrics_to_json(const MetricsReport& r) {
  json j = {{"units", r.units},         {"samples", r.samples},
            {"mse", r.mse},             {"mae", r.mae},
            {"horizon_mse", r.horizon_mse}, {"horizon_mae", r.horizon_mae}};
  if (r.wmape) {
    j["wmape"] = *r.wmape;
    j["wmape_per_channel"] = r.wmape_per_channel;
    j["wmape_channel_sum"] = r.wmape_channel_sum;
  }
  return j;
}

json eval_to_json(const EvalResult& r, bool include_naive) {
  json j = {{"normalized", metrics_to_json(r.normalized)},
            {"original", metrics_to_json(r.original)}};
  if (include_naive) {
    j["naive"] = {{"normalized", metrics_to_json(r.naive_normalized)},
                  {"original", metrics_to_json(r.naive_original)}};
  }
  return j;
}

json ablation_to_json(const AblationReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"variant", r.variant},
                    {"mse", r.mse},
                    {"mae", r.mae},
                    {"mse_mean", r.mse_mean},
                    {"mse_std", r.mse_std},
                    {"mae_mean", r.mae_mean},
                    {"mae_std", r.mae_std}});
  }
  return {{"seeds", report.seeds}, {"units", "normalized"}, {"rows", rows}};
}

void export_attention(const std::string& directory, const Predictions& p, const MlfModel& model) {
  if (p.attention_sum.empty()) {
    throw UsageError("no attention maps collected (attention layer disabled?)");
  }
  const fs::path dir = directory;
  fs::create_directories(dir);
  const std::size_t t = model.total_tokens();
  const double inv = 1.0 / static_cast<double>(p.windows());
  for (std::size_t e = 0; e < p.attention_sum.size(); ++e) {
    auto csv = open_out(dir / ("block" + std::to_string(e) + ".csv"));
    csv << std::setprecision(17);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t k = 0; k < t; ++k) {
        if (k) csv << ',';
        csv << p.attention_sum[e][i * t + k] * inv;
      }
      csv << '\n';
    }
  }
  json periods = json::array();
  std::size_t start = 0;
  const auto& cfg = model.config();
  for (std::size_t s = 0; s < cfg.periods(); ++s) {
    const std::size_t n = model.period_tokens()[s];
    periods.push_back({{"period", s},
                       {"window_length", cfg.period_lengths[s]},
                       {"token_begin", start},
                       {"token_end", start + n}});
    start += n;
  }
  write_json(dir / "tokens.json", {{"tokens", t},
                                   {"blocks", p.attention_sum.size()},
                                   {"averaged_over", "heads and windows"},
                                   {"periods", periods}});
}

void export_weights(const std::string& path, const Predictions& p, const MlfModel& model) {
  const auto& cfg = model.config();
  if (p.weights_sum.empty()) throw UsageError("no LWI weights collected (LWI disabled?)");
  auto csv = open_out(path);
  csv << "period,window_length";
  for (std::size_t h = 0; h < cfg.horizon; ++h) csv << ",h" << h + 1;
  csv << '\n' << std::setprecision(17);
  const double inv = 1.0 / static_cast<double>(p.windows());
  for (std::size_t s = 0; s < cfg.periods(); ++s) {
    csv << s << ',' << cfg.period_lengths[s];
    for (std::size_t h = 0; h < cfg.horizon; ++h)
      csv << ',' << p.weights_sum[s * cfg.horizon + h] * inv;
    csv << '\n';
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-period forecasting: train, evaluate, forecast, ablate"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  add_config_options(train_cmd, train_args);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data, "CSV overriding the checkpoint's dataset");
  eval_cmd->add_option("--split", eval_args.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--output-dir,-o", eval_args.output_dir);
  eval_cmd->add_flag("--export-attention", eval_args.export_attention);
  eval_cmd->add_flag("--export-weights", eval_args.export_weights);
  eval_cmd->add_flag("--naive", eval_args.naive, "Include repeat-last-value baseline metrics");

  ForecastArgs fc_args;
  auto* fc_cmd = app.add_subcommand("forecast", "Forecast the steps after a CSV's last row");
  fc_cmd->add_option("--checkpoint", fc_args.checkpoint)->required();
  fc_cmd->add_option("--data", fc_args.data)->required();
  fc_cmd->add_option("--horizon", fc_args.horizon);
  fc_cmd->add_option("--out", fc_args.out_path);
  fc_cmd->add_option("--output-dir,-o", fc_args.output_dir);
  fc_cmd->add_option("--date-column", fc_args.date_column);

  AblateArgs ab_args;
  auto* ab_cmd = app.add_subcommand("ablate", "Compare the base config with ablated variants");
  add_config_options(ab_cmd, ab_args.config);
  ab_cmd->add_option("--flags", ab_args.flags, "Comma-separated: irf,lwi,map,ma,reconstruction_loss")
      ->required();
  ab_cmd->add_option("--seeds", ab_args.seeds, "Number of seeds per variant");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic dataset as CSV");
  synth_cmd->add_option("--kind", synth_args.kind)
      ->check(CLI::IsMember({"trend", "regime-switch"}));
  synth_cmd->add_option("--length", synth_args.length);
  synth_cmd->add_option("--channels", synth_args.channels);
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--noise", synth_args.noise);
  synth_cmd->add_option("--out", synth_args.out_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return report_error(err, ExitCode::kUsage, e.what());
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*fc_cmd) return cmd_forecast(fc_args, out);
    if (*ab_cmd) return cmd_ablate(ab_args, out);
    if (*synth_cmd) return cmd_synth(synth_args, out);
    return report_error(err, ExitCode::kUsage, "no command given");
  } catch (const ConfigError& e) {
    return report_error(err, ExitCode::kConfig, e.what());
  } catch (const UsageError& e) {
    return report_error(err, ExitCode::kUsage, e.what());
  } catch (const DataError& e) {
    return report_error(err, ExitCode::kData, e.what());
  } catch (const DimensionError& e) {
    return report_error(err, ExitCode::kShape, e.what());
  } catch (const DivergenceError& e) {
    return report_error(err, ExitCode::kDiverged,
                        std::string(e.what()) + " (step " + std::to_string(e.step()) + ")");
  } catch (const IoError& e) {
    return report_error(err, ExitCode::kIo, e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, ExitCode::kIo, e.what());
  } catch (const json::exception& e) {
    return report_error(err, ExitCode::kConfig, e.what());
  } catch (const std::invalid_argument& e) {
    return report_error(err, ExitCode::kConfig, e.what());
  } catch (const std::exception& e) {
    return report_error(err, ExitCode::kInternal, e.what());
  }
}

}  // namespace mlf
