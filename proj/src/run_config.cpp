#include "mlf/run_config.hpp"

#include <fstream>

namespace mlf {

using nlohmann::json;

namespace {

template <typename T>
T read(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string field = path + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    return v.get<T>();
  } else {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(field, "expected a non-negative integer");
    }
    return static_cast<T>(v.get<unsigned long long>());
  }
}

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(path + "." + key, "unknown field");
  }
}

}  // namespace

json to_json(const MlfConfig& c) {
  return {
      {"model",
       {{"period_lengths", c.period_lengths},
        {"horizon", c.horizon},
        {"patch_count", c.patch_count},
        {"squeeze_factor", c.squeeze_factor},
        {"d_model", c.d_model},
        {"n_heads", c.n_heads},
        {"n_blocks", c.n_blocks},
        {"d_ff", c.ff_width()},
        {"conv_filters", c.conv_filters},
        {"alpha", c.alpha},
        {"fixed_patch_length", c.fixed_patch_length},
        {"fixed_patch_stride", c.fixed_patch_stride},
        {"ablation",
         {{"irf", c.ablation.irf},
          {"lwi", c.ablation.lwi},
          {"map", c.ablation.map},
          {"reconstruction_loss", c.ablation.reconstruction_loss},
          {"attention", c.ablation.attention}}}}},
      {"train",
       {{"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"grad_clip", c.grad_clip},
        {"window_stride", c.window_stride},
        {"eval_stride", c.eval_stride}}}};
}

MlfConfig mlf_config_from_json(const json& model, const json& train) {
  require_object(model, "model");
  require_object(train, "train");
  reject_unknown(model, "model",
                 {"period_lengths", "horizon", "patch_count", "squeeze_factor", "d_model",
                  "n_heads", "n_blocks", "d_ff", "conv_filters", "alpha",
                  "fixed_patch_length", "fixed_patch_stride", "ablation"});
  reject_unknown(train, "train",
                 {"learning_rate", "batch_size", "epochs", "grad_clip", "window_stride",
                  "eval_stride"});
  MlfConfig c;
  if (!model.contains("period_lengths")) {
    throw ConfigError("model.period_lengths", "missing required field");
  }
  const auto& periods = model.at("period_lengths");
  if (!periods.is_array() || periods.empty()) {
    throw ConfigError("model.period_lengths", "expected a non-empty array of integers");
  }
  c.period_lengths.clear();
  for (std::size_t i = 0; i < periods.size(); ++i) {
    if (!periods[i].is_number_integer() || periods[i].get<long long>() <= 0) {
      throw ConfigError("model.period_lengths[" + std::to_string(i) + "]",
                        "expected a positive integer");
    }
    c.period_lengths.push_back(periods[i].get<std::size_t>());
  }
  if (!model.contains("horizon")) throw ConfigError("model.horizon", "missing required field");
  c.horizon = read<std::size_t>(model, "horizon", "model", c.horizon);
  c.patch_count = read<std::size_t>(model, "patch_count", "model", c.patch_count);
  c.squeeze_factor = read<std::size_t>(model, "squeeze_factor", "model", c.squeeze_factor);
  c.d_model = read<std::size_t>(model, "d_model", "model", c.d_model);
  c.n_heads = read<std::size_t>(model, "n_heads", "model", c.n_heads);
  c.n_blocks = read<std::size_t>(model, "n_blocks", "model", c.n_blocks);
  c.d_ff = read<std::size_t>(model, "d_ff", "model", c.d_ff);
  c.conv_filters = read<std::size_t>(model, "conv_filters", "model", c.conv_filters);
  c.alpha = read<std::size_t>(model, "alpha", "model", c.alpha);
  c.fixed_patch_length = read<std::size_t>(model, "fixed_patch_length", "model", c.fixed_patch_length);
  c.fixed_patch_stride = read<std::size_t>(model, "fixed_patch_stride", "model", c.fixed_patch_stride);
  if (model.contains("ablation")) {
    const auto& a = model.at("ablation");
    require_object(a, "model.ablation");
    reject_unknown(a, "model.ablation", {"irf", "lwi", "map", "reconstruction_loss", "attention"});
    c.ablation.irf = read<bool>(a, "irf", "model.ablation", true);
    c.ablation.lwi = read<bool>(a, "lwi", "model.ablation", true);
    c.ablation.map = read<bool>(a, "map", "model.ablation", true);
    c.ablation.reconstruction_loss = read<bool>(a, "reconstruction_loss", "model.ablation", true);
    c.ablation.attention = read<bool>(a, "attention", "model.ablation", true);
  }
  c.learning_rate = read<double>(train, "learning_rate", "train", c.learning_rate);
  c.batch_size = read<std::size_t>(train, "batch_size", "train", c.batch_size);
  c.epochs = read<std::size_t>(train, "epochs", "train", c.epochs);
  c.grad_clip = read<double>(train, "grad_clip", "train", c.grad_clip);
  c.window_stride = read<std::size_t>(train, "window_stride", "train", c.window_stride);
  c.eval_stride = read<std::size_t>(train, "eval_stride", "train", c.eval_stride);

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    const std::string field = colon == std::string::npos ? "model" : msg.substr(0, colon);
    const bool is_train = field == "learning_rate" || field == "batch_size" || field == "grad_clip";
    throw ConfigError((is_train ? "train." : "model.") + field,
                      colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
  return c;
}

json to_json(const RunConfig& r) {
  json dataset = {{"date_column", r.dataset.date_column},
                  {"split", to_string(r.dataset.split)},
                  {"steps_per_day", r.dataset.steps_per_day}};
  if (!r.dataset.path.empty()) dataset["path"] = r.dataset.path;
  if (!r.dataset.columns.empty()) dataset["columns"] = r.dataset.columns;
  if (r.dataset.synth) {
    const auto& s = *r.dataset.synth;
    dataset["synth"] = {{"kind", s.kind == SynthKind::kTrend ? "trend" : "regime-switch"},
                        {"length", s.length},
                        {"channels", s.channels},
                        {"seed", s.seed},
                        {"noise", s.noise}};
  }
  json j = to_json(r.model);
  j["dataset"] = dataset;
  j["output_dir"] = r.output_dir;
  j["seed"] = r.seed;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  require_object(j, "config");
  reject_unknown(j, "config", {"dataset", "model", "train", "output_dir", "seed"});
  RunConfig r;
  if (!j.contains("model")) throw ConfigError("model", "missing required section");
  r.model = mlf_config_from_json(j.at("model"), j.value("train", json::object()));
  r.output_dir = read<std::string>(j, "output_dir", "config", r.output_dir);
  r.seed = read<std::uint64_t>(j, "seed", "config", r.seed);

  if (!j.contains("dataset")) throw ConfigError("dataset", "missing required section");
  const auto& d = j.at("dataset");
  require_object(d, "dataset");
  reject_unknown(d, "dataset", {"path", "date_column", "columns", "split", "steps_per_day", "synth"});
  r.dataset.path = read<std::string>(d, "path", "dataset", "");
  r.dataset.date_column = read<std::string>(d, "date_column", "dataset", "date");
  r.dataset.steps_per_day = read<std::size_t>(d, "steps_per_day", "dataset", 24);
  try {
    r.dataset.split = parse_split_scheme(read<std::string>(d, "split", "dataset", "ratio"));
  } catch (const DataError& e) {
    throw ConfigError("dataset.split", e.what());
  }
  if (d.contains("columns")) {
    const auto& cols = d.at("columns");
    if (!cols.is_array()) throw ConfigError("dataset.columns", "expected an array of strings");
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (!cols[i].is_string()) {
        throw ConfigError("dataset.columns[" + std::to_string(i) + "]", "expected a string");
      }
      r.dataset.columns.push_back(cols[i].get<std::string>());
    }
  }
  if (d.contains("synth")) {
    const auto& s = d.at("synth");
    require_object(s, "dataset.synth");
    reject_unknown(s, "dataset.synth", {"kind", "length", "channels", "seed", "noise"});
    SynthOptions o;
    try {
      o.kind = parse_synth_kind(read<std::string>(s, "kind", "dataset.synth", "regime-switch"));
    } catch (const DataError& e) {
      throw ConfigError("dataset.synth.kind", e.what());
    }
    o.length = read<std::size_t>(s, "length", "dataset.synth", o.length);
    o.channels = read<std::size_t>(s, "channels", "dataset.synth", o.channels);
    o.seed = read<std::uint64_t>(s, "seed", "dataset.synth", o.seed);
    o.noise = read<double>(s, "noise", "dataset.synth", o.noise);
    r.dataset.synth = o;
  }
  if (r.dataset.path.empty() && !r.dataset.synth) {
    throw ConfigError("dataset.path", "missing required field (or provide dataset.synth)");
  }
  return r;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError(key, "'" + part + "' is not an object");
    start = dot + 1;
  }
}

SeriesDataset load_dataset(const DatasetConfig& config) {
  if (!config.path.empty()) {
    return load_csv(config.path, config.date_column, config.columns);
  }
  if (!config.synth) throw ConfigError("dataset.path", "no dataset configured");
  return synthesize(*config.synth);
}

}  // namespace mlf
