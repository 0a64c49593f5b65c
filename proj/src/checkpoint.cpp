#include "mlf/checkpoint.hpp"

#include <fstream>

namespace mlf {

using nlohmann::json;

json checkpoint_to_json(MlfModel& model, const RunConfig& run, const Normalization& norm) {
  json params = json::array();
  model.visit([&](const std::string& name, Tensor& p) {
    params.push_back({{"name", name},
                      {"shape", p.shape()},
                      {"data", std::vector<double>(p.data().begin(), p.data().end())}});
  });
  json buffers = json::array();
  model.visit_buffers([&](const std::string& name, std::vector<double>& b) {
    buffers.push_back({{"name", name}, {"data", b}});
  });
  return {{"format", "mlf-checkpoint"},
          {"version", kCheckpointVersion},
          {"run", [&] {
             // where artifacts were written is not part of the model
             auto j = to_json(run);
             j.erase("output_dir");
             return j;
           }()},
          {"normalization",
           {{"channels", norm.channels}, {"mean", norm.mean}, {"std", norm.std}}},
          {"parameters", params},
          {"buffers", buffers}};
}

void save_checkpoint(const std::filesystem::path& path, MlfModel& model, const RunConfig& run,
                     const Normalization& norm) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model, run, norm).dump() << '\n';
}

LoadedCheckpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "mlf-checkpoint") {
    throw std::runtime_error("not an mlf checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(j.value("version", 0)));
  }
  LoadedCheckpoint out;
  out.run = run_config_from_json(j.at("run"));
  const auto& n = j.at("normalization");
  out.norm.channels = n.at("channels").get<std::vector<std::string>>();
  out.norm.mean = n.at("mean").get<std::vector<double>>();
  out.norm.std = n.at("std").get<std::vector<double>>();
  out.model = std::make_unique<MlfModel>(out.run.model, out.run.seed);

  const auto& params = j.at("parameters");
  std::size_t i = 0;
  out.model->visit([&](const std::string& name, Tensor& p) {
    if (i >= params.size()) throw std::runtime_error("checkpoint is missing parameter " + name);
    const auto& entry = params[i++];
    if (entry.at("name").get<std::string>() != name) {
      throw std::runtime_error("checkpoint parameter order mismatch at " + name);
    }
    if (entry.at("shape").get<Shape>() != p.shape()) {
      throw DimensionError("checkpoint shape mismatch for " + name);
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != p.numel()) throw DimensionError("checkpoint size mismatch for " + name);
    std::copy(data.begin(), data.end(), p.mutable_data().begin());
  });
  if (i != params.size()) throw std::runtime_error("checkpoint has unexpected extra parameters");

  const auto& buffers = j.at("buffers");
  std::size_t k = 0;
  out.model->visit_buffers([&](const std::string& name, std::vector<double>& b) {
    if (k >= buffers.size() || buffers[k].at("name").get<std::string>() != name) {
      throw std::runtime_error("checkpoint buffer mismatch at " + name);
    }
    auto data = buffers[k++].at("data").get<std::vector<double>>();
    if (data.size() != b.size()) throw DimensionError("checkpoint size mismatch for " + name);
    b = std::move(data);
  });
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return checkpoint_from_json(json::parse(in));
}

}  // namespace mlf
