#include "a3s/net/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "a3s/autodiff/checkpoint.hpp"
#include "a3s/errors.hpp"

namespace a3s {

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".json";
  return p;
}

void save_model(const std::filesystem::path& path, const SpottingNet& net, std::uint64_t iteration) {
  save_checkpoint(path, net.params());
  nlohmann::json j;
  j["iteration"] = iteration;
  j["net"] = nlohmann::json::parse(net_config_to_json(net.config()));
  std::ofstream out(sidecar_path(path));
  if (!out) throw IoError("cannot write " + sidecar_path(path).string());
  out << j.dump(2) << '\n';
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& checkpoint) {
  const auto side = sidecar_path(checkpoint);
  std::ifstream in(side);
  if (!in) throw IoError("cannot read checkpoint metadata " + side.string());
  std::stringstream buf;
  buf << in.rdbuf();
  CheckpointInfo info;
  try {
    const auto j = nlohmann::json::parse(buf.str());
    info.iteration = j.at("iteration").get<std::uint64_t>();
    info.net = net_config_from_json(j.at("net").dump());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed checkpoint metadata " + side.string() + ": " + e.what());
  }
  return info;
}

std::unique_ptr<SpottingNet> load_model(const std::filesystem::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  Rng rng(0);
  auto net = std::make_unique<SpottingNet>(info.net, rng);
  load_checkpoint(path, net->params());
  return net;
}

}  // namespace a3s
