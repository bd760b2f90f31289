#include "compnet/checkpoint.hpp"

#include <cstring>

#include "compnet/error.hpp"
#include "compnet/io_util.hpp"

namespace compnet::train {
using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimState& optimizer,
                     const std::optional<TrainConfig>& train_config, const json& run) {
  const auto& params = model.parameters();
  OptimState state = optimizer;
  if (state.velocity.empty()) state.velocity = OptimState::for_model(model).velocity;
  if (state.velocity.size() != params.size()) throw ShapeError("checkpoint: velocity count != parameter count");

  json tensors = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.velocity[i].shape() != params[i].value.shape()) {
      throw ShapeError("checkpoint: velocity shape mismatch for " + params[i].name);
    }
    tensors.push_back({{"name", params[i].name}, {"shape", params[i].value.shape()}});
  }
  json header = {
      {"model_config", model.config().to_json()},
      {"parameters", tensors},
      {"epoch", state.epoch},
      {"run", run},
  };
  header["train_config"] = train_config ? train_config->to_json() : json(nullptr);
  const std::string header_text = header.dump();

  std::string bytes(kCheckpointMagic, 4);
  io::append_le_u32(bytes, kCheckpointVersion);
  io::append_le_u64(bytes, header_text.size());
  bytes += header_text;
  for (const Parameter& p : params) {
    for (double v : p.value.data()) io::append_le_f64(bytes, v);
  }
  for (const Tensor& v : state.velocity) {
    for (double x : v.data()) io::append_le_f64(bytes, x);
  }
  io::write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic): " + path.string());
  }
  const std::uint32_t version = io::read_le_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t header_len = io::read_le_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint header truncated");

  json header;
  ModelConfig config;
  std::vector<ad::Shape> shapes;
  std::vector<std::string> names;
  OptimState optimizer;
  std::optional<TrainConfig> train_config;
  json run;
  try {
    header = json::parse(bytes.substr(16, header_len));
    config = ModelConfig::from_json(header.at("model_config"));
    for (const json& t : header.at("parameters")) {
      names.push_back(t.at("name").get<std::string>());
      shapes.push_back(t.at("shape").get<ad::Shape>());
    }
    optimizer.epoch = header.at("epoch").get<std::size_t>();
    if (header.contains("train_config") && !header["train_config"].is_null()) {
      train_config = TrainConfig::from_json(header["train_config"]);
    }
    run = header.value("run", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }

  std::size_t total = 0;
  for (const ad::Shape& s : shapes) total += ad::element_count(s);
  const std::size_t offset = 16 + header_len;
  if (bytes.size() - offset != 2 * total * 8) {
    throw FormatError("checkpoint payload has " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(2 * total * 8));
  }
  const char* cursor = bytes.data() + offset;
  const auto read_tensor = [&](const ad::Shape& s) {
    std::vector<double> values(ad::element_count(s));
    for (double& v : values) {
      v = io::read_le_f64(cursor);
      cursor += 8;
    }
    return Tensor(s, std::move(values));
  };
  std::vector<Parameter> params;
  for (std::size_t i = 0; i < shapes.size(); ++i) params.push_back(Parameter{names[i], read_tensor(shapes[i])});
  for (const ad::Shape& s : shapes) optimizer.velocity.push_back(read_tensor(s));

  try {
    return Checkpoint{Model::from_parameters(std::move(config), std::move(params)), std::move(optimizer),
                      std::move(train_config), std::move(run)};
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint does not match its model config: ") + e.what());
  }
}

}  // namespace compnet::train
