#include "binary_io.hpp"
#include "lieneurons/errors.hpp"
#include "lieneurons/models.hpp"

#include <fstream>
#include <sstream>

namespace lieneurons {

ModelCheckpoint make_checkpoint(const Model& model, std::uint64_t seed, nlohmann::json metadata) {
  ModelCheckpoint ckpt;
  ckpt.spec = model.spec();
  ckpt.seed = seed;
  ckpt.metadata = std::move(metadata);
  for (const auto& p : model.parameters()) {
    ckpt.parameters.push_back({p.name, p.value.detach()});
  }
  return ckpt;
}

Model model_from_checkpoint(const ModelCheckpoint& checkpoint) {
  Rng scratch(0);
  Model model = build_model(checkpoint.spec, scratch);
  model.load_parameters(checkpoint.parameters);
  return model;
}

std::string serialize_checkpoint(const ModelCheckpoint& checkpoint) {
  nlohmann::json header;
  header["spec"] = to_json(checkpoint.spec);
  header["algebra"] = checkpoint.spec.algebra;
  header["seed"] = checkpoint.seed;
  header["metadata"] = checkpoint.metadata;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& p : checkpoint.parameters) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    total += p.value.numel();
  }
  header["payload_values"] = total;

  std::string out(kCheckpointMagic);
  out += '\n';
  out += header.dump();
  out += '\n';
  for (const auto& p : checkpoint.parameters)
    for (double v : p.value.data()) binary::put_f64(out, v);
  return out;
}

ModelCheckpoint parse_checkpoint(std::string_view bytes) {
  const auto magic_end = bytes.find('\n');
  if (magic_end == std::string_view::npos || bytes.substr(0, magic_end) != kCheckpointMagic) {
    const auto found = bytes.substr(0, std::min<std::size_t>(magic_end, 32));
    throw FormatError("checkpoint: bad magic '" + std::string(found) + "', expected '" +
                      std::string(kCheckpointMagic) + "'");
  }
  const auto header_end = bytes.find('\n', magic_end + 1);
  if (header_end == std::string_view::npos) throw FormatError("checkpoint: missing header line");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }

  ModelCheckpoint ckpt;
  try {
    ckpt.spec = model_spec_from_json(header.at("spec"));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    binary::Reader reader(bytes.substr(header_end + 1));
    if (reader.remaining() != 8 * header.at("payload_values").get<std::size_t>()) {
      throw FormatError("checkpoint: payload size does not match header");
    }
    for (const auto& t : header.at("tensors")) {
      Shape shape = t.at("shape").get<Shape>();
      std::vector<double> values(shape_numel(shape));
      for (auto& v : values) v = reader.f64();
      ckpt.parameters.push_back({t.at("name").get<std::string>(), Tensor::parameter(std::move(shape), std::move(values))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  const auto bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace lieneurons
