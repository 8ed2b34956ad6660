#include "botledger/model_io.hpp"

#include <map>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "botledger/ingestion.hpp"

namespace botledger {

std::string serialize_model(const ModelFile& m) {
  nlohmann::json meta;
  meta["config"] = to_json(m.config);
  meta["schema"] = to_json(m.schema);
  meta["window"] = to_json(m.window);
  meta["threshold"] = m.threshold;
  meta["training"] = m.training_summary;
  auto shapes = nlohmann::json::object();
  const auto tensors = m.params.all_tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) shapes[kTensorNames[i]] = tensors[i].size();
  meta["tensor_sizes"] = shapes;

  detail::ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u32(kModelVersion);
  w.document(meta.dump());
  for (auto t : tensors) w.f64s(t);
  return w.take();
}

ModelFile deserialize_model(std::string_view bytes) {
  detail::ByteReader r(bytes, "model file");
  if (r.bytes(4) != std::string_view(kModelMagic, 4)) throw FormatError("model file: bad magic");
  const auto version = r.u32();
  if (version != kModelVersion) throw FormatError(fmt::format("model file: unsupported version {}", version));

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.document());
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("model file: bad metadata: {}", ex.what()));
  }
  ModelFile m;
  std::map<std::string, std::size_t> sizes;
  try {
    m.config = model_config_from_json(meta.at("config"));
    m.schema = schema_from_json(meta.at("schema"));
    m.window = window_config_from_json(meta.at("window"));
    m.threshold = meta.at("threshold").get<double>();
    m.training_summary = meta.at("training");
    sizes = meta.at("tensor_sizes").get<std::map<std::string, std::size_t>>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("model file: bad metadata: {}", ex.what()));
  }
  if (m.config.input_dim != m.schema.active_count())
    throw FormatError("model file: input_dim does not match the active schema");

  m.params = ModelParams::zeros(m.config.input_dim, m.config.hidden_dim);
  auto tensors = m.params.all_tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto it = sizes.find(kTensorNames[i]);
    const std::size_t declared = it == sizes.end() ? 0 : it->second;
    if (declared != tensors[i].size())
      throw FormatError(fmt::format("model file: tensor {} has size {}, expected {}", kTensorNames[i], declared,
                                    tensors[i].size()));
    r.f64s(tensors[i]);
  }
  if (r.remaining() != 0) throw FormatError("model file: trailing bytes");
  return m;
}

void save_model(const std::filesystem::path& path, const ModelFile& m) { write_file(path, serialize_model(m)); }

ModelFile load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace botledger
