#pragma once

#include <filesystem>
#include <string>

#include "botledger/features.hpp"
#include "botledger/lstm.hpp"

namespace botledger {

inline constexpr char kModelMagic[4] = {'B', 'O', 'T', 'W'};
inline constexpr std::uint32_t kModelVersion = 1;

// Model file layout: magic "BOTW", u32 LE version, u32 LE metadata length,
// metadata JSON (config, schema, window config, training summary, tensor
// shapes), then every tensor of ModelParams in kTensorNames order as raw
// little-endian f64.
struct ModelFile {
  ModelConfig config;
  FeatureSchema schema;
  WindowConfig window;
  double threshold = 0.5;
  nlohmann::json training_summary = nlohmann::json::object();
  ModelParams params;
};

std::string serialize_model(const ModelFile& m);
ModelFile deserialize_model(std::string_view bytes);

void save_model(const std::filesystem::path& path, const ModelFile& m);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace botledger
