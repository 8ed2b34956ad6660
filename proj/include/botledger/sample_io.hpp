#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "botledger/features.hpp"

namespace botledger {

inline constexpr char kSamplesMagic[4] = {'B', 'O', 'T', 'S'};
inline constexpr std::uint32_t kSamplesVersion = 1;

// Output of the featurize step. File layout mirrors the model file: magic
// "BOTS", u32 LE version, u32 LE metadata length, metadata JSON (schema,
// window config, period settings, per-sample origins and labels), then each
// sample matrix as raw little-endian f64 in row-major order.
struct SampleSet {
  FeatureSchema schema;  // active mask after elimination
  WindowConfig window;
  std::optional<std::int64_t> period_length;  // seconds, when windows were cut per period
  std::int64_t anchor = 0;
  std::vector<WindowedSample> samples;
};

std::string serialize_samples(const SampleSet& s);
SampleSet deserialize_samples(std::string_view bytes);

void save_samples(const std::filesystem::path& path, const SampleSet& s);
SampleSet load_samples(const std::filesystem::path& path);

}  // namespace botledger
