#include "botledger/sample_io.hpp"

#include <fmt/format.h>

#include "binary_io.hpp"
#include "botledger/ingestion.hpp"

namespace botledger {

std::string serialize_samples(const SampleSet& s) {
  const std::size_t rows = s.window.window_length;
  const std::size_t cols = s.schema.active_count();
  nlohmann::json meta;
  meta["schema"] = to_json(s.schema);
  meta["window"] = to_json(s.window);
  meta["period_length"] = s.period_length ? nlohmann::json(*s.period_length) : nlohmann::json(nullptr);
  meta["anchor"] = s.anchor;
  meta["count"] = s.samples.size();
  auto ids = nlohmann::json::array(), starts = nlohmann::json::array(), times = nlohmann::json::array(),
       periods = nlohmann::json::array(), labels = nlohmann::json::array();
  for (const auto& smp : s.samples) {
    if (smp.matrix.rows() != rows || smp.matrix.cols() != cols)
      throw DataError("sample matrix does not match the window config and schema");
    ids.push_back(smp.origin.character_id);
    starts.push_back(smp.origin.start_index);
    times.push_back(smp.origin.start_time);
    periods.push_back(smp.origin.period ? nlohmann::json(*smp.origin.period) : nlohmann::json(nullptr));
    labels.push_back(smp.label ? nlohmann::json(label_name(*smp.label)) : nlohmann::json(nullptr));
  }
  meta["character_id"] = std::move(ids);
  meta["start_index"] = std::move(starts);
  meta["start_time"] = std::move(times);
  meta["period"] = std::move(periods);
  meta["label"] = std::move(labels);

  detail::ByteWriter w;
  w.bytes(std::string_view(kSamplesMagic, 4));
  w.u32(kSamplesVersion);
  w.document(meta.dump());
  for (const auto& smp : s.samples) w.f64s(smp.matrix.data());
  return w.take();
}

SampleSet deserialize_samples(std::string_view bytes) {
  detail::ByteReader r(bytes, "samples file");
  if (r.bytes(4) != std::string_view(kSamplesMagic, 4)) throw FormatError("samples file: bad magic");
  const auto version = r.u32();
  if (version != kSamplesVersion) throw FormatError(fmt::format("samples file: unsupported version {}", version));

  SampleSet s;
  try {
    const auto meta = nlohmann::json::parse(r.document());
    s.schema = schema_from_json(meta.at("schema"));
    s.window = window_config_from_json(meta.at("window"));
    if (!meta.at("period_length").is_null()) s.period_length = meta["period_length"].get<std::int64_t>();
    s.anchor = meta.at("anchor").get<std::int64_t>();
    const auto n = meta.at("count").get<std::size_t>();
    const auto& ids = meta.at("character_id");
    const auto& starts = meta.at("start_index");
    const auto& times = meta.at("start_time");
    const auto& periods = meta.at("period");
    const auto& labels = meta.at("label");
    if (ids.size() != n || starts.size() != n || times.size() != n || periods.size() != n || labels.size() != n)
      throw FormatError("samples file: index arrays disagree with count");
    const std::size_t rows = s.window.window_length, cols = s.schema.active_count();
    s.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& smp = s.samples[i];
      smp.origin.character_id = ids[i].get<std::string>();
      smp.origin.start_index = starts[i].get<std::size_t>();
      smp.origin.start_time = times[i].get<std::int64_t>();
      if (!periods[i].is_null()) smp.origin.period = periods[i].get<std::int64_t>();
      if (!labels[i].is_null()) smp.label = parse_label(labels[i].get<std::string>());
      smp.matrix = Matrix(rows, cols);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("samples file: bad metadata: {}", ex.what()));
  }
  for (auto& smp : s.samples) r.f64s(smp.matrix.data());
  if (r.remaining() != 0) throw FormatError("samples file: trailing bytes");
  return s;
}

void save_samples(const std::filesystem::path& path, const SampleSet& s) { write_file(path, serialize_samples(s)); }

SampleSet load_samples(const std::filesystem::path& path) { return deserialize_samples(read_file(path)); }

}  // namespace botledger
