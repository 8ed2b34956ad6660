#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "botledger/core.hpp"

namespace botledger {

struct IngestStats {
  std::size_t records_read = 0;
  std::size_t records_dropped = 0;
  std::size_t characters_total = 0;
  std::size_t characters_labeled = 0;
  std::map<std::string, std::size_t> drop_reasons;

  void drop(const std::string& reason, std::size_t n = 1) {
    records_dropped += n;
    drop_reasons[reason] += n;
  }
};

nlohmann::json to_json(const IngestStats& s);

struct LabelFile {
  std::map<std::string, Label> entries;
  std::string as_of;  // ISO-8601 date from the "# as_of:" header line
};

struct ParsedLog {
  std::vector<StatusRecord> records;
  IngestStats stats;
};

struct TimelineSet {
  std::vector<CharacterTimeline> timelines;  // ordered by character_id
  IngestStats stats;
};

// Status-log CSV. Required columns: character_id, account_id, timestamp and
// one column per schema feature; any other columns are parsed and discarded.
ParsedLog parse_status_log(const std::filesystem::path& path, const FeatureSchema& schema);
ParsedLog parse_status_log_text(std::string_view text, const FeatureSchema& schema);

LabelFile parse_label_file(const std::filesystem::path& path);
LabelFile parse_label_text(std::string_view text);

// Groups records per character and orders them by timestamp. Duplicate
// timestamps keep the last record seen. With labels == nullptr every
// character is retained unlabeled (scoring path); otherwise characters
// missing from the label file are dropped as "unlabeled".
TimelineSet build_timelines(std::vector<StatusRecord> records, const LabelFile* labels);

// Timestamp field: integer UTC seconds or "YYYY-MM-DDTHH:MM:SSZ".
std::int64_t parse_timestamp(std::string_view s);
std::string format_timestamp(std::int64_t t);

std::string write_status_log(const std::vector<StatusRecord>& records, const FeatureSchema& schema);
std::string write_label_file(const LabelFile& labels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace botledger
