#include "botledger/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace botledger {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Iterates '\n'-separated lines, skipping blank ones.
template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t start = 0;
  std::size_t lineno = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    ++lineno;
    line = trim(line);
    if (!line.empty()) f(line, lineno);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool valid_id(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
           c == '-';
  });
}

}  // namespace

nlohmann::json to_json(const IngestStats& s) {
  return {{"records_read", s.records_read},
          {"records_dropped", s.records_dropped},
          {"characters_total", s.characters_total},
          {"characters_labeled", s.characters_labeled},
          {"drop_reasons", s.drop_reasons}};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(fmt::format("read failed on '{}'", path.string()));
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("write failed on '{}'", path.string()));
}

std::int64_t parse_timestamp(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size()) return v;

  // YYYY-MM-DDTHH:MM:SSZ
  if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':' ||
      s[19] != 'Z')
    throw FormatError(fmt::format("bad timestamp '{}'", s));
  auto num = [&](std::size_t pos, std::size_t len) {
    int x = 0;
    auto [p, e] = std::from_chars(s.data() + pos, s.data() + pos + len, x);
    if (e != std::errc() || p != s.data() + pos + len)
      throw FormatError(fmt::format("bad timestamp '{}'", s));
    return x;
  };
  using namespace std::chrono;
  year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))},
                     day{static_cast<unsigned>(num(8, 2))}};
  int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2);
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw FormatError(fmt::format("bad timestamp '{}'", s));
  auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_timestamp(std::int64_t t) {
  using namespace std::chrono;
  auto d = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
  auto rem = t - d * 86400;
  year_month_day ymd{sys_days{days{d}}};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), rem / 3600,
                     (rem / 60) % 60, rem % 60);
}

ParsedLog parse_status_log_text(std::string_view text, const FeatureSchema& schema) {
  ParsedLog out;
  bool have_header = false;
  std::size_t n_cols = 0;
  std::size_t col_char = 0, col_account = 0, col_time = 0;
  std::vector<std::size_t> feature_col(schema.size());

  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    if (line.front() == '#') return;
    auto fields = split(line);
    if (!have_header) {
      have_header = true;
      n_cols = fields.size();
      auto find = [&](std::string_view name) -> std::size_t {
        for (std::size_t i = 0; i < fields.size(); ++i)
          if (trim(fields[i]) == name) return i;
        throw FormatError(fmt::format("status log header is missing column '{}'", name));
      };
      col_char = find("character_id");
      col_account = find("account_id");
      col_time = find("timestamp");
      for (std::size_t f = 0; f < schema.size(); ++f) feature_col[f] = find(schema.features[f].column);
      return;
    }

    ++out.stats.records_read;
    if (fields.size() != n_cols) {
      out.stats.drop("malformed_row");
      return;
    }
    StatusRecord rec;
    rec.character_id = std::string(trim(fields[col_char]));
    rec.account_id = std::string(trim(fields[col_account]));
    if (!valid_id(rec.character_id) || !valid_id(rec.account_id)) {
      out.stats.drop("malformed_row");
      return;
    }
    try {
      rec.timestamp = parse_timestamp(fields[col_time]);
    } catch (const FormatError&) {
      out.stats.drop("bad_timestamp");
      return;
    }
    for (std::size_t f = 0; f < schema.size(); ++f) {
      double v = 0;
      if (!parse_double(fields[feature_col[f]], v)) {
        out.stats.drop("parse_error");
        return;
      }
      if (!std::isfinite(v) || v < 0) {
        out.stats.drop("invalid_value");
        return;
      }
      rec.values[f] = v;
    }
    (void)lineno;
    out.records.push_back(std::move(rec));
  });

  if (!have_header) throw FormatError("status log has no header");
  return out;
}

ParsedLog parse_status_log(const std::filesystem::path& path, const FeatureSchema& schema) {
  if (schema.size() != kFeatureCount)
    throw FormatError(fmt::format("schema must have {} features", kFeatureCount));
  return parse_status_log_text(read_file(path), schema);
}

LabelFile parse_label_text(std::string_view text) {
  LabelFile out;
  bool have_header = false;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      constexpr std::string_view key = "as_of:";
      if (body.starts_with(key)) out.as_of = std::string(trim(body.substr(key.size())));
      return;
    }
    auto fields = split(line);
    if (!have_header) {
      if (fields.size() != 2 || trim(fields[0]) != "character_id" || trim(fields[1]) != "label")
        throw FormatError("label file header must be 'character_id,label'");
      have_header = true;
      return;
    }
    if (fields.size() != 2) throw FormatError(fmt::format("label file line {}: expected 2 fields", lineno));
    std::string id(trim(fields[0]));
    if (!valid_id(id)) throw FormatError(fmt::format("label file line {}: bad character id", lineno));
    Label l = parse_label(trim(fields[1]));
    if (!out.entries.emplace(id, l).second)
      throw FormatError(fmt::format("label file line {}: duplicate character '{}'", lineno, id));
  });
  if (!have_header) throw FormatError("label file has no header");
  return out;
}

LabelFile parse_label_file(const std::filesystem::path& path) { return parse_label_text(read_file(path)); }

TimelineSet build_timelines(std::vector<StatusRecord> records, const LabelFile* labels) {
  TimelineSet out;
  out.stats.records_read = records.size();

  std::map<std::string, std::vector<StatusRecord>> groups;
  for (auto& r : records) groups[r.character_id].push_back(std::move(r));
  out.stats.characters_total = groups.size();

  for (auto& [id, recs] : groups) {
    std::optional<Label> label;
    if (labels) {
      auto it = labels->entries.find(id);
      if (it == labels->entries.end()) {
        out.stats.drop("unlabeled", recs.size());
        continue;
      }
      label = it->second;
      ++out.stats.characters_labeled;
    }
    std::stable_sort(recs.begin(), recs.end(),
                     [](const StatusRecord& a, const StatusRecord& b) { return a.timestamp < b.timestamp; });
    CharacterTimeline tl{id, label, {}};
    tl.records.reserve(recs.size());
    for (auto& r : recs) {
      if (!tl.records.empty() && tl.records.back().timestamp == r.timestamp) {
        tl.records.back() = std::move(r);
        out.stats.drop("duplicate_timestamp");
      } else {
        tl.records.push_back(std::move(r));
      }
    }
    out.timelines.push_back(std::move(tl));
  }
  return out;
}

std::string write_status_log(const std::vector<StatusRecord>& records, const FeatureSchema& schema) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "character_id,account_id,timestamp");
  for (const auto& f : schema.features) fmt::format_to(std::back_inserter(buf), ",{}", f.column);
  buf.push_back('\n');
  for (const auto& r : records) {
    fmt::format_to(std::back_inserter(buf), "{},{},{}", r.character_id, r.account_id, r.timestamp);
    for (std::size_t f = 0; f < schema.size(); ++f) fmt::format_to(std::back_inserter(buf), ",{}", r.values[f]);
    buf.push_back('\n');
  }
  return fmt::to_string(buf);
}

std::string write_label_file(const LabelFile& labels) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "# as_of: {}\ncharacter_id,label\n", labels.as_of);
  for (const auto& [id, l] : labels.entries) fmt::format_to(std::back_inserter(buf), "{},{}\n", id, label_name(l));
  return fmt::to_string(buf);
}

}  // namespace botledger
