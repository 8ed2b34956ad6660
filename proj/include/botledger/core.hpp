#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace botledger {

// Error taxonomy. The CLI maps these onto exit codes: UsageError -> 1,
// IoError/FormatError/DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class UsageError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class Label : std::uint8_t { Normal = 0, Bot = 1 };

inline double encode(Label l) { return l == Label::Bot ? 1.0 : 0.0; }
Label decode_label(double v);
std::string_view label_name(Label l);  // "bot" / "normal"
Label parse_label(std::string_view s);

enum class FeatureType { Item, Cash, EvaluatedAssetValue };
std::string_view feature_type_name(FeatureType t);

inline constexpr std::size_t kFeatureCount = 9;

struct FeatureSpec {
  int id = 0;            // 1-based position in the canonical table
  std::string name;      // display name
  std::string column;    // snake_case CSV column
  FeatureType type = FeatureType::Cash;
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::vector<bool> active;

  std::size_t size() const { return features.size(); }
  std::size_t active_count() const;
  std::vector<std::size_t> active_indices() const;
  std::optional<std::size_t> find_column(std::string_view column) const;

  bool operator==(const FeatureSchema&) const;
};

// The nine financial features in canonical order, all active.
FeatureSchema canonical_schema();

nlohmann::json to_json(const FeatureSchema& s);
FeatureSchema schema_from_json(const nlohmann::json& j);

using FeatureVector = std::array<double, kFeatureCount>;

struct StatusRecord {
  std::string character_id;
  std::string account_id;
  std::int64_t timestamp = 0;  // UTC seconds
  FeatureVector values{};
};

struct CharacterTimeline {
  std::string character_id;
  std::optional<Label> label;  // empty for unlabeled (scoring-only) input
  std::vector<StatusRecord> records;
};

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SampleOrigin {
  std::string character_id;
  std::size_t start_index = 0;
  std::int64_t start_time = 0;
  std::optional<std::int64_t> period;  // set when windows were cut per period
};

struct WindowedSample {
  Matrix matrix;  // window_length x active features, entries in [0,1]
  std::optional<Label> label;
  SampleOrigin origin;
};

// Label of a sample that must be labeled; throws DataError otherwise.
Label require_label(const WindowedSample& s);

}  // namespace botledger
