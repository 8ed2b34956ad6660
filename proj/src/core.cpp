#include "botledger/core.hpp"

#include <fmt/format.h>

namespace botledger {

Label decode_label(double v) {
  if (v == 1.0) return Label::Bot;
  if (v == 0.0) return Label::Normal;
  throw DataError(fmt::format("label encoding must be 0 or 1, got {}", v));
}

std::string_view label_name(Label l) { return l == Label::Bot ? "bot" : "normal"; }

Label parse_label(std::string_view s) {
  if (s == "bot") return Label::Bot;
  if (s == "normal") return Label::Normal;
  throw FormatError(fmt::format("unknown label '{}'", s));
}

std::string_view feature_type_name(FeatureType t) {
  switch (t) {
    case FeatureType::Item: return "Item";
    case FeatureType::Cash: return "Cash";
    case FeatureType::EvaluatedAssetValue: return "EvaluatedAssetValue";
  }
  return "?";
}

static FeatureType parse_feature_type(std::string_view s) {
  if (s == "Item") return FeatureType::Item;
  if (s == "Cash") return FeatureType::Cash;
  if (s == "EvaluatedAssetValue") return FeatureType::EvaluatedAssetValue;
  throw FormatError(fmt::format("unknown feature type '{}'", s));
}

std::size_t FeatureSchema::active_count() const {
  std::size_t n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

std::vector<std::size_t> FeatureSchema::active_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) out.push_back(i);
  return out;
}

std::optional<std::size_t> FeatureSchema::find_column(std::string_view column) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].column == column) return i;
  return std::nullopt;
}

bool FeatureSchema::operator==(const FeatureSchema& o) const {
  if (features.size() != o.features.size() || active != o.active) return false;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& a = features[i];
    const auto& b = o.features[i];
    if (a.id != b.id || a.name != b.name || a.column != b.column || a.type != b.type) return false;
  }
  return true;
}

FeatureSchema canonical_schema() {
  using T = FeatureType;
  FeatureSchema s;
  s.features = {
      {1, "Number of Items", "number_of_items", T::Item},
      {2, "Total Cash", "total_cash", T::Cash},
      {3, "Cash in Account", "cash_in_account", T::Cash},
      {4, "Cash in Character Bank", "cash_in_character_bank", T::Cash},
      {5, "Cash in Vendor", "cash_in_vendor", T::Cash},
      {6, "Evaluated Asset Value", "evaluated_asset_value", T::EvaluatedAssetValue},
      {7, "Mailing Asset Value", "mailing_asset_value", T::EvaluatedAssetValue},
      {8, "Evaluated Asset value in character bank", "evaluated_asset_value_in_character_bank",
       T::EvaluatedAssetValue},
      {9, "Evaluated Asset in account bank", "evaluated_asset_in_account_bank",
       T::EvaluatedAssetValue},
  };
  s.active.assign(s.features.size(), true);
  return s;
}

nlohmann::json to_json(const FeatureSchema& s) {
  auto arr = nlohmann::json::array();
  for (std::size_t i = 0; i < s.features.size(); ++i) {
    const auto& f = s.features[i];
    arr.push_back({{"id", f.id},
                   {"name", f.name},
                   {"column", f.column},
                   {"type", feature_type_name(f.type)},
                   {"active", static_cast<bool>(s.active[i])}});
  }
  return arr;
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("schema must be an array");
  FeatureSchema s;
  try {
    for (const auto& e : j) {
      s.features.push_back({e.at("id").get<int>(), e.at("name").get<std::string>(),
                            e.at("column").get<std::string>(),
                            parse_feature_type(e.at("type").get<std::string>())});
      s.active.push_back(e.at("active").get<bool>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("malformed schema: {}", ex.what()));
  }
  return s;
}

Label require_label(const WindowedSample& s) {
  if (!s.label)
    throw DataError(fmt::format("sample from character '{}' has no label", s.origin.character_id));
  return *s.label;
}

}  // namespace botledger
