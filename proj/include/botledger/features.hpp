#pragma once

#include <array>
#include <string>
#include <vector>

#include "botledger/core.hpp"

namespace botledger {

// Evidence gathered for one feature by eliminate_noninfluential. Index 0 of
// the per-label pairs is Bot, index 1 is Normal.
struct FeatureEvidence {
  std::string name;
  bool was_active = true;
  bool rule1_dropped = false;  // indifference between the two groups
  bool rule2_dropped = false;  // identically zero in both groups
  double effect_size = 0.0;
  std::array<double, 2> per_label_sum{};
  std::array<double, 2> per_label_std{};
  std::array<double, 2> per_label_mean{};
};

struct EliminationReport {
  std::vector<FeatureEvidence> features;
  double epsilon = 0.0;
  double threshold = 0.0;
};

nlohmann::json to_json(const EliminationReport& r);
std::string format_report(const EliminationReport& r);

struct Elimination {
  FeatureSchema schema;
  EliminationReport report;
};

inline constexpr double kIndifferenceThreshold = 0.01;

// Rule 2 drops a feature whose values sum to zero with zero spread inside
// the bot group and inside the normal group. Rule 1 drops a surviving feature
// when |mean_bot - mean_normal| / (pooled_std + epsilon) < 0.01.
Elimination eliminate_noninfluential(const std::vector<CharacterTimeline>& timelines,
                                     const FeatureSchema& schema, double epsilon = 1e-9);

// (x - min) / (max - min); a constant series maps to all zeros.
std::vector<double> minmax_scale(std::span<const double> series);

enum class ScalingScope { PerCharacter, PerWindow };
std::string_view scope_name(ScalingScope s);
ScalingScope parse_scope(std::string_view s);

struct WindowConfig {
  std::size_t window_length = 24;
  std::size_t stride = 12;
  ScalingScope scaling_scope = ScalingScope::PerCharacter;

  void validate() const;
};

nlohmann::json to_json(const WindowConfig& c);
WindowConfig window_config_from_json(const nlohmann::json& j);

// floor((L - w) / s) + 1 for L >= w, else 0.
std::size_t window_count(std::size_t length, std::size_t window_length, std::size_t stride);

std::vector<WindowedSample> slide_windows(const CharacterTimeline& timeline, const FeatureSchema& schema,
                                          const WindowConfig& cfg);

// Windows every timeline, parallel across characters. Output keeps the
// character order of the input.
std::vector<WindowedSample> slide_all(const std::vector<CharacterTimeline>& timelines,
                                      const FeatureSchema& schema, const WindowConfig& cfg);

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  std::size_t count = 0;
};

struct FeatureDistribution {
  std::string feature;
  std::optional<FiveNumber> bot;     // empty when no Bot samples
  std::optional<FiveNumber> normal;  // empty when no Normal samples
};

struct DistributionSummary {
  std::vector<FeatureDistribution> features;
  bool missing_bot = false;
  bool missing_normal = false;
};

// Quantile by linear interpolation between order statistics at
// h = (n - 1) p. Input need not be sorted.
double quantile(std::vector<double> values, double p);
FiveNumber five_number(std::vector<double> values);

DistributionSummary summarize_distributions(const std::vector<WindowedSample>& samples,
                                            const FeatureSchema& schema);
nlohmann::json to_json(const DistributionSummary& s);
std::string format_summary(const DistributionSummary& s);

}  // namespace botledger
