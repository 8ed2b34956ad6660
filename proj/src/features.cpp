#include "botledger/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace botledger {

namespace {

struct GroupStats {
  std::size_t n = 0;
  double sum = 0, mean = 0, m2 = 0;  // m2 = sum of squared deviations

  double pop_std() const { return n ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }
};

}  // namespace

Elimination eliminate_noninfluential(const std::vector<CharacterTimeline>& timelines,
                                     const FeatureSchema& schema, double epsilon) {
  bool have_bot = false, have_normal = false;
  for (const auto& tl : timelines) {
    if (!tl.label) throw DataError("cannot compare groups: unlabeled timeline");
    (*tl.label == Label::Bot ? have_bot : have_normal) = true;
  }
  if (!have_bot || !have_normal) throw DataError("cannot compare groups: both labels are required");

  const std::size_t nf = schema.size();
  // [feature][0 = bot, 1 = normal]
  std::vector<std::array<GroupStats, 2>> stats(nf);
  for (const auto& tl : timelines) {
    const int g = *tl.label == Label::Bot ? 0 : 1;
    for (const auto& r : tl.records)
      for (std::size_t f = 0; f < nf; ++f) {
        stats[f][g].n += 1;
        stats[f][g].sum += r.values[f];
      }
  }
  for (auto& fs : stats)
    for (auto& g : fs) g.mean = g.n ? g.sum / static_cast<double>(g.n) : 0.0;
  for (const auto& tl : timelines) {
    const int g = *tl.label == Label::Bot ? 0 : 1;
    for (const auto& r : tl.records)
      for (std::size_t f = 0; f < nf; ++f) {
        double d = r.values[f] - stats[f][g].mean;
        stats[f][g].m2 += d * d;
      }
  }

  Elimination out;
  out.schema = schema;
  out.report.epsilon = epsilon;
  out.report.threshold = kIndifferenceThreshold;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& b = stats[f][0];
    const auto& n = stats[f][1];
    FeatureEvidence ev;
    ev.name = schema.features[f].name;
    ev.was_active = schema.active[f];
    ev.per_label_sum = {b.sum, n.sum};
    ev.per_label_std = {b.pop_std(), n.pop_std()};
    ev.per_label_mean = {b.mean, n.mean};

    const double dof = static_cast<double>(b.n + n.n) - 2.0;
    const double pooled = dof > 0 ? std::sqrt((b.m2 + n.m2) / dof) : 0.0;
    ev.effect_size = std::abs(b.mean - n.mean) / (pooled + epsilon);

    if (ev.was_active) {
      ev.rule2_dropped = b.sum == 0 && n.sum == 0 && ev.per_label_std[0] == 0 && ev.per_label_std[1] == 0;
      ev.rule1_dropped = !ev.rule2_dropped && ev.effect_size < kIndifferenceThreshold;
      if (ev.rule1_dropped || ev.rule2_dropped) out.schema.active[f] = false;
    }
    out.report.features.push_back(std::move(ev));
  }
  if (out.schema.active_count() == 0) throw DataError("no features remain after elimination");
  return out;
}

nlohmann::json to_json(const EliminationReport& r) {
  auto arr = nlohmann::json::array();
  for (const auto& f : r.features)
    arr.push_back({{"name", f.name},
                   {"was_active", f.was_active},
                   {"rule1_dropped", f.rule1_dropped},
                   {"rule2_dropped", f.rule2_dropped},
                   {"effect_size", f.effect_size},
                   {"sum", {{"bot", f.per_label_sum[0]}, {"normal", f.per_label_sum[1]}}},
                   {"std", {{"bot", f.per_label_std[0]}, {"normal", f.per_label_std[1]}}},
                   {"mean", {{"bot", f.per_label_mean[0]}, {"normal", f.per_label_mean[1]}}}});
  return {{"epsilon", r.epsilon}, {"threshold", r.threshold}, {"features", arr}};
}

std::string format_report(const EliminationReport& r) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "Feature elimination (indifference threshold {}, epsilon {})\n", r.threshold, r.epsilon);
  fmt::format_to(out, "{:<42} {:>12} {:>14} {:>14} {:>7}\n", "feature", "effect", "mean(bot)", "mean(normal)",
                 "status");
  for (const auto& f : r.features) {
    std::string_view status = !f.was_active ? "off" : f.rule2_dropped ? "rule2" : f.rule1_dropped ? "rule1" : "kept";
    fmt::format_to(out, "{:<42} {:>12.4g} {:>14.6g} {:>14.6g} {:>7}\n", f.name, f.effect_size, f.per_label_mean[0],
                   f.per_label_mean[1], status);
  }
  return fmt::to_string(buf);
}

std::vector<double> minmax_scale(std::span<const double> series) {
  if (series.empty()) throw DataError("cannot scale an empty series");
  double lo = series[0], hi = series[0];
  for (double x : series) {
    if (!std::isfinite(x)) throw NumericError("non-finite input");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<double> out(series.size(), 0.0);
  if (hi == lo) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - lo) / range;
  return out;
}

std::string_view scope_name(ScalingScope s) {
  return s == ScalingScope::PerCharacter ? "per-character" : "per-window";
}

ScalingScope parse_scope(std::string_view s) {
  if (s == "per-character") return ScalingScope::PerCharacter;
  if (s == "per-window") return ScalingScope::PerWindow;
  throw UsageError(fmt::format("unknown scaling scope '{}' (per-character|per-window)", s));
}

void WindowConfig::validate() const {
  if (window_length < 2) throw UsageError("window length must be at least 2");
  if (stride < 1) throw UsageError("stride must be at least 1");
}

nlohmann::json to_json(const WindowConfig& c) {
  return {{"window_length", c.window_length}, {"stride", c.stride}, {"scaling_scope", scope_name(c.scaling_scope)}};
}

WindowConfig window_config_from_json(const nlohmann::json& j) {
  WindowConfig c;
  try {
    c.window_length = j.at("window_length").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.scaling_scope = parse_scope(j.at("scaling_scope").get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("malformed window config: {}", ex.what()));
  }
  return c;
}

std::size_t window_count(std::size_t length, std::size_t window_length, std::size_t stride) {
  if (length < window_length || stride == 0) return 0;
  return (length - window_length) / stride + 1;
}

std::vector<WindowedSample> slide_windows(const CharacterTimeline& timeline, const FeatureSchema& schema,
                                          const WindowConfig& cfg) {
  cfg.validate();
  const auto active = schema.active_indices();
  if (active.empty()) throw DataError("schema has no active features");
  const std::size_t L = timeline.records.size();
  const std::size_t n = window_count(L, cfg.window_length, cfg.stride);
  std::vector<WindowedSample> out;
  if (n == 0) return out;

  // columns[j] holds the full series of active feature j
  std::vector<std::vector<double>> columns(active.size(), std::vector<double>(L));
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < active.size(); ++j) columns[j][t] = timeline.records[t].values[active[j]];
  if (cfg.scaling_scope == ScalingScope::PerCharacter)
    for (auto& col : columns) col = minmax_scale(col);

  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t start = w * cfg.stride;
    WindowedSample s;
    s.matrix = Matrix(cfg.window_length, active.size());
    s.label = timeline.label;
    s.origin.character_id = timeline.character_id;
    s.origin.start_index = start;
    s.origin.start_time = timeline.records[start].timestamp;
    for (std::size_t j = 0; j < active.size(); ++j) {
      std::span<const double> seg(columns[j].data() + start, cfg.window_length);
      std::vector<double> scaled;
      if (cfg.scaling_scope == ScalingScope::PerWindow) {
        scaled = minmax_scale(seg);
        seg = scaled;
      }
      for (std::size_t t = 0; t < cfg.window_length; ++t) s.matrix(t, j) = seg[t];
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WindowedSample> slide_all(const std::vector<CharacterTimeline>& timelines,
                                      const FeatureSchema& schema, const WindowConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<WindowedSample>> per(timelines.size());
  const auto n = static_cast<std::ptrdiff_t>(timelines.size());
  // exceptions cannot cross the parallel region; re-raise after the loop
  std::vector<std::exception_ptr> errors(timelines.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per[i] = slide_windows(timelines[i], schema, cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<WindowedSample> out;
  for (auto& v : per)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

static double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("quantile of empty set");
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, p);
}

FiveNumber five_number(std::vector<double> values) {
  if (values.empty()) throw DataError("summary of empty set");
  std::sort(values.begin(), values.end());
  FiveNumber f;
  f.count = values.size();
  f.min = values.front();
  f.max = values.back();
  f.q1 = sorted_quantile(values, 0.25);
  f.median = sorted_quantile(values, 0.5);
  f.q3 = sorted_quantile(values, 0.75);
  double sum = 0;
  for (double v : values) sum += v;
  f.mean = sum / static_cast<double>(values.size());
  return f;
}

DistributionSummary summarize_distributions(const std::vector<WindowedSample>& samples,
                                            const FeatureSchema& schema) {
  if (samples.empty()) throw DataError("no samples to summarize");
  const auto active = schema.active_indices();
  for (const auto& s : samples)
    if (s.matrix.cols() != active.size())
      throw DataError("sample width does not match the active schema");

  DistributionSummary out;
  for (std::size_t j = 0; j < active.size(); ++j) {
    std::vector<double> bot, normal;
    for (const auto& s : samples) {
      auto& dst = require_label(s) == Label::Bot ? bot : normal;
      for (std::size_t t = 0; t < s.matrix.rows(); ++t) dst.push_back(s.matrix(t, j));
    }
    FeatureDistribution fd;
    fd.feature = schema.features[active[j]].name;
    if (!bot.empty()) fd.bot = five_number(std::move(bot));
    if (!normal.empty()) fd.normal = five_number(std::move(normal));
    out.missing_bot = !fd.bot;
    out.missing_normal = !fd.normal;
    out.features.push_back(std::move(fd));
  }
  return out;
}

nlohmann::json to_json(const DistributionSummary& s) {
  auto five = [](const std::optional<FiveNumber>& f) -> nlohmann::json {
    if (!f) return nullptr;
    return {{"min", f->min}, {"q1", f->q1},     {"median", f->median}, {"q3", f->q3},
            {"max", f->max}, {"mean", f->mean}, {"count", f->count}};
  };
  auto arr = nlohmann::json::array();
  for (const auto& f : s.features) arr.push_back({{"feature", f.feature}, {"bot", five(f.bot)}, {"normal", five(f.normal)}});
  return {{"features", arr}, {"missing_bot", s.missing_bot}, {"missing_normal", s.missing_normal}};
}

std::string format_summary(const DistributionSummary& s) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "Scaled feature distributions\n");
  for (const auto& f : s.features) {
    fmt::format_to(out, "\n{}\n  {:<7} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", f.feature, "label", "min", "q1",
                   "median", "q3", "max", "mean");
    auto row = [&](std::string_view name, const std::optional<FiveNumber>& v) {
      if (!v) {
        fmt::format_to(out, "  {:<7} (no samples)\n", name);
        return;
      }
      fmt::format_to(out, "  {:<7} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", name, v->min, v->q1,
                     v->median, v->q3, v->max, v->mean);
    };
    row("bot", f.bot);
    row("normal", f.normal);
  }
  return fmt::to_string(buf);
}

}  // namespace botledger
