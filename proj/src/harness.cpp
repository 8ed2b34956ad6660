#include "botledger/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

#include "botledger/random.hpp"

namespace botledger {

std::vector<Period> split_by_period(const std::vector<CharacterTimeline>& timelines, std::int64_t period_length,
                                    std::int64_t anchor) {
  if (period_length <= 0) throw UsageError("period length must be positive");
  std::map<std::int64_t, Period> periods;
  for (const auto& tl : timelines) {
    std::map<std::int64_t, CharacterTimeline> parts;
    for (const auto& r : tl.records) {
      const std::int64_t off = r.timestamp - anchor;
      // floor division so records before the anchor land in negative periods
      const std::int64_t id = off >= 0 ? off / period_length : -((-off + period_length - 1) / period_length);
      auto& part = parts[id];
      if (part.records.empty()) {
        part.character_id = tl.character_id;
        part.label = tl.label;
      }
      part.records.push_back(r);
    }
    for (auto& [id, part] : parts) {
      auto& p = periods[id];
      p.id = id;
      p.start = anchor + id * period_length;
      p.timelines.push_back(std::move(part));
    }
  }
  std::vector<Period> out;
  for (auto& [id, p] : periods) out.push_back(std::move(p));
  return out;
}

std::vector<std::vector<std::size_t>> FoldPlan::fold_members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < assignments.size(); ++i) out[assignments[i]].push_back(i);
  return out;
}

FoldPlan make_folds(const std::vector<WindowedSample>& samples, std::size_t k, std::uint64_t seed, bool grouped) {
  if (k < 2) throw UsageError("k must be at least 2");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.grouped = grouped;
  plan.assignments.assign(samples.size(), 0);

  // units are characters (grouped) or single windows; each unit lists its samples
  std::map<std::string, std::vector<std::size_t>> by_character;
  std::array<std::vector<std::vector<std::size_t>>, 2> units;  // [Bot, Normal]
  if (grouped) {
    for (std::size_t i = 0; i < samples.size(); ++i) by_character[samples[i].origin.character_id].push_back(i);
    for (auto& [id, members] : by_character) {
      const Label l = require_label(samples[members.front()]);
      for (std::size_t i : members)
        if (require_label(samples[i]) != l)
          throw DataError(fmt::format("character '{}' has windows with different labels", id));
      units[l == Label::Bot ? 0 : 1].push_back(members);
    }
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i)
      units[require_label(samples[i]) == Label::Bot ? 0 : 1].push_back({i});
  }

  std::size_t offset = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& list = units[c];
    if (list.size() < k)
      throw DataError(fmt::format("insufficient class members: {} has {} {} for k = {}",
                                  c == 0 ? "bot" : "normal", list.size(), grouped ? "characters" : "windows", k));
    Rng rng(derive_seed(seed, c));
    rng.shuffle(list);
    for (std::size_t u = 0; u < list.size(); ++u) {
      const std::size_t fold = (offset + u) % k;
      for (std::size_t i : list[u]) plan.assignments[i] = fold;
    }
    offset = (offset + list.size()) % k;
  }
  return plan;
}

FoldHygiene check_fold_plan(const FoldPlan& plan, const std::vector<WindowedSample>& samples) {
  FoldHygiene h;
  h.partition_ok = plan.assignments.size() == samples.size() && plan.k >= 2;
  std::vector<std::size_t> counts(plan.k, 0);
  for (std::size_t a : plan.assignments) {
    if (a >= plan.k) {
      h.partition_ok = false;
      break;
    }
    ++counts[a];
  }
  std::size_t total = 0;
  for (std::size_t c : counts) {
    total += c;
    if (c == 0) h.partition_ok = false;
  }
  if (total != samples.size()) h.partition_ok = false;

  h.no_leakage = true;
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < samples.size() && i < plan.assignments.size(); ++i) {
    auto [it, inserted] = fold_of.emplace(samples[i].origin.character_id, plan.assignments[i]);
    if (!inserted && it->second != plan.assignments[i]) h.no_leakage = false;
  }
  return h;
}

ConfusionMatrix confusion(std::span<const double> probabilities, std::span<const Label> labels, double threshold) {
  if (probabilities.size() != labels.size()) throw DataError("confusion: size mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted_bot = probabilities[i] >= threshold;
    const bool bot = labels[i] == Label::Bot;
    if (predicted_bot && bot) ++cm.tp;
    else if (predicted_bot) ++cm.fp;
    else if (bot) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("cannot compute metrics of an empty confusion matrix");
  Metrics m;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  m.accuracy = d(cm.tp + cm.tn) / d(cm.total());
  m.precision_undefined = cm.tp + cm.fp == 0;
  m.recall_undefined = cm.tp + cm.fn == 0;
  m.precision = m.precision_undefined ? 0.0 : d(cm.tp) / d(cm.tp + cm.fp);
  m.recall = m.recall_undefined ? 0.0 : d(cm.tp) / d(cm.tp + cm.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

namespace {

std::vector<Label> labels_of(const SampleRefs& samples) {
  std::vector<Label> out;
  out.reserve(samples.size());
  for (const auto* s : samples) out.push_back(require_label(*s));
  return out;
}

double mean_loss(const ModelParams& params, const ModelConfig& cfg, const SampleRefs& samples) {
  const auto probs = predict(params, cfg, samples);
  return bce_loss(probs, labels_of(samples), params, cfg.l2_lambda);
}

}  // namespace

std::vector<double> predict(const ModelParams& params, const ModelConfig& cfg, const SampleRefs& samples) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<const Matrix*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]->matrix);
    auto r = forward(params, batch, cfg, {Mode::Inference, 0, Execution::Parallel});
    out.insert(out.end(), r.probabilities.begin(), r.probabilities.end());
  }
  return out;
}

TrainResult train(const SampleRefs& samples, const ModelConfig& cfg, const TrainOptions& opts) {
  if (opts.batch_size < 1) throw UsageError("batch size must be at least 1");
  bool have_bot = false, have_normal = false;
  for (const auto* s : samples) (require_label(*s) == Label::Bot ? have_bot : have_normal) = true;
  if (!have_bot || !have_normal) throw DataError("training needs at least one sample of each class");

  TrainResult result;
  result.params = init_params(cfg);
  if (opts.epochs == 0) return result;

  SampleRefs fit = samples, holdout;
  if (opts.early_stop) {
    Rng rng(derive_seed(opts.shuffle_seed, 0xe5));
    rng.shuffle(fit);
    const auto n_hold = static_cast<std::size_t>(std::floor(opts.early_stop->holdout_fraction *
                                                            static_cast<double>(fit.size())));
    if (n_hold > 0 && n_hold < fit.size()) {
      holdout.assign(fit.end() - static_cast<std::ptrdiff_t>(n_hold), fit.end());
      fit.resize(fit.size() - n_hold);
    }
  }

  AdamState adam = AdamState::for_params(result.params, opts.lr);
  ModelParams best = result.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  std::vector<std::size_t> order(fit.size());
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(opts.shuffle_seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<const Matrix*> batch;
      std::vector<Label> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&fit[order[i]]->matrix);
        labels.push_back(require_label(*fit[order[i]]));
      }
      const ForwardOptions fo{Mode::Training, derive_seed(cfg.seed ^ 0xd509, step++), Execution::Parallel};
      auto fr = forward(result.params, batch, cfg, fo);
      loss_sum += bce_loss(fr.probabilities, labels, result.params, cfg.l2_lambda) * static_cast<double>(end - start);
      const Gradients g = backward(fr.trace, batch, labels, result.params, cfg, Execution::Parallel);
      adam_step(result.params, g, adam);
      if (cfg.use_batchnorm) update_running_stats(result.params, fr.trace.bn_mean, fr.trace.bn_var, cfg.bn_momentum);
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    if (!holdout.empty()) {
      entry.holdout_loss = mean_loss(result.params, cfg, holdout);
      if (*entry.holdout_loss < best_loss) {
        best_loss = *entry.holdout_loss;
        best = result.params;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    result.log.push_back(entry);
    if (!holdout.empty() && since_best >= opts.early_stop->patience) break;
  }
  if (!holdout.empty()) result.params = std::move(best);
  return result;
}

TrainResult train(const std::vector<WindowedSample>& samples, const ModelConfig& cfg, const TrainOptions& opts) {
  SampleRefs refs;
  refs.reserve(samples.size());
  for (const auto& s : samples) refs.push_back(&s);
  return train(refs, cfg, opts);
}

EvalRow average_rows(const std::vector<EvalRow>& rows, std::string name) {
  EvalRow avg;
  avg.name = std::move(name);
  if (rows.empty()) return avg;
  for (const auto& r : rows) {
    avg.metrics.accuracy += r.metrics.accuracy;
    avg.metrics.precision += r.metrics.precision;
    avg.metrics.recall += r.metrics.recall;
    avg.metrics.f1 += r.metrics.f1;
    avg.metrics.precision_undefined = avg.metrics.precision_undefined || r.metrics.precision_undefined;
    avg.metrics.recall_undefined = avg.metrics.recall_undefined || r.metrics.recall_undefined;
    avg.confusion += r.confusion;
  }
  const auto n = static_cast<double>(rows.size());
  avg.metrics.accuracy /= n;
  avg.metrics.precision /= n;
  avg.metrics.recall /= n;
  avg.metrics.f1 /= n;
  return avg;
}

EvalReport cross_validate(const std::vector<WindowedSample>& samples, const ModelConfig& cfg,
                          const TrainOptions& train_opts, const CrossValOptions& cv) {
  const FoldPlan plan = make_folds(samples, cv.k, cv.seed, cv.grouped);
  EvalReport report;
  report.hygiene = check_fold_plan(plan, samples);
  if (!report.hygiene.partition_ok) throw DataError("fold plan is not a partition of the samples");
  if (cv.grouped && !report.hygiene.no_leakage) throw DataError("grouped fold plan split a character across folds");

  report.config = {{"model", to_json(cfg)},
                   {"epochs", train_opts.epochs},
                   {"batch_size", train_opts.batch_size},
                   {"lr", train_opts.lr},
                   {"k", cv.k},
                   {"seed", cv.seed},
                   {"threshold", cv.threshold},
                   {"grouped_folds", cv.grouped}};

  for (std::size_t f = 0; f < plan.k; ++f) {
    SampleRefs train_set, test_set;
    for (std::size_t i = 0; i < samples.size(); ++i)
      (plan.assignments[i] == f ? test_set : train_set).push_back(&samples[i]);
    TrainOptions fold_opts = train_opts;
    fold_opts.shuffle_seed = derive_seed(train_opts.shuffle_seed, f);
    const auto trained = train(train_set, cfg, fold_opts);
    const auto probs = predict(trained.params, cfg, test_set);
    EvalRow row;
    row.name = fmt::format("Fold {}", f + 1);
    row.confusion = confusion(probs, labels_of(test_set), cv.threshold);
    row.metrics = compute_metrics(row.confusion);
    report.rows.push_back(std::move(row));
  }
  report.average = average_rows(report.rows);
  return report;
}

EvalReport cross_validate_by_period(const std::vector<WindowedSample>& samples, std::int64_t period_length,
                                    const ModelConfig& cfg, const TrainOptions& train_opts,
                                    const CrossValOptions& cv) {
  std::map<std::int64_t, std::vector<WindowedSample>> by_period;
  for (const auto& s : samples) {
    if (!s.origin.period) throw DataError("samples carry no period tags; featurize with a period length");
    by_period[*s.origin.period].push_back(s);
  }
  EvalReport report;
  report.hygiene = {true, true};
  const std::string_view unit = period_length == 7 * kSecondsPerDay ? "Week" : "Period";
  std::size_t n = 0;
  for (auto& [id, group] : by_period) {
    auto inner = cross_validate(group, cfg, train_opts, cv);
    report.hygiene.partition_ok = report.hygiene.partition_ok && inner.hygiene.partition_ok;
    report.hygiene.no_leakage = report.hygiene.no_leakage && inner.hygiene.no_leakage;
    if (report.config.empty()) report.config = inner.config;
    report.rows.push_back(average_rows(inner.rows, fmt::format("{} {}", unit, ++n)));
  }
  report.config["period_length"] = period_length;
  report.average = average_rows(report.rows);
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  auto row = [](const EvalRow& e) {
    return nlohmann::json{{"Experiment", e.name},
                          {"Accuracy", e.metrics.accuracy},
                          {"Precision", e.metrics.precision},
                          {"Recall", e.metrics.recall},
                          {"F1 Score", e.metrics.f1},
                          {"precision_undefined", e.metrics.precision_undefined},
                          {"recall_undefined", e.metrics.recall_undefined},
                          {"confusion",
                           {{"tp", e.confusion.tp}, {"fp", e.confusion.fp}, {"tn", e.confusion.tn},
                            {"fn", e.confusion.fn}}}};
  };
  auto rows = nlohmann::json::array();
  for (const auto& e : r.rows) rows.push_back(row(e));
  rows.push_back(row(r.average));
  return {{"columns", {"Experiment", "Accuracy", "Precision", "Recall", "F1 Score"}},
          {"rows", rows},
          {"fold_hygiene", {{"partition_ok", r.hygiene.partition_ok}, {"no_leakage", r.hygiene.no_leakage}}},
          {"config", r.config}};
}

std::string format_report(const EvalReport& r) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "{:<12} {:>9} {:>9} {:>9} {:>9}\n", "Experiment", "Accuracy", "Precision", "Recall",
                 "F1 Score");
  auto line = [&](const EvalRow& e) {
    fmt::format_to(out, "{:<12} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f}\n", e.name, e.metrics.accuracy,
                   e.metrics.precision, e.metrics.recall, e.metrics.f1);
  };
  for (const auto& e : r.rows) line(e);
  fmt::format_to(out, "{}\n", std::string(52, '-'));
  line(r.average);
  return fmt::to_string(buf);
}

}  // namespace botledger
