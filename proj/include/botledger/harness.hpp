#pragma once

#include <optional>
#include <string>
#include <vector>

#include "botledger/core.hpp"
#include "botledger/lstm.hpp"

namespace botledger {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct Period {
  std::int64_t id = 0;     // floor((t - anchor) / period_length)
  std::int64_t start = 0;  // anchor + id * period_length
  std::vector<CharacterTimeline> timelines;
};

// Half-open periods [anchor + i*len, anchor + (i+1)*len). Only periods that
// contain at least one record are returned, in ascending order.
std::vector<Period> split_by_period(const std::vector<CharacterTimeline>& timelines, std::int64_t period_length,
                                    std::int64_t anchor);

using SampleRefs = std::vector<const WindowedSample*>;

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // sample index -> fold id
  std::uint64_t seed = 0;
  bool grouped = true;

  std::vector<std::vector<std::size_t>> fold_members() const;
};

// Stratified by label. Grouped plans deal whole characters to folds so every
// window of a character shares a fold; ungrouped plans deal single windows.
FoldPlan make_folds(const std::vector<WindowedSample>& samples, std::size_t k, std::uint64_t seed,
                    bool grouped = true);

struct FoldHygiene {
  bool partition_ok = false;  // every index in exactly one fold, all folds non-empty
  bool no_leakage = false;    // no character split across folds
};

FoldHygiene check_fold_plan(const FoldPlan& plan, const std::vector<WindowedSample>& samples);

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Positive class is Bot; p >= threshold predicts Bot.
ConfusionMatrix confusion(std::span<const double> probabilities, std::span<const Label> labels, double threshold);

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
};

Metrics compute_metrics(const ConfusionMatrix& cm);

struct EarlyStop {
  std::size_t patience = 3;
  double holdout_fraction = 0.1;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 1;
  double lr = 1e-3;
  std::optional<EarlyStop> early_stop;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  std::optional<double> holdout_loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

TrainResult train(const SampleRefs& samples, const ModelConfig& cfg, const TrainOptions& opts);
TrainResult train(const std::vector<WindowedSample>& samples, const ModelConfig& cfg, const TrainOptions& opts);

// Inference-mode probabilities.
std::vector<double> predict(const ModelParams& params, const ModelConfig& cfg, const SampleRefs& samples);

struct EvalRow {
  std::string name;
  Metrics metrics;
  ConfusionMatrix confusion;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow average;  // metrics are the mean of the rows; confusion is their sum
  FoldHygiene hygiene{true, true};
  nlohmann::json config = nlohmann::json::object();
};

EvalRow average_rows(const std::vector<EvalRow>& rows, std::string name = "Average");

struct CrossValOptions {
  std::size_t k = 10;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  bool grouped = true;
};

EvalReport cross_validate(const std::vector<WindowedSample>& samples, const ModelConfig& cfg,
                          const TrainOptions& train_opts, const CrossValOptions& cv);

// One cross-validation per period tag (samples must carry origin.period);
// each row is that period's fold average. Rows are named "Week N" when the
// period is seven days, "Period N" otherwise.
EvalReport cross_validate_by_period(const std::vector<WindowedSample>& samples, std::int64_t period_length,
                                    const ModelConfig& cfg, const TrainOptions& train_opts,
                                    const CrossValOptions& cv);

nlohmann::json to_json(const EvalReport& r);
std::string format_report(const EvalReport& r);

}  // namespace botledger
