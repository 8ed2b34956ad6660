#include "doctest.h"

#include <map>
#include <set>

#include <fmt/format.h>

#include "botledger/harness.hpp"
#include "botledger/random.hpp"

using namespace botledger;

namespace {

std::vector<WindowedSample> fake_samples(std::size_t bots, std::size_t normals, std::size_t per_character,
                                         std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<WindowedSample> out;
  for (std::size_t c = 0; c < bots + normals; ++c) {
    const bool bot = c < bots;
    for (std::size_t w = 0; w < per_character; ++w) {
      WindowedSample s;
      s.matrix = Matrix(6, 2);
      for (std::size_t t = 0; t < 6; ++t) {
        s.matrix(t, 0) = bot ? 0.7 + 0.2 * rng.uniform() : 0.1 + 0.2 * rng.uniform();
        s.matrix(t, 1) = rng.uniform();
      }
      s.label = bot ? Label::Bot : Label::Normal;
      s.origin.character_id = fmt::format("c{:03d}", c);
      s.origin.start_index = w * 3;
      out.push_back(std::move(s));
    }
  }
  return out;
}

CharacterTimeline hourly(const std::string& id, std::int64_t start, std::size_t n) {
  CharacterTimeline t{id, Label::Normal, {}};
  for (std::size_t i = 0; i < n; ++i) t.records.push_back({id, "a", start + static_cast<std::int64_t>(i) * 3600, {}});
  return t;
}

}  // namespace

TEST_CASE("metrics on a worked confusion matrix") {
  const ConfusionMatrix cm{92, 8, 98, 2};
  const auto m = compute_metrics(cm);
  CHECK(m.precision == doctest::Approx(0.92));
  CHECK(m.recall == doctest::Approx(92.0 / 94.0));
  CHECK(m.recall == doctest::Approx(0.97872).epsilon(1e-5));
  CHECK(m.f1 == doctest::Approx(0.94845).epsilon(1e-5));
  CHECK(m.accuracy == doctest::Approx(0.95));
  CHECK_FALSE(m.precision_undefined);
}

TEST_CASE("metric edge cases") {
  CHECK_THROWS_AS(compute_metrics({}), DataError);
  const auto none = compute_metrics({0, 0, 10, 0});
  CHECK(none.precision_undefined);
  CHECK(none.recall_undefined);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 1.0);
  const auto missed = compute_metrics({0, 0, 5, 5});
  CHECK(missed.precision_undefined);
  CHECK_FALSE(missed.recall_undefined);
  CHECK(missed.recall == 0.0);
}

TEST_CASE("a probability equal to the threshold counts as bot") {
  const std::vector<double> p{0.5, 0.4999999, 0.5};
  const std::vector<Label> y{Label::Bot, Label::Bot, Label::Normal};
  const auto cm = confusion(p, y, 0.5);
  CHECK(cm == ConfusionMatrix{1, 1, 0, 1});
}

TEST_CASE("raising the threshold never adds positive predictions") {
  Rng rng(4);
  std::vector<double> p(500);
  std::vector<Label> y(500);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform();
    y[i] = rng.bernoulli(0.3) ? Label::Bot : Label::Normal;
  }
  std::size_t prev = p.size() + 1;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto cm = confusion(p, y, t);
    CHECK(cm.tp + cm.fp <= prev);
    prev = cm.tp + cm.fp;
    CHECK(cm.total() == p.size());
  }
}

TEST_CASE("average row is the mean of row metrics") {
  std::vector<EvalRow> rows(4);
  const double f1[] = {0.9494, 0.9401, 0.9487, 0.9509};
  for (int i = 0; i < 4; ++i) {
    rows[i].metrics.f1 = f1[i];
    rows[i].confusion = {1, 2, 3, 4};
  }
  const auto avg = average_rows(rows);
  CHECK(std::abs(avg.metrics.f1 - 0.9473) <= 5e-5);
  CHECK(avg.confusion == ConfusionMatrix{4, 8, 12, 16});
  CHECK(avg.name == "Average");
}

TEST_CASE("stratified grouped folds over 30 bots and 70 normals") {
  const auto samples = fake_samples(30, 70, 3);
  const auto plan = make_folds(samples, 10, 7);
  const auto h = check_fold_plan(plan, samples);
  CHECK(h.partition_ok);
  CHECK(h.no_leakage);
  for (const auto& members : plan.fold_members()) {
    std::set<std::string> bots, normals;
    for (std::size_t i : members)
      (samples[i].label == Label::Bot ? bots : normals).insert(samples[i].origin.character_id);
    CHECK(bots.size() == 3);
    CHECK(normals.size() == 7);
  }
  CHECK(make_folds(samples, 10, 7).assignments == plan.assignments);
  CHECK(make_folds(samples, 10, 8).assignments != plan.assignments);
}

TEST_CASE("class sizes that do not divide k stay balanced") {
  const auto samples = fake_samples(13, 27, 1);
  const auto plan = make_folds(samples, 4, 1);
  for (const auto& members : plan.fold_members()) CHECK(members.size() == 10);
}

TEST_CASE("leaky folds deal windows, grouped folds refuse thin classes") {
  const auto samples = fake_samples(5, 5, 4);
  const auto leaky = make_folds(samples, 10, 1, false);
  const auto h = check_fold_plan(leaky, samples);
  CHECK(h.partition_ok);
  CHECK_FALSE(h.no_leakage);
  CHECK_THROWS_WITH_AS(make_folds(samples, 10, 1, true), doctest::Contains("insufficient class members"), DataError);
  CHECK_THROWS_AS(make_folds(samples, 1, 1), UsageError);
}

TEST_CASE("hygiene check flags broken plans") {
  const auto samples = fake_samples(4, 4, 2);
  auto plan = make_folds(samples, 2, 3);
  plan.assignments[0] = 1 - plan.assignments[1];
  CHECK_FALSE(check_fold_plan(plan, samples).no_leakage);
  plan.assignments.pop_back();
  CHECK_FALSE(check_fold_plan(plan, samples).partition_ok);
}

TEST_CASE("split_by_period uses half-open intervals from the anchor") {
  const std::int64_t week = 7 * kSecondsPerDay, t0 = 1272672000;
  const auto p = split_by_period({hourly("c1", t0, 28 * 24)}, week, t0);
  REQUIRE(p.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p[i].id == static_cast<std::int64_t>(i));
    CHECK(p[i].start == t0 + static_cast<std::int64_t>(i) * week);
    CHECK(p[i].timelines[0].records.size() == 168);
  }
  const auto late = split_by_period({hourly("c2", t0 + week + 10, 5)}, week, t0);
  REQUIRE(late.size() == 1);
  CHECK(late[0].id == 1);
  const auto edge = split_by_period({hourly("c3", t0 + week, 1)}, week, t0);
  CHECK(edge[0].id == 1);
  const auto before = split_by_period({hourly("c4", t0 - 1, 1)}, week, t0);
  CHECK(before[0].id == -1);
  CHECK_THROWS_AS(split_by_period({}, 0, t0), UsageError);
}

TEST_CASE("training reduces the loss and is reproducible") {
  const auto samples = fake_samples(10, 10, 4);
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 6;
  cfg.dropout_p = 0.1;
  TrainOptions opts;
  opts.epochs = 15;
  opts.batch_size = 16;
  opts.lr = 0.01;
  const auto a = train(samples, cfg, opts);
  const auto b = train(samples, cfg, opts);
  REQUIRE(a.log.size() == 15);
  CHECK(a.log.back().train_loss < a.log.front().train_loss);
  CHECK(a.params == b.params);
  opts.epochs = 0;
  CHECK(train(samples, cfg, opts).params == init_params(cfg));
}

TEST_CASE("early stopping restores the best holdout parameters") {
  const auto samples = fake_samples(10, 10, 4);
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 4;
  TrainOptions opts;
  opts.epochs = 40;
  opts.batch_size = 8;
  opts.lr = 0.05;
  opts.early_stop = EarlyStop{2, 0.25};
  const auto r = train(samples, cfg, opts);
  CHECK(r.log.size() <= 40);
  for (const auto& e : r.log) CHECK(e.holdout_loss.has_value());
}

TEST_CASE("cross validation report shape") {
  const auto samples = fake_samples(10, 10, 3);
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 4;
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 8;
  const auto r = cross_validate(samples, cfg, opts, {5, 2, 0.5, true});
  REQUIRE(r.rows.size() == 5);
  CHECK(r.rows[0].name == "Fold 1");
  CHECK(r.average.name == "Average");
  CHECK(r.average.confusion.total() == samples.size());
  CHECK(r.hygiene.partition_ok);
  CHECK(r.hygiene.no_leakage);
  const auto text = format_report(r);
  CHECK(text.find("F1 Score") != std::string::npos);
  CHECK(text.find("Fold 5") != std::string::npos);
  const auto j = to_json(r);
  CHECK(j.at("rows").size() == 6);
}

TEST_CASE("cross validation by period names weekly rows") {
  auto samples = fake_samples(8, 8, 4);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].origin.period = static_cast<std::int64_t>(i % 2);
  ModelConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 3;
  TrainOptions opts;
  opts.epochs = 1;
  const auto r = cross_validate_by_period(samples, 7 * kSecondsPerDay, cfg, opts, {2, 1, 0.5, true});
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].name == "Week 1");
  CHECK(r.rows[1].name == "Week 2");
  samples[0].origin.period.reset();
  CHECK_THROWS_AS(cross_validate_by_period(samples, 7 * kSecondsPerDay, cfg, opts, {2, 1, 0.5, true}), DataError);
}
