#include "botledger/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "CLI11.hpp"
#include "botledger/harness.hpp"
#include "botledger/model_io.hpp"
#include "botledger/random.hpp"
#include "botledger/synthgen.hpp"

namespace botledger {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const Error& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

Featurized featurize(const fs::path& logs, const fs::path& labels, const WindowConfig& window,
                     std::optional<std::int64_t> period_length, std::optional<std::int64_t> anchor) {
  window.validate();
  const auto schema = canonical_schema();
  auto parsed = parse_status_log(logs, schema);
  const auto label_file = parse_label_file(labels);
  auto tl = build_timelines(std::move(parsed.records), &label_file);
  auto elim = eliminate_noninfluential(tl.timelines, schema);

  Featurized out;
  out.parse_stats = parsed.stats;
  out.timeline_stats = tl.stats;
  out.elimination = elim.report;
  out.samples.schema = elim.schema;
  out.samples.window = window;
  if (period_length) {
    if (*period_length <= 0) throw UsageError("period length must be positive");
    std::int64_t a = std::numeric_limits<std::int64_t>::max();
    for (const auto& t : tl.timelines)
      if (!t.records.empty()) a = std::min(a, t.records.front().timestamp);
    out.samples.anchor = anchor.value_or(a);
    out.samples.period_length = period_length;
    for (const auto& p : split_by_period(tl.timelines, *period_length, out.samples.anchor)) {
      auto windows = slide_all(p.timelines, elim.schema, window);
      for (auto& s : windows) {
        s.origin.period = p.id;
        out.samples.samples.push_back(std::move(s));
      }
    }
  } else {
    out.samples.anchor = anchor.value_or(0);
    out.samples.samples = slide_all(tl.timelines, elim.schema, window);
  }
  if (out.samples.samples.empty()) throw DataError("no windows: every timeline is shorter than the window");
  return out;
}

namespace {

// Each subcommand option is mirrored into a flat JSON config so that a
// config file (or an earlier manifest) can fill whatever the command line
// leaves unset.
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& desc) {
    auto* o = app_->add_option("--" + name, var, desc);
    if constexpr (!std::is_same_v<T, std::string>) o->capture_default_str();
    list_.push_back({name, o, [&var] { return json(var); }, [&var](const json& j) { var = j.get<T>(); }});
    return o;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    auto* o = app_->add_flag("--" + name, var, desc);
    list_.push_back({name, o, [&var] { return json(var); }, [&var](const json& j) { var = j.get<bool>(); }});
    return o;
  }

  CLI::App* app() const { return app_; }

  // Fills unset options from the config file, then returns the resolved set.
  json resolve(const std::string& config_path) {
    json file = json::object();
    if (!config_path.empty()) {
      try {
        file = json::parse(read_file(config_path));
      } catch (const json::exception& ex) {
        throw FormatError(fmt::format("config {}: {}", config_path, ex.what()));
      }
      if (file.contains("config")) file = file["config"];
      if (!file.is_object()) throw FormatError(fmt::format("config {}: expected an object", config_path));
    }
    json resolved = json::object();
    for (auto& p : list_) {
      if (p.opt->count() > 0) {
        sources_[p.name] = "cli";
      } else if (file.contains(p.name)) {
        try {
          p.set(file[p.name]);
        } catch (const json::exception&) {
          throw FormatError(fmt::format("config {}: bad value for '{}'", config_path, p.name));
        }
        sources_[p.name] = "config";
      } else {
        sources_[p.name] = "default";
      }
      resolved[p.name] = p.get();
    }
    return resolved;
  }

  std::string source(const std::string& name) const {
    auto it = sources_.find(name);
    return it == sources_.end() ? "default" : it->second;
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* opt;
    std::function<json()> get;
    std::function<void(const json&)> set;
  };
  CLI::App* app_;
  std::vector<Entry> list_;
  std::map<std::string, std::string> sources_;
};

std::string now_iso() {
  const auto t = std::chrono::system_clock::now();
  return format_timestamp(std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count());
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  json seeds = json::object();
  json extra = json::object();
  std::vector<fs::path> inputs, outputs;
  std::string started_at = now_iso();

  void write(const fs::path& path) const {
    auto files = [](const std::vector<fs::path>& v) {
      auto a = json::array();
      for (const auto& p : v) a.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
      return a;
    };
    json m = {{"tool", "botledger"}, {"manifest_version", 1}, {"command", command}, {"argv", argv},
              {"config", config},    {"seeds", seeds},        {"inputs", files(inputs)},
              {"outputs", files(outputs)}, {"started_at", started_at}, {"finished_at", now_iso()}};
    if (!extra.empty()) m["details"] = extra;
    write_file(path, m.dump(2) + "\n");
  }
};

std::uint64_t resolve_seed(Params& params, std::uint64_t& seed, Manifest& m) {
  std::string src = params.source("seed");
  if (src == "default") {
    if (const char* env = std::getenv("BOTLEDGER_SEED"); env && *env) {
      try {
        std::size_t used = 0;
        seed = std::stoull(env, &used);
        if (used != std::string_view(env).size()) throw std::invalid_argument("trailing");
      } catch (const std::logic_error&) {
        throw UsageError(fmt::format("BOTLEDGER_SEED is not an unsigned integer: '{}'", env));
      }
      src = "env";
    }
  }
  m.config["seed"] = seed;
  m.seeds["seed"] = seed;
  m.seeds["seed_source"] = src;
  return seed;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(fmt::format("--{} is required", flag));
}

fs::path manifest_path(const std::string& flag_value, const fs::path& primary) {
  if (!flag_value.empty()) return flag_value;
  return fs::path(primary.string() + ".manifest.json");
}

bool wants_json(const fs::path& p) { return p.extension() == ".json"; }

struct ModelFlags {
  std::size_t hidden_dim = 32;
  double dropout = 0.2;
  double l2 = 1e-4;
  bool no_batchnorm = false;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double lr = 1e-3;

  void add(Params& p) {
    p.option("hidden-dim", hidden_dim, "LSTM hidden units");
    p.option("dropout", dropout, "dropout on the final hidden state");
    p.option("l2", l2, "L2 penalty on weight matrices");
    p.flag("no-batchnorm", no_batchnorm, "disable the input batch-norm stage");
    p.option("batch-size", batch_size, "mini-batch size");
    p.option("epochs", epochs, "training epochs");
    p.option("lr", lr, "Adam learning rate");
  }

  ModelConfig model(std::size_t input_dim, std::uint64_t seed) const {
    ModelConfig c;
    c.input_dim = input_dim;
    c.hidden_dim = hidden_dim;
    c.dropout_p = dropout;
    c.l2_lambda = l2;
    c.use_batchnorm = !no_batchnorm;
    c.seed = seed;
    c.validate();
    return c;
  }

  TrainOptions training(std::uint64_t seed) const {
    TrainOptions t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr = lr;
    t.shuffle_seed = derive_seed(seed, 0x54);
    if (!(lr > 0)) throw UsageError("--lr must be positive");
    if (batch_size < 1) throw UsageError("--batch-size must be at least 1");
    return t;
  }
};

struct WindowFlags {
  std::size_t window_length = 24;
  std::size_t stride = 12;
  std::string scaling_scope = "per-character";

  void add(Params& p) {
    p.option("window-length", window_length, "records per window");
    p.option("stride", stride, "records between window starts");
    p.option("scaling-scope", scaling_scope, "per-character or per-window");
  }

  WindowConfig config() const {
    WindowConfig w{window_length, stride, parse_scope(scaling_scope)};
    w.validate();
    return w;
  }
};

json ingest_json(const Featurized& f) {
  return {{"parse", to_json(f.parse_stats)}, {"timelines", to_json(f.timeline_stats)},
          {"samples", f.samples.samples.size()}};
}

std::optional<std::int64_t> period_seconds(double days) {
  if (days <= 0) return std::nullopt;
  return static_cast<std::int64_t>(std::llround(days * static_cast<double>(kSecondsPerDay)));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"botledger: financial-status bot detection"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path, manifest_flag;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file or earlier manifest");
    sub->add_option("--manifest", manifest_flag, "manifest path");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic status log, labels and event log");
  Params synth_p(synth);
  std::string out_dir;
  std::size_t bots = 50, normals = 200, days = 28;
  std::int64_t interval = 3600;
  double separability = 1.0, constant_value = 1000.0;
  std::uint64_t seed = 1;
  std::string inject_zero, inject_constant;
  synth_p.option("out-dir", out_dir, "output directory");
  synth_p.option("bots", bots, "bot characters");
  synth_p.option("normals", normals, "normal characters");
  synth_p.option("days", days, "days simulated");
  synth_p.option("snapshot-interval", interval, "seconds between status snapshots");
  synth_p.option("separability", separability, "0 = bots indistinguishable, 1 = archetypal bots");
  synth_p.option("seed", seed, "random seed");
  synth_p.option("inject-zero", inject_zero, "column forced to zero in every record");
  synth_p.option("inject-constant", inject_constant, "column forced to a constant in every record");
  synth_p.option("constant-value", constant_value, "value used by --inject-constant");
  common(synth);

  // featurize
  auto* feat = app.add_subcommand("featurize", "ingest, eliminate features, window and scale");
  Params feat_p(feat);
  std::string logs, labels, out_path, elim_out;
  WindowFlags wf;
  double period_days = 0;
  feat_p.option("logs", logs, "status log CSV");
  feat_p.option("labels", labels, "label CSV");
  feat_p.option("out", out_path, "samples file");
  feat_p.option("elimination-out", elim_out, "elimination report (.json or text)");
  wf.add(feat_p);
  feat_p.option("period-days", period_days, "cut windows within periods of this many days (0 = off)");
  common(feat);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a samples file");
  Params train_p(train_cmd);
  std::string samples_path;
  ModelFlags mf;
  double threshold = 0.5;
  train_p.option("samples", samples_path, "samples file from featurize");
  train_p.option("out", out_path, "model file");
  mf.add(train_p);
  train_p.option("seed", seed, "random seed");
  train_p.option("threshold", threshold, "decision threshold stored with the model");
  common(train_cmd);

  // crossval
  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross-validation report");
  Params cv_p(cv_cmd);
  std::size_t k = 10;
  bool by_period = false, leaky = false;
  double cv_period_days = 7;
  cv_p.option("samples", samples_path, "samples file from featurize");
  cv_p.option("logs", logs, "status log CSV (featurized on the fly)");
  cv_p.option("labels", labels, "label CSV");
  cv_p.option("out", out_path, "report (.json or text)");
  wf.add(cv_p);
  mf.add(cv_p);
  cv_p.option("k", k, "folds");
  cv_p.option("seed", seed, "random seed");
  cv_p.option("threshold", threshold, "decision threshold");
  cv_p.flag("by-period", by_period, "one cross-validation per period");
  cv_p.option("period-days", cv_period_days, "period length in days for --by-period with --logs");
  cv_p.flag("leaky-folds", leaky, "deal single windows to folds instead of whole characters");
  common(cv_cmd);

  // score
  auto* score_cmd = app.add_subcommand("score", "rank characters by bot probability");
  Params score_p(score_cmd);
  std::string model_path;
  score_p.option("model", model_path, "model file");
  score_p.option("logs", logs, "status log CSV");
  score_p.option("labels", labels, "optional label CSV, echoed in the output");
  score_p.option("out", out_path, "ranked CSV");
  common(score_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "per-label feature distribution summary");
  Params report_p(report_cmd);
  report_p.option("samples", samples_path, "samples file from featurize");
  report_p.option("out", out_path, "summary (.json or text)");
  common(report_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    Manifest m;
    m.argv = args;
    if (synth->parsed()) {
      m.command = "synth";
      m.config = synth_p.resolve(config_path);
      resolve_seed(synth_p, seed, m);
      require(out_dir, "out-dir");
      GenConfig g;
      g.n_bots = bots;
      g.n_normals = normals;
      g.days = days;
      g.snapshot_interval = interval;
      g.seed = seed;
      g.separability = separability;
      auto data = generate(g);
      if (!inject_zero.empty()) data.records = inject_zero_feature(std::move(data.records), inject_zero);
      if (!inject_constant.empty())
        data.records = inject_constant_feature(std::move(data.records), inject_constant, constant_value);
      fs::create_directories(out_dir);
      const fs::path dir(out_dir);
      write_file(dir / "status_log.csv", write_status_log(data.records, canonical_schema()));
      write_file(dir / "labels.csv", write_label_file(data.labels));
      write_file(dir / "events.csv", write_event_log(data.events));
      m.outputs = {dir / "status_log.csv", dir / "labels.csv", dir / "events.csv"};
      m.extra = {{"generator", to_json(g)}, {"records", data.records.size()}, {"events", data.events.size()}};
      m.write(manifest_flag.empty() ? dir / "manifest.json" : fs::path(manifest_flag));
      out << fmt::format("wrote {} records for {} characters to {}\n", data.records.size(),
                         data.characters.size(), out_dir);
      return 0;
    }

    if (feat->parsed()) {
      m.command = "featurize";
      m.config = feat_p.resolve(config_path);
      require(logs, "logs");
      require(labels, "labels");
      require(out_path, "out");
      const auto f = featurize(logs, labels, wf.config(), period_seconds(period_days));
      save_samples(out_path, f.samples);
      const fs::path elim_path = elim_out.empty() ? fs::path(out_path + ".elimination.txt") : fs::path(elim_out);
      write_file(elim_path, wants_json(elim_path) ? to_json(f.elimination).dump(2) + "\n"
                                                  : format_report(f.elimination));
      m.inputs = {logs, labels};
      m.outputs = {out_path, elim_path};
      m.extra = {{"ingest", ingest_json(f)}};
      m.write(manifest_path(manifest_flag, out_path));
      out << format_report(f.elimination);
      out << fmt::format("{} samples written to {}\n", f.samples.samples.size(), out_path);
      return 0;
    }

    if (train_cmd->parsed()) {
      m.command = "train";
      m.config = train_p.resolve(config_path);
      resolve_seed(train_p, seed, m);
      require(samples_path, "samples");
      require(out_path, "out");
      const auto set = load_samples(samples_path);
      ModelFile model;
      model.config = mf.model(set.schema.active_count(), seed);
      const auto opts = mf.training(seed);
      m.seeds["shuffle_seed"] = opts.shuffle_seed;
      auto result = train(set.samples, model.config, opts);
      model.schema = set.schema;
      model.window = set.window;
      model.threshold = threshold;
      model.params = std::move(result.params);
      auto losses = json::array();
      for (const auto& e : result.log) losses.push_back(e.train_loss);
      model.training_summary = {{"epochs", opts.epochs},
                                {"batch_size", opts.batch_size},
                                {"lr", opts.lr},
                                {"shuffle_seed", opts.shuffle_seed},
                                {"samples", set.samples.size()},
                                {"train_loss", losses}};
      save_model(out_path, model);
      m.inputs = {samples_path};
      m.outputs = {out_path};
      m.write(manifest_path(manifest_flag, out_path));
      out << fmt::format("trained on {} samples, final loss {:.6f}\n", set.samples.size(),
                         losses.empty() ? 0.0 : losses.back().get<double>());
      return 0;
    }

    if (cv_cmd->parsed()) {
      m.command = "crossval";
      m.config = cv_p.resolve(config_path);
      resolve_seed(cv_p, seed, m);
      require(out_path, "out");
      SampleSet set;
      if (!samples_path.empty()) {
        if (!logs.empty()) throw UsageError("give either --samples or --logs/--labels, not both");
        set = load_samples(samples_path);
        m.inputs = {samples_path};
      } else {
        require(logs, "logs");
        require(labels, "labels");
        auto f = featurize(logs, labels, wf.config(), by_period ? period_seconds(cv_period_days) : std::nullopt);
        m.extra = {{"ingest", ingest_json(f)}, {"elimination", to_json(f.elimination)}};
        set = std::move(f.samples);
        m.inputs = {logs, labels};
      }
      const auto cfg = mf.model(set.schema.active_count(), seed);
      const auto opts = mf.training(seed);
      CrossValOptions cv{k, derive_seed(seed, 0xf0), threshold, !leaky};
      m.seeds["shuffle_seed"] = opts.shuffle_seed;
      m.seeds["fold_seed"] = cv.seed;
      EvalReport report;
      if (by_period) {
        if (!set.period_length)
          throw DataError("samples carry no period tags; featurize with --period-days or pass --logs");
        report = cross_validate_by_period(set.samples, *set.period_length, cfg, opts, cv);
      } else {
        report = cross_validate(set.samples, cfg, opts, cv);
      }
      const fs::path path(out_path);
      write_file(path, wants_json(path) ? to_json(report).dump(2) + "\n" : format_report(report));
      m.outputs = {path};
      m.write(manifest_path(manifest_flag, path));
      out << format_report(report);
      return 0;
    }

    if (score_cmd->parsed()) {
      m.command = "score";
      m.config = score_p.resolve(config_path);
      require(model_path, "model");
      require(logs, "logs");
      require(out_path, "out");
      const auto model = load_model(model_path);
      auto parsed = parse_status_log(logs, canonical_schema());
      auto tl = build_timelines(std::move(parsed.records), nullptr);
      std::map<std::string, Label> known;
      if (!labels.empty()) {
        known = parse_label_file(labels).entries;
        m.inputs.push_back(labels);
      }
      const auto samples = slide_all(tl.timelines, model.schema, model.window);
      SampleRefs refs;
      for (const auto& s : samples) refs.push_back(&s);
      const auto probs = predict(model.params, model.config, refs);

      std::map<std::string, std::pair<double, std::size_t>> acc;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& a = acc[samples[i].origin.character_id];
        a.first += probs[i];
        ++a.second;
      }
      std::vector<std::pair<std::string, double>> ranked;
      for (const auto& [id, a] : acc) ranked.emplace_back(id, a.first / static_cast<double>(a.second));
      std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        return x.second != y.second ? x.second > y.second : x.first < y.first;
      });
      std::string csv = "character_id,probability,label\n";
      for (const auto& [id, p] : ranked) {
        auto it = known.find(id);
        csv += fmt::format("{},{},{}\n", id, p, it == known.end() ? "" : label_name(it->second));
      }
      write_file(out_path, csv);
      m.inputs.insert(m.inputs.begin(), {model_path, logs});
      m.outputs = {out_path};
      const std::size_t flagged = static_cast<std::size_t>(
          std::count_if(ranked.begin(), ranked.end(), [&](const auto& r) { return r.second >= model.threshold; }));
      m.extra = {{"characters_scored", ranked.size()},
                 {"characters_without_windows", tl.timelines.size() - ranked.size()},
                 {"at_or_above_threshold", flagged}};
      m.write(manifest_path(manifest_flag, out_path));
      out << fmt::format("scored {} characters, {} at or above threshold {}\n", ranked.size(), flagged,
                         model.threshold);
      return 0;
    }

    if (report_cmd->parsed()) {
      m.command = "report";
      m.config = report_p.resolve(config_path);
      require(samples_path, "samples");
      require(out_path, "out");
      const auto set = load_samples(samples_path);
      const auto summary = summarize_distributions(set.samples, set.schema);
      const fs::path path(out_path);
      write_file(path, wants_json(path) ? to_json(summary).dump(2) + "\n" : format_summary(summary));
      m.inputs = {samples_path};
      m.outputs = {path};
      m.write(manifest_path(manifest_flag, path));
      out << format_summary(summary);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace botledger
