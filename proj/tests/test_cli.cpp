#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "botledger/cli.hpp"
#include "botledger/ingestion.hpp"

using namespace botledger;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("botledger_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json manifest(const std::string& path) { return nlohmann::json::parse(read_file(path)); }

std::string output_sha(const nlohmann::json& m, std::size_t i = 0) { return m.at("outputs").at(i).at("sha256"); }

void synth_small(const TempDir& d, const std::string& sub = "data", const std::string& seed = "5") {
  const auto r = cli({"synth", "--out-dir", d / sub, "--bots", "6", "--normals", "12", "--days", "3", "--seed", seed});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"dance"}).code == 1);
  CHECK(cli({"synth", "--frobnicate"}).code == 1);
  const auto r = cli({"train", "--epochs", "many"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--epochs") != std::string::npos);
  CHECK(cli({"train"}).code == 1);  // --samples missing
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("synth is deterministic and its manifest matches the files") {
  TempDir d;
  synth_small(d, "a");
  synth_small(d, "b");
  const auto ma = manifest(d / "a/manifest.json");
  const auto mb = manifest(d / "b/manifest.json");
  for (std::size_t i = 0; i < 3; ++i) CHECK(output_sha(ma, i) == output_sha(mb, i));
  for (const auto& o : ma.at("outputs")) CHECK(o.at("sha256") == sha256_file(o.at("path").get<std::string>()));
  CHECK(ma.at("command") == "synth");
  CHECK(ma.at("config").at("bots") == 6);
  CHECK(ma.at("seeds").at("seed") == 5);
  CHECK(ma.contains("started_at"));
  synth_small(d, "c", "6");
  CHECK(output_sha(manifest(d / "c/manifest.json")) != output_sha(ma));
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("featurize, train, score and report compose") {
  TempDir d;
  synth_small(d);
  auto r = cli({"featurize", "--logs", d / "data/status_log.csv", "--labels", d / "data/labels.csv", "--out",
                d / "samples.bin"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "samples.bin.elimination.txt"));
  CHECK(fs::exists(d / "samples.bin.manifest.json"));

  r = cli({"train", "--samples", d / "samples.bin", "--out", d / "model.bin", "--epochs", "2", "--hidden-dim", "6"});
  REQUIRE(r.code == 0);
  const auto mt = manifest(d / "model.bin.manifest.json");
  CHECK(mt.at("config").at("epochs") == 2);
  CHECK(mt.at("config").at("hidden-dim") == 6);
  CHECK(mt.at("inputs").at(0).at("sha256") == sha256_file(d / "samples.bin"));

  // scoring needs no labels
  r = cli({"score", "--model", d / "model.bin", "--logs", d / "data/status_log.csv", "--out", d / "ranked.csv"});
  REQUIRE(r.code == 0);
  const auto text = read_file(d / "ranked.csv");
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "character_id,probability,label");
  double prev = 2.0;
  std::string prev_id;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double p = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const std::string id = line.substr(0, c1);
    CHECK((p < prev || (p == prev && id > prev_id)));
    CHECK(line.substr(c2 + 1).empty());
    prev = p;
    prev_id = id;
  }
  CHECK(rows == 18);

  r = cli({"score", "--model", d / "model.bin", "--logs", d / "data/status_log.csv", "--labels",
           d / "data/labels.csv", "--out", d / "ranked_labeled.csv"});
  REQUIRE(r.code == 0);
  CHECK(read_file(d / "ranked_labeled.csv").find(",bot\n") != std::string::npos);

  r = cli({"report", "--samples", d / "samples.bin", "--out", d / "summary.txt"});
  REQUIRE(r.code == 0);
  CHECK(read_file(d / "summary.txt").find("Total Cash") != std::string::npos);
  r = cli({"report", "--samples", d / "samples.bin", "--out", d / "summary.json"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(read_file(d / "summary.json")).is_object());
}

TEST_CASE("crossval prints fold rows and an average") {
  TempDir d;
  synth_small(d);
  const auto r = cli({"crossval", "--logs", d / "data/status_log.csv", "--labels", d / "data/labels.csv", "--k",
                      "3", "--epochs", "1", "--hidden-dim", "4", "--out", d / "cv.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Fold 3") != std::string::npos);
  CHECK(r.out.find("Average") != std::string::npos);
  const auto j = nlohmann::json::parse(read_file(d / "cv.json"));
  CHECK(j.at("rows").size() == 4);
  CHECK(cli({"crossval", "--logs", d / "data/status_log.csv", "--labels", d / "data/labels.csv", "--k", "30",
             "--epochs", "1", "--out", d / "cv2.json"})
            .code == 2);
}

TEST_CASE("config precedence: flags over config file over defaults") {
  TempDir d;
  synth_small(d);
  REQUIRE(cli({"featurize", "--logs", d / "data/status_log.csv", "--labels", d / "data/labels.csv", "--out",
               d / "s.bin"})
              .code == 0);
  write_file(d / "cfg.json", R"({"epochs": 2, "hidden-dim": 3, "seed": 11})");
  REQUIRE(cli({"train", "--config", d / "cfg.json", "--samples", d / "s.bin", "--out", d / "m1.bin", "--epochs", "1"})
              .code == 0);
  auto m = manifest(d / "m1.bin.manifest.json");
  CHECK(m.at("config").at("epochs") == 1);
  CHECK(m.at("config").at("hidden-dim") == 3);
  CHECK(m.at("seeds").at("seed") == 11);
  CHECK(m.at("seeds").at("seed_source") == "config");

  // rerunning from the manifest reproduces the model
  REQUIRE(cli({"train", "--config", d / "m1.bin.manifest.json", "--manifest", d / "m1b.json"}).code == 0);
  CHECK(output_sha(manifest(d / "m1b.json")) == output_sha(m));

  ::setenv("BOTLEDGER_SEED", "21", 1);
  REQUIRE(cli({"train", "--samples", d / "s.bin", "--out", d / "m2.bin", "--epochs", "1"}).code == 0);
  m = manifest(d / "m2.bin.manifest.json");
  CHECK(m.at("seeds").at("seed") == 21);
  CHECK(m.at("seeds").at("seed_source") == "env");
  REQUIRE(cli({"train", "--samples", d / "s.bin", "--out", d / "m3.bin", "--epochs", "1", "--seed", "4"}).code == 0);
  CHECK(manifest(d / "m3.bin.manifest.json").at("seeds").at("seed_source") == "cli");
  ::setenv("BOTLEDGER_SEED", "x7", 1);
  CHECK(cli({"train", "--samples", d / "s.bin", "--out", d / "m4.bin", "--epochs", "1"}).code == 1);
  ::unsetenv("BOTLEDGER_SEED");
  CHECK(manifest(d / "m1.bin.manifest.json").at("config").at("epochs") == 1);
}

TEST_CASE("data and format problems exit with 2") {
  TempDir d;
  CHECK(cli({"report", "--samples", d / "missing.bin", "--out", d / "x.txt"}).code == 2);
  write_file(d / "junk.bin", "BOTWxxxx");
  CHECK(cli({"score", "--model", d / "junk.bin", "--logs", d / "none.csv", "--out", d / "r.csv"}).code == 2);
  write_file(d / "bad.csv", "character_id,timestamp\nc1,1\n");
  write_file(d / "labels.csv", "character_id,label\nc1,bot\n");
  CHECK(cli({"featurize", "--logs", d / "bad.csv", "--labels", d / "labels.csv", "--out", d / "s.bin"}).code == 2);
  CHECK(cli({"featurize", "--logs", d / "bad.csv", "--labels", d / "labels.csv", "--out", d / "s.bin",
             "--scaling-scope", "global"})
            .code == 1);
  write_file(d / "cfg.json", "{not json");
  CHECK(cli({"train", "--config", d / "cfg.json"}).code == 2);
}
