#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "attnamer/commands.hpp"
#include "attnamer/knowledge_file.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace attnamer;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "attnamer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("attnamer_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string record_line(const std::string& id, float a, float b) {
  nlohmann::json j;
  j["face_id"] = id;
  j["voice_id"] = id;
  j["face"] = {a, b};
  j["voice"] = {b, a};
  return j.dump() + "\n";
}

std::vector<std::string> synth_args(const TempDir& dir, std::vector<std::string> extra) {
  std::vector<std::string> a{"synth", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl",
                             "--d-face", "32", "--d-voice", "32", "--seed", "5"};
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run config round-trips through JSON") {
  RunConfig c;
  c.subcommand = "bench";
  c.knowledge = "/tmp/k.jsonl";
  c.csv = "out.csv";
  c.tau = 0.3f;
  c.factor = 6;
  c.methods = {Method::Tfs, Method::Lwf};
  c.grid_ids = {5, 10};
  c.seed = 123456789012345ULL;
  c.inclusive_setup = false;
  c.noise = 0.05;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(back == c);
  CHECK(to_json(back) == to_json(c));
  CHECK(run_config_from_json(to_json(RunConfig{})) == RunConfig{});
  CHECK_THROWS_AS(run_config_from_json("{\"subcommand\": 3}"), Error);
}

TEST_CASE("noiseless two-ID evaluation is perfect") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {"--ids", "2"})).code == 0);
  const Run r = cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl",
                     "--csv", dir / "eval.csv"});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["sna"] == 100.0);
  CHECK(report["mpa"] == 100.0);
  CHECK(report["config"]["tau"].get<double>() == doctest::Approx(0.25));
  const std::string csv = slurp(dir / "eval.csv");
  CHECK(csv.rfind(std::string(eval_csv_header()), 0) == 0);
  REQUIRE(cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl", "--csv",
               dir / "eval.csv"})
              .code == 0);
  const std::string twice = slurp(dir / "eval.csv");
  CHECK(std::count(twice.begin(), twice.end(), '\n') == 3);
}

TEST_CASE("factor 6 over 18 windows gives 3 spans") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {"--ids", "2", "--queries", "9", "--distractors", "0"})).code == 0);
  const Run r = cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl",
                     "--factor", "6"});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["windows"] == 18);
  CHECK(report["spans"] == 3);
}

TEST_CASE("gradient methods report epochs") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {"--ids", "3", "--nonmatched", "0", "--distractors", "0"})).code == 0);
  for (const std::string method : {"tfs", "lwf"}) {
    const Run r = cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl",
                       "--method", method, "--lwf-step", "2", "--setup-accounting", "exclusive"});
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(r.out);
    CHECK(report["method"] == method);
    CHECK(report["epochs"].get<int>() > 0);
  }
  const Run att = cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl"});
  CHECK_FALSE(nlohmann::json::parse(att.out).contains("epochs"));
}

TEST_CASE("predict prints one line per window or span") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {"--ids", "2", "--queries", "3", "--distractors", "1"})).code == 0);
  const Run r = cli({"predict", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 12);
  const Run spans = cli({"predict", "--knowledge", dir / "k.jsonl", "--manifest", dir / "m.jsonl",
                         "--factor", "4"});
  CHECK(std::count(spans.out.begin(), spans.out.end(), '\n') == 3);
}

TEST_CASE("enroll appends atomically") {
  TempDir dir;
  const std::string store = dir / "store.jsonl";
  std::string two;
  for (int s = 0; s < 2; ++s) two += record_line("A", 1, 0) + record_line("B", 0, 1);
  write(dir / "two.jsonl", two);

  Run r = cli({"enroll", "--knowledge", store, "--additions", dir / "two.jsonl"});
  REQUIRE(r.code == 0);
  CHECK(load_knowledge(store).num_ids() == 2);

  std::string five;
  for (int s = 0; s < 5; ++s) five += record_line("C", 1, static_cast<float>(s + 1));
  write(dir / "five.jsonl", five);
  r = cli({"enroll", "--knowledge", store, "--additions", dir / "five.jsonl"});
  REQUIRE(r.code == 0);
  const auto grown = load_knowledge(store);
  CHECK(grown.num_ids() == 3);
  CHECK(grown.num_shots() == 9);
  CHECK(r.out.find("C\t5") != std::string::npos);
  CHECK(r.out.find(std::to_string(parameter_count(grown))) != std::string::npos);

  const std::string before = slurp(store);
  write(dir / "bad.jsonl", record_line("D", 1, 0) + "{not json\n");
  r = cli({"enroll", "--knowledge", store, "--additions", dir / "bad.jsonl"});
  CHECK(r.code == kExitParse);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(slurp(store) == before);
  CHECK_FALSE(fs::exists(store + ".tmp"));
}

TEST_CASE("empty store exits 3") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {})).code == 0);
  write(dir / "empty.jsonl", "");
  const Run r = cli({"eval", "--knowledge", dir / "empty.jsonl", "--manifest", dir / "m.jsonl"});
  CHECK(r.code == kExitEmptyStore);
  CHECK(r.out.empty());
}

TEST_CASE("manifest errors exit 2") {
  TempDir dir;
  REQUIRE(cli(synth_args(dir, {})).code == 0);
  write(dir / "bad_manifest.jsonl", "{\"window\": 0}\n");
  const Run r = cli({"eval", "--knowledge", dir / "k.jsonl", "--manifest", dir / "bad_manifest.jsonl"});
  CHECK(r.code == kExitParse);
}

TEST_CASE("bench writes one row per cell and method") {
  TempDir dir;
  const Run r = cli({"bench", "--grid-ids", "5", "--grid-shots", "5", "--method", "att", "--csv",
                     dir / "bench.csv", "--seed", "1"});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
  CHECK(slurp(dir / "bench.csv") == r.out);
  CHECK(r.out.rfind(std::string(bench_csv_header()), 0) == 0);
}

TEST_CASE("bench cell failures exit 4 and keep the partial CSV") {
  TempDir dir;
  // Ten IDs cannot keep pairwise cosine <= 0.8 in one dimension.
  const Run r = cli({"bench", "--grid-ids", "1,10", "--grid-shots", "2", "--method", "att",
                     "--d-face", "1", "--d-voice", "1", "--csv", dir / "bench.csv"});
  CHECK(r.code == kExitBenchCell);
  const std::string csv = slurp(dir / "bench.csv");
  CHECK(csv.find("att,1,2,2,") != std::string::npos);
  CHECK(csv.find("error:") != std::string::npos);
}

TEST_CASE("ATTNAMER_SEED is the seed fallback") {
  TempDir dir;
  REQUIRE(cli({"synth", "--knowledge", dir / "a.jsonl", "--manifest", dir / "a.m", "--d-face", "8",
               "--d-voice", "8", "--seed", "77", "--noise", "0.1"})
              .code == 0);
  ::setenv("ATTNAMER_SEED", "77", 1);
  const Run r = cli({"synth", "--knowledge", dir / "b.jsonl", "--manifest", dir / "b.m",
                     "--d-face", "8", "--d-voice", "8", "--noise", "0.1"});
  ::unsetenv("ATTNAMER_SEED");
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(slurp(dir / "a.m") == slurp(dir / "b.m"));
}

TEST_CASE("argument errors") {
  CHECK(cli({}).code != 0);
  CHECK(cli({"eval", "--knowledge", "x", "--manifest", "y", "--method", "cnn"}).code != 0);
  CHECK(cli({"bench", "--seed", "seven", "--grid-ids", "5"}).code != 0);
}

}  // TEST_SUITE
