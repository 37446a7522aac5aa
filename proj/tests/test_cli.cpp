#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "grace/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "grace_cli_test";

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path log = kRoot / "last_output.txt";
  const std::string cmd = std::string(GRACE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string write_config(const std::string& name, const std::string& body) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << body;
  return p.string();
}

std::string toy_config(const fs::path& out) {
  return R"({"seed": 3, "paths": {"out": ")" + out.string() + R"("},
    "gen": {"n_users": 60, "n_items": 40, "n_product_types": 5},
    "model": {"model_dim": 16, "ffn_width": 16, "head_dim": 8, "layers_enc": 1, "layers_dec": 1},
    "train": {"steps": 20, "batch_size": 4},
    "eval": {"max_users": 10},
    "sweep": {"window": [3, 10], "top_n": [1, 2], "beam": [10, 20, 40]}})";
}

}  // namespace

TEST_CASE("full pipeline on a toy config") {
  const fs::path out = kRoot / "toy";
  fs::remove_all(out);
  const std::string cfg = write_config("toy.json", toy_config(out));
  const std::string c = "--config " + cfg;

  auto r = run(c + " gen");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("#Item") != std::string::npos);
  CHECK(fs::exists(out / "catalog.jsonl"));
  CHECK(fs::exists(out / "interactions.jsonl"));

  r = run(c + " tokenize");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("collisions=0") != std::string::npos);
  for (auto f : {"vocab.json", "semantic_ids.jsonl", "tokenized.jsonl"}) CHECK(fs::exists(out / f));
  const std::string tok1 = grace::io::read_text((out / "tokenized.jsonl").string());
  REQUIRE(run(c + " tokenize").code == 0);
  CHECK(grace::io::read_text((out / "tokenized.jsonl").string()) == tok1);

  r = run(c + " eval");
  CHECK(r.code != 0);
  CHECK(r.out.find("checkpoint") != std::string::npos);

  REQUIRE(run(c + " train").code == 0);
  CHECK(fs::exists(out / "checkpoint.json"));
  CHECK(fs::exists(out / "loss_curve.csv"));

  for (auto task : {"target_behavior", "behavior_specific", "behavior_item"}) {
    r = run(c + " eval --task " + task);
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(grace::io::read_text((out / "report.json").string()));
    CHECK(report["task"] == task);
    CHECK(report["K"] == nlohmann::json::array({5, 10}));
    CHECK(report["hr"]["10"].get<double>() >= report["hr"]["5"].get<double>());
  }
  CHECK(fs::exists(out / "predictions.jsonl"));

  r = run(c + " sweep --axis beam");
  REQUIRE(r.code == 0);
  const std::string sweep = grace::io::read_text((out / "sweep_beam.csv").string());
  CHECK(sweep.rfind("beam,hr@5,hr@10,ndcg@5,ndcg@10\n", 0) == 0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 4);
  REQUIRE(run(c + " sweep --axis w").code == 0);
  CHECK(fs::exists(out / "sweep_w.csv"));
  CHECK(run(c + " sweep --axis depth").code == 1);

  r = run(c + " heatmap");
  REQUIRE(r.code == 0);
  CHECK(grace::io::read_text((out / "heatmap.csv").string()).rfind("product_type,", 0) == 0);
}

TEST_CASE("gen is byte-identical per seed and honors --seed") {
  const fs::path a = kRoot / "seed_a", b = kRoot / "seed_b", d = kRoot / "seed_c";
  const std::string cfg = write_config("seed.json", toy_config(a));
  REQUIRE(run("--config " + cfg + " gen").code == 0);
  REQUIRE(run("--config " + cfg + " --out " + b.string() + " gen").code == 0);
  REQUIRE(run("--config " + cfg + " --out " + d.string() + " --seed 4 gen").code == 0);
  using grace::io::read_text;
  CHECK(read_text((a / "interactions.jsonl").string()) == read_text((b / "interactions.jsonl").string()));
  CHECK(read_text((a / "catalog.jsonl").string()) == read_text((b / "catalog.jsonl").string()));
  CHECK(read_text((a / "interactions.jsonl").string()) != read_text((d / "interactions.jsonl").string()));
}

TEST_CASE("validation failures exit 1 before writing") {
  const fs::path out = kRoot / "invalid";
  fs::remove_all(out);
  const std::string cfg = write_config("zero.json", R"({"paths": {"out": ")" + out.string() + R"("}, "gen": {"n_users": 0}})");
  auto r = run("--config " + cfg + " gen");
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(out / "catalog.jsonl"));

  const std::string unknown = write_config("unknown.json", R"({"gen": {"users": 5}})");
  r = run("--config " + unknown + " gen");
  CHECK(r.code == 1);
  CHECK(r.out.find("gen.users") != std::string::npos);

  CHECK(run("frobnicate").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("corrupted input reports the line number") {
  const fs::path out = kRoot / "corrupt";
  fs::remove_all(out);
  const std::string cfg = write_config("corrupt.json", toy_config(out));
  REQUIRE(run("--config " + cfg + " gen").code == 0);
  {
    std::ofstream f(out / "interactions.jsonl", std::ios::app);
    f << "{\"user_id\": \"x\", oops\n";
  }
  const std::string text = grace::io::read_text((out / "interactions.jsonl").string());
  const auto lines = std::count(text.begin(), text.end(), '\n');
  auto r = run("--config " + cfg + " tokenize");
  CHECK(r.code != 0);
  CHECK(r.out.find(":" + std::to_string(lines) + ":") != std::string::npos);

  const fs::path missing = kRoot / "missing";
  fs::remove_all(missing);
  const std::string mcfg = write_config("missing.json", toy_config(missing));
  CHECK(run("--config " + mcfg + " tokenize").code == 2);
}

TEST_CASE("cost command prints the table and follows overrides") {
  const fs::path out = kRoot / "cost";
  auto r = run("--out " + out.string() + " cost");
  REQUIRE(r.code == 0);
  for (auto s : {"63,504", "252,004", "1,004,004", "43,092", "144,576", "522,042", "-32%", "-43%", "-48%"})
    CHECK(r.out.find(s) != std::string::npos);
  CHECK(fs::exists(out / "cost_table.csv"));
  const std::string cfg = write_config("cost.json", R"({"cost": {"window": 20, "lengths": [50]}})");
  r = run("--config " + cfg + " --out " + out.string() + " cost");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("45,612") != std::string::npos);  // 252 * (171 + 10)
}
