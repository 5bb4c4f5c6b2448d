#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "uavtrack/config.hpp"
#include "uavtrack/data.hpp"

using namespace uavtrack;
namespace fs = std::filesystem;

namespace {

std::string error_of(const nlohmann::json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uavtrack_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(UAVTRACK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST(Config, MinimalConfigFillsDefaults) {
  const RunConfig c = parse_config(nlohmann::json::object());
  EXPECT_EQ(c.model.chunk_len, 25);
  EXPECT_EQ(c.eval.criteria.tolerance, 15);
  EXPECT_EQ(c.eval.criteria.horizon, 500);
  EXPECT_EQ(c.episode.horizon, 500);
  EXPECT_EQ(c.train.clip_norm, 0.8);
  EXPECT_EQ(c.dataset_path(), fs::path("runs/default/dataset"));
}

TEST(Config, OverridesNestedValues) {
  const RunConfig c = parse_config(
      nlohmann::json::parse(R"({"model": {"d_model": 32, "heads": 2}, "train": {"lr_peak": 1}, "seed": 9})"));
  EXPECT_EQ(c.model.d_model, 32);
  EXPECT_EQ(c.train.lr_peak, 1.0);  // integer accepted where a number is expected
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RejectsInvalidValuesNamingTheKey) {
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"model": {"lambda_pos": -1}})")).find("lambda_pos"),
            std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"modle": {}})")).find("unknown key 'modle'"), std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"train": {"warmup": 5}})")).find("'train.warmup'"),
            std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"model": {"d_model": "big"}})")).find("'model.d_model' must be integer"),
            std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"seed": -3})")).find("non-negative"), std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"eval": {"map_split": "both"}})")).find("eval.map_split"),
            std::string::npos);
  EXPECT_NE(error_of(nlohmann::json::parse(R"({"eval": {"criteria": {"tolerance": 0}}})")).find("eval.criteria"),
            std::string::npos);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/run.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.json"), std::string::npos);
  }
}

TEST(Config, OutputDirFromEnvironment) {
  const fs::path dir = scratch("env");
  write_file(dir / "c.json", R"({"output_dir": "a"})");
  setenv("UAVTRACK_OUTPUT_DIR", "elsewhere", 1);
  EXPECT_EQ(load_config(dir / "c.json").output_dir, "elsewhere");
  unsetenv("UAVTRACK_OUTPUT_DIR");
  EXPECT_EQ(load_config(dir / "c.json").output_dir, "a");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("fly"), 2);
  EXPECT_EQ(run_cli("collect --split sideways"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("eval --config /nonexistent/run.json"), 1);
  EXPECT_EQ(run_cli("gradcheck"), 0);
}

TEST(Cli, CollectTrainEvalRoundTrip) {
  const fs::path dir = scratch("pipeline");
  write_file(dir / "c.json", R"({"output_dir": ")" + (dir / "out").string() + R"(",
    "model": {"d_model": 16, "heads": 2, "layers": 1},
    "train": {"warmup_steps": 2, "total_steps": 4, "batch_size": 2},
    "episode": {"horizon": 60},
    "eval": {"criteria": {"horizon": 40}}})");
  const std::string cfg = "--config " + (dir / "c.json").string();
  ASSERT_EQ(run_cli("collect --episodes 3 --seed 7 " + cfg), 0);
  const auto root = dir / "out" / "dataset";
  for (const char* f : {"episodes.jsonl", "tasks.jsonl", "info.json", "episodes_stats.jsonl"})
    EXPECT_TRUE(fs::exists(root / "meta" / f)) << f;
  EXPECT_EQ(data::load_dataset(root).size(), 3u);
  EXPECT_EQ(run_cli("collect --episodes 3 " + cfg), 1);  // refuses to overwrite
  EXPECT_EQ(run_cli("collect --episodes 3 --force " + cfg), 0);

  ASSERT_EQ(run_cli("train --val-fraction 0.34 " + cfg), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "model.utck"));
  ASSERT_EQ(run_cli("eval --episodes 2 --split unseen " + cfg), 0);
  std::ifstream csv(dir / "out" / "eval" / "model_unseen_seen" / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.substr(0, 24), "scenario,class,tier,map_");
  EXPECT_EQ(run_cli("report " + (dir / "out" / "eval" / "model_unseen_seen").string()), 0);
  EXPECT_EQ(run_cli("attn-export " + cfg), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "attention.csv"));
}

TEST(Cli, CollectIsReproducible) {
  const fs::path dir = scratch("repro");
  for (const char* sub : {"a", "b"}) {
    write_file(dir / (std::string(sub) + ".json"),
               R"({"output_dir": ")" + (dir / sub).string() + R"(", "episode": {"horizon": 30}})");
    ASSERT_EQ(run_cli("collect --episodes 2 --seed 5 --config " + (dir / (std::string(sub) + ".json")).string()), 0);
  }
  const auto a = data::load_dataset(dir / "a" / "dataset");
  const auto b = data::load_dataset(dir / "b" / "dataset");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(data::encode_episode(a[i]), data::encode_episode(b[i]));
}
