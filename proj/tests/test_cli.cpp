#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "genrec/common.hpp"
#include "test_util.hpp"

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

RunResult run_cli(const std::string& args, const testutil::TempDir& dir) {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = std::string(GENREC_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = genrec::read_file(out);
  r.err = genrec::read_file(err);
  return r;
}

std::string last_line(const std::string& s) {
  auto lines = genrec::split(s, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines.empty() ? "" : lines.back();
}

const char* kTinyConfig = R"([synth]
items = 20
users = 40
[embed]
semantic_dim = 16
behavior_dim = 16
behavior_epochs = 3
[index]
k = 4
depth_s = 2
depth_b = 2
n_init = 1
[model]
d_model = 16
n_layers = 1
n_heads = 2
context_len = 160
proj_dim_s = 16
proj_dim_b = 16
[train]
epochs = 1
val_users = 5
[anneal]
epochs = 1
val_users = 5
[eval]
max_users = 10
)";

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  testutil::TempDir dir("cli_usage");
  auto r = run_cli("", dir);
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli("recommend --workdir " + dir.file("w"), dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(nlohmann::json::parse(last_line(r.err))["error"], "usage");
}

TEST(Cli, MissingArtifactsAreStructuredErrors) {
  testutil::TempDir dir("cli_missing");
  const auto r = run_cli("index --workdir " + dir.file("w"), dir);
  EXPECT_EQ(r.exit_code, 1);
  const auto j = nlohmann::json::parse(last_line(r.err));
  EXPECT_EQ(j["error"], "missing_artifact");
  EXPECT_NE(j["message"].get<std::string>().find("genrec embed"), std::string::npos);
}

TEST(Cli, LockedWorkdirIsRefused) {
  testutil::TempDir dir("cli_lock");
  std::filesystem::create_directories(dir.file("w"));
  std::ofstream(dir.file("w/.lock")) << "1\n";
  const auto r = run_cli("synth --workdir " + dir.file("w"), dir);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(nlohmann::json::parse(last_line(r.err))["error"], "workdir_locked");
}

TEST(Cli, BadConfigIsReported) {
  testutil::TempDir dir("cli_cfg");
  std::ofstream(dir.file("bad.ini")) << "[model]\nfoo = 1\n";
  const auto r = run_cli("synth --workdir " + dir.file("w") + " --config " + dir.file("bad.ini"), dir);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(nlohmann::json::parse(last_line(r.err))["error"], "invalid_config");
}

TEST(Cli, TinyPipelineEndToEnd) {
  testutil::TempDir dir("cli_e2e");
  std::ofstream(dir.file("tiny.ini")) << kTinyConfig;
  const std::string common = " --workdir " + dir.file("w") + " --config " + dir.file("tiny.ini") + " --seed 3";
  for (const char* cmd : {"synth", "ingest", "embed", "index", "train-initial", "train-anneal"}) {
    const auto r = run_cli(std::string(cmd) + common, dir);
    ASSERT_EQ(r.exit_code, 0) << cmd << ": " << r.err;
  }
  for (const char* f : {"corpus/splits.jsonl", "embeddings/semantic.bin", "index/index.jsonl",
                        "checkpoints/initial.ckpt", "checkpoints/anneal.ckpt", "reports/train_initial.jsonl"})
    EXPECT_TRUE(genrec::file_exists(dir.file(std::string("w/") + f))) << f;

  const auto rec = run_cli("recommend --user u0000 --k 3" + common, dir);
  ASSERT_EQ(rec.exit_code, 0) << rec.err;
  const auto lines = genrec::split(rec.out, '\n');
  ASSERT_GE(lines.size(), 3u);
  const auto fields = genrec::split(lines[0], '\t');
  ASSERT_EQ(fields.size(), 4u);
  EXPECT_EQ(fields[0], "u0000");
  EXPECT_EQ(fields[1], "1");

  const auto unknown = run_cli("recommend --user nobody" + common, dir);
  EXPECT_EQ(unknown.exit_code, 1);
  EXPECT_EQ(nlohmann::json::parse(last_line(unknown.err))["error"], "unknown_user");

  const auto ev = run_cli("evaluate" + common, dir);
  ASSERT_EQ(ev.exit_code, 0) << ev.err;
  const auto first = nlohmann::json::parse(genrec::split(ev.out, '\n')[0]);
  EXPECT_EQ(first["metric"], "recall@5");
  EXPECT_EQ(first["users"], 10);
  EXPECT_TRUE(genrec::file_exists(dir.file("w/reports/metrics.jsonl")));
  EXPECT_FALSE(genrec::file_exists(dir.file("w/.lock")));
}
