#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mutual/scenario.hpp"
#include "mutual/schema.hpp"
#include "mutual/transcript.hpp"

using namespace mutual;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("mutual_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST(Cli, GenScenariosEachHaveOneSharedItem) {
  TempDir d("gen");
  const CliRun r = cli({"gen-scenarios", "--n", "200", "--seed", "7", "--out", d.path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Schema schema = default_schema();
  const auto scenarios = read_scenarios(d / "scenarios.jsonl", schema);
  ASSERT_EQ(scenarios.size(), 200u);
  for (const auto& s : scenarios) EXPECT_EQ(shared_items(s).size(), 1u) << s.id;
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m["runs"][0]["command"], "gen-scenarios");
  EXPECT_EQ(m["runs"][0]["seed"], 7);
}

TEST(Cli, SelfplayReproducibleAndJobIndependent) {
  TempDir d("sp");
  const std::string a = d / "a", b = d / "b";
  ASSERT_EQ(cli({"selfplay", "--n", "12", "--seed", "4", "--out", a}).code, 0);
  ASSERT_EQ(cli({"selfplay", "--n", "12", "--seed", "4", "--jobs", "3", "--out", b}).code, 0);
  const std::string ta = slurp(fs::path(a) / "transcripts.jsonl");
  EXPECT_FALSE(ta.empty());
  EXPECT_EQ(ta, slurp(fs::path(b) / "transcripts.jsonl"));
  const CliRun r = cli({"selfplay", "--n", "12", "--seed", "5", "--out", b});
  EXPECT_NE(ta, slurp(fs::path(b) / "transcripts.jsonl"));
  EXPECT_NE(r.out.find("success rate"), std::string::npos);
}

TEST(Cli, PipelineClosure) {
  TempDir d("pipe");
  const std::string out = d.path.string();
  const std::vector<std::string> common{"--schema", "small", "--seed", "2", "--out", out};
  auto with = [&](std::vector<std::string> v) {
    v.insert(v.end(), common.begin(), common.end());
    return v;
  };
  ASSERT_EQ(cli(with({"gen-scenarios", "--n", "30"})).code, 0);
  ASSERT_EQ(cli(with({"selfplay", "--scenarios", d / "scenarios.jsonl", "--n", "30"})).code, 0);
  fs::rename(d / "transcripts.jsonl", d / "rule.jsonl");
  CliRun r = cli(with({"train", "--in", d / "rule.jsonl", "--hidden", "8", "--epochs", "2", "--min-epochs", "1"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "model.json"));
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);  // two epochs and a summary
  r = cli(with({"selfplay", "--a", "dynonet", "--b", "rule", "--model", d / "model.json", "--scenarios",
                d / "scenarios.jsonl", "--n", "5"}));
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli(with({"selfplay", "--a", "replay", "--b", "replay", "--replay", d / "rule.jsonl", "--n", "5"}));
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli(with({"eval", "--in", "rule=" + (d / "rule.jsonl"), "--in", d / "transcripts.jsonl", "--model",
                d / "model.json"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rule"), std::string::npos);
  EXPECT_NE(r.out.find("transcripts"), std::string::npos);
  const json stats = json::parse(slurp(d / "stats.json"));
  EXPECT_TRUE(stats["rule"].contains("C"));
  r = cli(with({"analyze", "--in", d / "rule.jsonl"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("group,count", 0), 0u);
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m["runs"].size(), 7u);
}

TEST(Cli, ReplayReproducesRecordedUtterances) {
  TempDir d("replay");
  ASSERT_EQ(cli({"selfplay", "--n", "6", "--out", d / "rec"}).code, 0);
  ASSERT_EQ(cli({"selfplay", "--a", "replay", "--b", "replay", "--replay", d / "rec/transcripts.jsonl", "--out",
                 d / "rep"})
                .code,
            0);
  const Schema schema = default_schema();
  const auto rec = read_transcripts(d / "rec/transcripts.jsonl", schema);
  const auto rep = read_transcripts(d / "rep/transcripts.jsonl", schema);
  ASSERT_EQ(rec.size(), rep.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    std::vector<std::string> a, b;
    for (const auto& e : rec[i].events)
      if (e.kind == EventKind::utterance) a.push_back(e.text);
    for (const auto& e : rep[i].events)
      if (e.kind == EventKind::utterance) b.push_back(e.text);
    EXPECT_EQ(a, b) << i;
  }
}

TEST(Cli, ExitCodes) {
  TempDir d("codes");
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"gen-scenarios", "--n", "lots"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"selfplay", "--clock", "sundial", "--n", "1", "--out", d.path.string()}).code, 1);
  EXPECT_EQ(cli({"selfplay", "--a", "dynonet", "--n", "1", "--out", d.path.string()}).code, 1);  // no model
  EXPECT_EQ(cli({"eval", "--in", d / "missing.jsonl"}).code, 2);
  EXPECT_EQ(cli({"--schema", d / "missing.json", "gen-scenarios"}).code, 2);
  std::ofstream(d / "bad.jsonl") << "{\"scenario_id\": 3}\nnot json\n";
  const CliRun r = cli({"eval", "--in", d / "bad.jsonl"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data error"), std::string::npos);
}

TEST(Cli, ConfigFileBelowFlags) {
  TempDir d("config");
  std::ofstream(d / "run.toml") << "seed = 11\n";
  ASSERT_EQ(cli({"--config", d / "run.toml", "gen-scenarios", "--n", "3", "--out", d / "x"}).code, 0);
  ASSERT_EQ(cli({"--config", d / "run.toml", "gen-scenarios", "--n", "3", "--seed", "12", "--out", d / "y"}).code, 0);
  ASSERT_EQ(cli({"gen-scenarios", "--n", "3", "--seed", "11", "--out", d / "z"}).code, 0);
  const auto x = slurp(d / "x/scenarios.jsonl"), y = slurp(d / "y/scenarios.jsonl"), z = slurp(d / "z/scenarios.jsonl");
  EXPECT_EQ(x, z);
  EXPECT_NE(x, y);
}

TEST(Cli, ChatIsScriptableOnTheSimulatedClock) {
  TempDir d("chat");
  const std::string script = "hi anyone like chess?\n/kb\n/select 0\n/select 1\n/quit\n";
  const CliRun a = cli({"chat", "--seed", "3", "--side", "A", "--out", d / "a"}, script);
  const CliRun b = cli({"chat", "--seed", "3", "--side", "A", "--out", d / "b"}, script);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("dialogue over"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "a/chat.jsonl"));
  const auto t = read_transcripts(d / "a/chat.jsonl", default_schema());
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].agent_kinds[0], "human");
  // Accepted human selections respect the throttle; a rejected one prints a wait.
  std::optional<std::int64_t> prev;
  std::size_t accepted = 0;
  for (const auto& e : t[0].events) {
    if (e.kind != EventKind::select || e.agent != Side::A) continue;
    if (prev) {
      EXPECT_GE(e.time_ms - *prev, 10'000);
    }
    prev = e.time_ms;
    ++accepted;
  }
  EXPECT_EQ(accepted + (a.out.find("too soon") != std::string::npos ? 1 : 0), 2u);
}
