#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "keydesc/cli.hpp"
#include "support/stub_server.hpp"

namespace fs = std::filesystem;
using namespace keydesc;

namespace {

struct RunResult {
  int code;
  std::string out, err;
  nlohmann::json summary() const { return nlohmann::json::parse(out); }
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "keydesc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<nlohmann::json> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("keydesc_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
  const std::string sample = KEYDESC_SAMPLE_DIR;
  std::string instances = sample + "/instances.jsonl";
  std::string hyps = sample + "/hypotheses.jsonl";
};

}  // namespace

TEST_F(CliTest, RankWritesOneLinePerInstanceInOrder) {
  for (const std::string method : {"oracle", "tfidf", "seq", "neural"}) {
    const auto r = run_cli({"rank", "--method", method, "--k", "2", "--in", instances, "--out", path("ranked.jsonl")});
    ASSERT_EQ(r.code, 0) << method << ": " << r.err;
    const auto rows = read_lines(path("ranked.jsonl"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0]["entity"], "Kenny Jay");
    EXPECT_EQ(rows[2]["entity"], "Ada Lovelace");
    for (const auto& row : rows) EXPECT_EQ(row["order"].size(), 2u);
    EXPECT_EQ(r.summary()["instances"], 3);
  }
  const auto oracle = run_cli({"rank", "--method", "oracle", "--in", instances, "--out", path("o.jsonl")});
  EXPECT_DOUBLE_EQ(oracle.summary()["mean_recall_at_k"].get<double>(), 1.0);
}

TEST_F(CliTest, DenseAndSeqModelsRoundTripThroughFiles) {
  ASSERT_EQ(run_cli({"dense-train", "--in", instances, "--out", path("dense.json"), "--batch-size", "3", "--epochs", "2",
                     "--embed-dim", "16", "--hash-dim", "256"}).code, 0);
  auto r = run_cli({"rank", "--method", "dense", "--model", path("dense.json"), "--in", instances, "--out", path("d.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_lines(path("d.jsonl")).size(), 3u);

  r = run_cli({"seq-fit", "--in", instances, "--k", "2", "--betas", "0,1", "--out", path("seq.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["grid_points"], 2);
  r = run_cli({"generate", "--instances", instances, "--model", path("seq.json"), "--k", "2", "--out", path("g.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_lines(path("g.jsonl"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0]["text"].get<std::string>().starts_with("[Entity] Kenny Jay [Title] "));
}

TEST_F(CliTest, MafeOutputIsByteIdenticalAcrossRuns) {
  const auto a = run_cli({"evaluate", "mafe", "--hyp", hyps, "--instances", instances, "--out", path("a.jsonl")});
  const auto b = run_cli({"--jobs", "3", "evaluate", "mafe", "--hyp", hyps, "--instances", instances, "--out", path("b.jsonl")});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_EQ(read_lines(path("a.jsonl")).size(), 3u);
  EXPECT_EQ(a.summary()["mean"], b.summary()["mean"]);
}

TEST_F(CliTest, SurfaceSummaryMeansMatchPerLineMeans) {
  const auto r = run_cli({"evaluate", "surface", "--hyp", hyps, "--ref", instances, "--out", path("s.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_lines(path("s.jsonl"));
  ASSERT_EQ(rows.size(), 3u);
  const auto mean = r.summary()["mean"];
  double rl = 0, f1 = 0, bleu = 0, parent = 0;
  for (const auto& row : rows) {
    rl += row["rougeL"]["f1"].get<double>();
    f1 += row["token_f1"].get<double>();
    bleu += row["bleu"].get<double>();
    parent += row["parent"]["f1"].get<double>();
  }
  EXPECT_NEAR(mean["rougeL_f1"].get<double>(), rl / 3, 1e-12);
  EXPECT_NEAR(mean["token_f1"].get<double>(), f1 / 3, 1e-12);
  EXPECT_NEAR(mean["bleu"].get<double>(), bleu / 3, 1e-12);
  EXPECT_NEAR(mean["parent_f1"].get<double>(), parent / 3, 1e-12);
  EXPECT_TRUE(r.summary().contains("corpus_bleu"));
}

TEST_F(CliTest, SurfaceAcceptsPlainStringsAndBertscore) {
  {
    std::ofstream h(path("h.jsonl")), ref(path("r.jsonl"));
    h << "\"the cat sat\"\n";
    ref << "{\"text\": \"the cat sat\"}\n";
  }
  const auto r = run_cli({"evaluate", "surface", "--hyp", path("h.jsonl"), "--ref", path("r.jsonl"), "--bertscore"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.summary()["mean"]["bertscore_f1"].get<double>(), 1.0, 1e-9);
  EXPECT_NEAR(r.summary()["mean"]["token_f1"].get<double>(), 1.0, 1e-12);
  EXPECT_FALSE(r.summary()["mean"].contains("parent_f1"));
}

TEST_F(CliTest, BuildDatasetAndStats) {
  auto r = run_cli({"build-dataset", "--raw", sample + "/raw_sections.jsonl", "--out", path("built.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_EQ(s["records"], 2);
  EXPECT_EQ(s["instances"], 1);
  EXPECT_EQ(s["dropped_entities"], nlohmann::json::array({"Ghost Town"}));
  const auto built = read_instances(path("built.jsonl"));
  ASSERT_EQ(built.size(), 1u);
  EXPECT_EQ(built[0].factual_keys, (std::vector<KeyValue>{{"sport", "professional wrestling"}}));
  r = run_cli({"stats", "--in", instances, "--out", path("stats.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["stats"], nlohmann::json::parse(slurp(path("stats.json"))));
}

TEST_F(CliTest, ExtractiveSentencesComeFromPassages) {
  const auto r = run_cli({"extractive", "--instances", instances, "--out", path("e.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_lines(path("e.jsonl"));
  ASSERT_EQ(rows.size(), 3u);
  const auto all = read_instances(instances);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& s : rows[i]["sentences"]) {
      bool found = false;
      for (const auto& p : all[i].passages) found = found || p.find(s.get<std::string>()) != std::string::npos;
      EXPECT_TRUE(found) << s;
    }
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"rank", "--in", instances}).code, 2);
  EXPECT_EQ(run_cli({"rank", "--method", "bogus", "--in", instances, "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"rank", "--method", "dense", "--in", instances, "--out", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"--backend", "ftp://nowhere", "stats", "--in", instances}).code, 2);
  EXPECT_EQ(run_cli({"seq-fit", "--in", instances, "--out", path("x"), "--betas", "a,1"}).code, 2);
  const auto r = run_cli({"stats"});
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "usage");
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, RuntimeErrorsExitOneWithStructuredMessage) {
  auto r = run_cli({"stats", "--in", path("missing.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "runtime");

  { std::ofstream(path("bad.jsonl")) << "{\"entity\": \"x\"}\n{oops\n"; }
  r = run_cli({"stats", "--in", path("bad.jsonl")});
  EXPECT_EQ(r.code, 1);
  const auto e = nlohmann::json::parse(r.err);
  EXPECT_EQ(e["error"], "schema");
  EXPECT_EQ(e["line"], 1);

  r = run_cli({"evaluate", "surface", "--hyp", hyps, "--ref", path("bad.jsonl")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, FailedRunLeavesNoPartialOutput) {
  { std::ofstream(path("short.jsonl")) << "{\"text\": \"only one\"}\n"; }
  const auto r = run_cli({"evaluate", "mafe", "--hyp", path("short.jsonl"), "--instances", instances, "--out", path("m.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(path("m.jsonl")));
  EXPECT_FALSE(fs::exists(path("m.jsonl.tmp")));
}

TEST_F(CliTest, RemoteBackendMatchesMock) {
  test_support::StubServer server;
  const auto mock = run_cli({"evaluate", "mafe", "--hyp", hyps, "--instances", instances, "--out", path("mock.jsonl")});
  const auto remote = run_cli({"--backend", server.url(), "--jobs", "2", "evaluate", "mafe", "--hyp", hyps, "--instances",
                               instances, "--out", path("remote.jsonl")});
  ASSERT_EQ(mock.code, 0) << mock.err;
  ASSERT_EQ(remote.code, 0) << remote.err;
  EXPECT_EQ(slurp(path("mock.jsonl")), slurp(path("remote.jsonl")));
  EXPECT_GT(server.requests.load(), 0);

  server.override_body("/v1/qa", "{\"nope\": 1}");
  const auto bad = run_cli({"--backend", server.url(), "evaluate", "mafe", "--hyp", hyps, "--instances", instances, "--out",
                            path("bad.jsonl")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(nlohmann::json::parse(bad.err)["error"], "protocol");
}
