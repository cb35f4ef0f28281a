#include <gtest/gtest.h>

#include <sstream>

#include "msgca/cli.hpp"
#include "support/stub_server.hpp"
#include "support/temp_dir.hpp"

namespace msgca::cli {
namespace {

using msgca::testing::read_file;
using msgca::testing::TempDir;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "msgca");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> data_flags(const std::string& dir) {
  return {"--prices", dir + "/prices.csv", "--documents", dir + "/documents.jsonl", "--embeddings",
          dir + "/embeddings.jsonl", "--graph", dir + "/graph.tsv"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class CliData : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto r = run({"synth", "--stocks", "8", "--days", "50", "--dim", "6", "--seed", "3", "--out", data()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::string data() const { return dir.file("data"); }
  std::vector<std::string> small_model() const {
    return {"--ws", "5", "--d", "6", "--epochs", "3", "--batch-size", "32", "--lr", "1e-3"};
  }
  TempDir dir;
};

TEST(Cli, TopLevelHelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("dump-features"), std::string::npos);
}

TEST(Cli, EverySubcommandHelpListsFlags) {
  for (const std::string cmd : {"synth", "embed", "train", "eval", "ablate", "dump-features"}) {
    const auto r = run({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << cmd;
    EXPECT_NE(r.out.find("--out"), std::string::npos) << cmd;
  }
  EXPECT_NE(run({"train", "--help"}).out.find("--epochs"), std::string::npos);
  EXPECT_NE(run({"ablate", "--help"}).out.find("--variants"), std::string::npos);
}

TEST(Cli, UnknownFlagExitsOne) {
  const auto r = run({"train", "--no-such-flag", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, MissingSubcommandExitsOne) { EXPECT_EQ(run({}).code, 1); }

TEST(Cli, SynthIsByteIdentical) {
  TempDir dir;
  for (const char* d : {"a", "b"})
    ASSERT_EQ(run({"synth", "--stocks", "12", "--days", "120", "--seed", "7", "--out", dir.file(d)}).code, 0);
  for (const char* f : {"prices.csv", "documents.jsonl", "embeddings.jsonl", "graph.tsv"}) {
    const auto a = read_file(dir.file("a") + "/" + f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, read_file(dir.file("b") + "/" + f)) << f;
  }
}

TEST(Cli, MissingInputIsConfigError) {
  TempDir dir;
  const auto r = run({"train", "--prices", dir.file("nope.csv"), "--out", dir.file("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST(Cli, MalformedDataIsDataError) {
  TempDir dir;
  const auto p = dir.write("prices.csv", "date,symbol,open,high,close\n2020-01-02,A,1,1,oops\n");
  EXPECT_EQ(run({"train", "--prices", p, "--out", dir.file("o")}).code, 2);
}

TEST(Cli, BadConfigValueIsConfigError) {
  TempDir dir;
  const auto ini = dir.write("c.ini", "[training]\nepochs=many\n");
  const auto p = dir.write("prices.csv", "date,symbol,open,high,close\n2020-01-02,A,1,1,1\n");
  EXPECT_EQ(run({"train", "--config", ini, "--prices", p}).code, 1);
  const auto unknown = dir.write("u.ini", "[training]\nepochs_typo=3\n");
  EXPECT_EQ(run({"train", "--config", unknown, "--prices", p}).code, 1);
}

TEST_F(CliData, TrainThenEvalReportsRecordedTestMcc) {
  const auto out = dir.file("train");
  const auto t = run(cat(cat({"train", "--out", out}, data_flags(data())), small_model()));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(out + "/checkpoint.bin"));
  EXPECT_TRUE(fs::exists(out + "/config.ini"));
  const auto log = read_file(out + "/metrics.csv");
  EXPECT_EQ(log.rfind("epoch,train_loss,valid_acc,valid_mcc,seconds,peak_mem_bytes\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);

  const auto summary = nlohmann::json::parse(read_file(out + "/summary.json"));
  const auto e = run(cat({"eval", "--checkpoint", out + "/checkpoint.bin", "--out", dir.file("eval")}, data_flags(data())));
  ASSERT_EQ(e.code, 0) << e.err;
  const auto ev = nlohmann::json::parse(read_file(dir.file("eval") + "/eval.json"));
  EXPECT_EQ(ev["mcc"].get<double>(), summary["test_mcc"].get<double>());
  EXPECT_EQ(ev["acc"].get<double>(), summary["test_acc"].get<double>());
}

TEST_F(CliData, Float32TrainEvalConsistent) {
  const auto out = dir.file("train32");
  ASSERT_EQ(run(cat(cat({"train", "--precision", "float32", "--out", out}, data_flags(data())), small_model())).code, 0);
  const auto summary = nlohmann::json::parse(read_file(out + "/summary.json"));
  ASSERT_EQ(run(cat({"eval", "--checkpoint", out + "/checkpoint.bin", "--out", dir.file("e")}, data_flags(data()))).code, 0);
  const auto ev = nlohmann::json::parse(read_file(dir.file("e") + "/eval.json"));
  EXPECT_EQ(ev["mcc"].get<double>(), summary["test_mcc"].get<double>());
}

TEST_F(CliData, ConfigFileOverriddenByFlagsAndEchoed) {
  const auto ini = dir.write("run.ini", "[training]\nepochs=5\nd=6\nlr=0.001\nbatch_size=32\n[data]\nws=5\n");
  const auto out = dir.file("cfg");
  const auto r = run(cat({"train", "--config", ini, "--epochs", "2", "--out", out}, data_flags(data())));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = read_file(out + "/metrics.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);  // header + 2 epochs
  const auto echoed = read_file(out + "/config.ini");
  EXPECT_NE(echoed.find("epochs=2"), std::string::npos);
  EXPECT_NE(echoed.find("d=6"), std::string::npos);
  EXPECT_NE(echoed.find("dir=" + out), std::string::npos);
}

TEST_F(CliData, ResumeContinuesFromCheckpoint) {
  const auto out = dir.file("r1");
  ASSERT_EQ(run(cat(cat({"train", "--out", out}, data_flags(data())), {"--ws", "5", "--d", "6", "--epochs", "1",
                                                                        "--batch-size", "32"}))
                .code,
            0);
  const auto r = run(cat(cat({"train", "--resume", out + "/checkpoint.bin", "--out", dir.file("r2")}, data_flags(data())),
                         {"--ws", "5", "--d", "6", "--epochs", "3", "--batch-size", "32"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = read_file(dir.file("r2") + "/metrics.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);  // header + epochs 2, 3
  EXPECT_NE(log.find("\n2,"), std::string::npos);
}

TEST_F(CliData, ResumeWithDifferentModelRejected) {
  const auto out = dir.file("r1");
  ASSERT_EQ(run(cat(cat({"train", "--out", out}, data_flags(data())), {"--ws", "5", "--d", "6", "--epochs", "1"})).code, 0);
  const auto r = run(cat(cat({"train", "--resume", out + "/checkpoint.bin", "--out", dir.file("r2")}, data_flags(data())),
                         {"--ws", "5", "--d", "8", "--epochs", "2"}));
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliData, AblateReportsExactlyRequestedVariants) {
  const auto out = dir.file("abl");
  const auto r = run(cat(cat({"ablate", "--variants", "full,drop_docs", "--seeds", "0,1", "--out", out}, data_flags(data())),
                         {"--ws", "5", "--d", "6", "--epochs", "1", "--batch-size", "64"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = read_file(out + "/report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\nfull,2,"), std::string::npos);
  EXPECT_NE(csv.find("\ndrop_docs,2,"), std::string::npos);
  const auto j = nlohmann::json::parse(read_file(out + "/report.json"));
  EXPECT_EQ(j["variants"].size(), 2u);
}

TEST_F(CliData, AblateUnknownVariantIsConfigError) {
  EXPECT_EQ(run(cat({"ablate", "--variants", "full,nonsense", "--out", dir.file("x")}, data_flags(data()))).code, 1);
}

TEST_F(CliData, DumpFeaturesWritesStabilityCsv) {
  const auto out = dir.file("t");
  ASSERT_EQ(run(cat(cat({"train", "--out", out}, data_flags(data())), small_model())).code, 0);
  const auto r = run(cat({"dump-features", "--checkpoint", out + "/checkpoint.bin", "--symbol", "S001", "--split", "train",
                          "--out", dir.file("dump")},
                         data_flags(data())));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = read_file(dir.file("dump") + "/stability.csv");
  EXPECT_EQ(csv.rfind("date,close,stage,kind,value\n", 0), 0u);
  EXPECT_NE(csv.find(",stage2,stable,"), std::string::npos);
  EXPECT_NE(r.out.find("stage1 unstable smoothness"), std::string::npos);
}

TEST_F(CliData, DivergentTrainingExitsThree) {
  const auto r = run(cat(cat({"train", "--out", dir.file("nan")}, data_flags(data())),
                         {"--ws", "5", "--d", "6", "--epochs", "5", "--batch-size", "8", "--lr", "1e300", "--warmup", "0"}));
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("non-finite training loss"), std::string::npos) << r.err;
}

TEST_F(CliData, EmbedOverHttpStub) {
  msgca::testing::StubEmbeddingServer::Options o;
  o.dim = 6;
  msgca::testing::StubEmbeddingServer stub(o);
  const auto out = dir.file("emb");
  const std::vector<std::string> args{"embed", "--documents", data() + "/documents.jsonl", "--backend", "http",
                                      "--endpoint", stub.url(), "--token-env", "", "--embed-dim", "6",
                                      "--max-batch", "16", "--out", out};
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = data::load_embeddings(out + "/embeddings.jsonl", 6);
  const auto days = data::load_documents(data() + "/documents.jsonl");
  EXPECT_EQ(table.size(), days.size());
  const int calls = stub.requests();
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(stub.requests(), calls);  // complete cache: nothing re-embedded
}

TEST_F(CliData, EmbedFileBackendMissingTextIsDataError) {
  const auto cache = dir.write("cache.jsonl", "{\"text\":\"unrelated\",\"embedding\":[1,2,3,4,5,6]}\n");
  const auto r = run({"embed", "--documents", data() + "/documents.jsonl", "--cache", cache, "--embed-dim", "6", "--out",
                      dir.file("emb")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent from embedding cache"), std::string::npos);
}

}  // namespace
}  // namespace msgca::cli
