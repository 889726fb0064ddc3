#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "setalign/cli.hpp"

namespace fs = std::filesystem;
using setalign::cli::run;

namespace {

const std::string kFixtures = SETALIGN_FIXTURES;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "setalign");
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("setalign_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_F(CliTest, NoSubcommandIsAnInputError) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
}

TEST_F(CliTest, MatchValidFile) {
  const Result r = invoke({"match", "-i", kFixtures + "/match/two_records.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = json_lines(r.out);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0]["image_id"], "img-a");
  EXPECT_EQ(records[0]["strategy"], "one_to_one");
  EXPECT_EQ(records[0]["pairs"], nlohmann::json::parse("[[0,0,0.9],[1,2,0.95]]"));
}

TEST_F(CliTest, MatchCarriesCorrectnessAgainstGroundTruth) {
  const Result r = invoke({"match", "-i", kFixtures + "/match/two_records.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = json_lines(r.out);
  // img-a: dog->0 and ball->2 are both planted. img-b: cat->1 is planted,
  // sofa->2 is not (planted region 0 scores 0.2 against 0.904).
  EXPECT_EQ(records[0]["correct"], nlohmann::json::parse("[true,true]"));
  EXPECT_EQ(records[1]["correct"], nlohmann::json::parse("[true,false]"));
  EXPECT_EQ(records[1]["recovery"]["f1"], 0.5);
}

TEST_F(CliTest, MatchMissingFieldNamesFieldAndLine) {
  const Result r = invoke({"match", "-i", kFixtures + "/match/missing_field.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("word_embeddings"), std::string::npos) << r.err;
}

TEST_F(CliTest, MatchMalformedJsonReportsLine) {
  const Result r = invoke({"match", "-i", kFixtures + "/match/malformed.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, MatchStrategiesAndOptions) {
  const std::string input = kFixtures + "/match/two_records.jsonl";
  const Result many = invoke({"match", "-i", input, "--strategy", "one-to-many", "--tau", "0.9"});
  ASSERT_EQ(many.code, 0) << many.err;
  EXPECT_TRUE(json_lines(many.out)[0]["sinkhorn"]["converged"].get<bool>());
  EXPECT_EQ(invoke({"match", "-i", input, "--strategy", "max-size"}).code, 1);  // img-b lacks boxes
  EXPECT_EQ(invoke({"match", "-i", input, "--strategy", "greedy"}).code, 1);
  EXPECT_EQ(invoke({"match", "-i", input, "--tau", "0"}).code, 1);
  EXPECT_EQ(invoke({"match", "-i", (dir_ / "absent.jsonl").string()}).code, 1);

  const fs::path out = dir_ / "pairs.jsonl";
  ASSERT_EQ(invoke({"match", "-i", input, "--strategy", "max_score", "--out", out.string()}).code, 0);
  EXPECT_EQ(json_lines(slurp(out)).size(), 2u);
}

TEST_F(CliTest, VocabMatchesGolden) {
  const std::string v = kFixtures + "/vocab/";
  const Result r = invoke({"vocab", "--corpus", v + "corpus.jsonl", "--lexicon", v + "lexicon.txt",
                           "--stopwords", v + "stopwords.txt"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(v + "golden_min2.json"));

  const Result cats = invoke({"vocab", "--corpus", v + "corpus.jsonl", "--lexicon", v + "lexicon.txt",
                              "--stopwords", v + "stopwords.txt", "--categories", v + "categories.txt"});
  ASSERT_EQ(cats.code, 0) << cats.err;
  EXPECT_EQ(cats.out, slurp(v + "golden_categories.json"));
}

TEST_F(CliTest, VocabSkipsUnreadableRecords) {
  const std::string v = kFixtures + "/vocab/";
  const Result r = invoke({"vocab", "--corpus", v + "corpus_dirty.jsonl", "--lexicon", v + "lexicon.txt",
                           "--stopwords", v + "stopwords.txt", "--min-freq", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(v + "golden_dirty.json"));
}

TEST_F(CliTest, VocabEmptyCorpus) {
  const fs::path corpus = write("empty.jsonl", "");
  const Result r = invoke({"vocab", "--corpus", corpus.string(), "--lexicon",
                           kFixtures + "/vocab/lexicon.txt"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["concepts"].empty());
  EXPECT_EQ(j["skipped_records"], 0);
}

TEST_F(CliTest, VocabPreconditions) {
  const std::string v = kFixtures + "/vocab/";
  EXPECT_EQ(invoke({"vocab", "--corpus", v + "corpus.jsonl", "--lexicon", v + "lexicon.txt",
                    "--min-freq", "0"}).code,
            1);
  const fs::path empty_lex = write("lexicon.txt", "# nothing here\n\n");
  EXPECT_EQ(invoke({"vocab", "--corpus", v + "corpus.jsonl", "--lexicon", empty_lex.string()}).code, 1);
}

TEST_F(CliTest, BenchGoldenReportIsByteIdentical) {
  const Result r = invoke({"bench", "--config", kFixtures + "/bench/golden.toml", "--out", dir_.string(),
                           "--threads", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "report.json"), slurp(kFixtures + "/bench/report.json"));
  EXPECT_EQ(slurp(dir_ / "report.csv"), slurp(kFixtures + "/bench/report.csv"));
}

TEST_F(CliTest, BenchSeedChangesNumbersNotSchema) {
  const std::string cfg = kFixtures + "/bench/golden.toml";
  ASSERT_EQ(invoke({"bench", "--config", cfg, "--out", (dir_ / "a").string()}).code, 0);
  ASSERT_EQ(invoke({"bench", "--config", cfg, "--seed", "20", "--out", (dir_ / "b").string()}).code, 0);
  const auto a = nlohmann::json::parse(slurp(dir_ / "a" / "report.json"));
  const auto b = nlohmann::json::parse(slurp(dir_ / "b" / "report.json"));
  EXPECT_EQ(b["config"]["seed"], 20);
  ASSERT_EQ(a["strategies"].size(), 4u);
  ASSERT_EQ(b["strategies"].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a["strategies"][i]["strategy"], b["strategies"][i]["strategy"]);
    std::vector<std::string> ka, kb;
    for (auto it = a["strategies"][i].begin(); it != a["strategies"][i].end(); ++it) ka.push_back(it.key());
    for (auto it = b["strategies"][i].begin(); it != b["strategies"][i].end(); ++it) kb.push_back(it.key());
    EXPECT_EQ(ka, kb);
  }
  EXPECT_NE(a["strategies"][0]["mean_similarity"], b["strategies"][0]["mean_similarity"]);
}

TEST_F(CliTest, BenchConfigErrorsNameTheField) {
  const fs::path unknown = write("bad.toml", "num_scenes = 3\nwarp_factor = 9\n");
  Result r = invoke({"bench", "--config", unknown.string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("warp_factor"), std::string::npos) << r.err;

  const fs::path invalid = write("invalid.toml", "num_words = 10\nnum_regions = 4\n");
  r = invoke({"bench", "--config", invalid.string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("num_regions"), std::string::npos) << r.err;

  r = invoke({"bench", "--config", (dir_ / "missing.toml").string()});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, FlagsOverrideConfig) {
  const fs::path cfg = write("small.toml", "num_scenes = 5\nnum_words = 3\nnum_regions = 8\ndim = 8\nseed = 1\n");
  ASSERT_EQ(invoke({"bench", "--config", cfg.string(), "--num-scenes", "2", "--out", dir_.string()}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "report.json"))["scenes"], 2);
}

TEST_F(CliTest, TrainToyZeroEpochs) {
  const Result r = invoke({"train-toy", "--num-scenes", "8", "--epochs", "0", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "trace.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);  // header plus epoch 0
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "trace.json"))["epochs"].size(), 1u);
}

TEST_F(CliTest, TrainToyDivergenceExitsTwoWithEpoch) {
  const Result r = invoke({"train-toy", "--num-scenes", "40", "--step-size", "1e3", "--out", dir_.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("diverged at epoch 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainToyRejectsBadSettings) {
  EXPECT_EQ(invoke({"train-toy", "--epochs", "-1", "--out", dir_.string()}).code, 1);
  EXPECT_EQ(invoke({"train-toy", "--batch-size", "0", "--out", dir_.string()}).code, 1);
  EXPECT_EQ(invoke({"train-toy", "--strategy", "one-to-one,max-score", "--out", dir_.string()}).code, 1);
}

TEST_F(CliTest, TrainToyIsReproducible) {
  const std::vector<std::string> base{"train-toy", "--num-scenes", "12", "--epochs", "3"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (dir_ / "a").string()});
  b.insert(b.end(), {"--out", (dir_ / "b").string()});
  ASSERT_EQ(invoke(a).code, 0);
  ASSERT_EQ(invoke(b).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "trace.json"), slurp(dir_ / "b" / "trace.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "trace.csv"), slurp(dir_ / "b" / "trace.csv"));
}
