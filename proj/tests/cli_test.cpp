#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "medrank/checkpoint.hpp"
#include "medrank/dataset.hpp"
#include "medrank/embeddings.hpp"
#include "medrank/training.hpp"

namespace fs = std::filesystem;
using medrank::cli::run_cli;

namespace {

const fs::path kData = MEDRANK_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / (std::string("medrank_cli_") + info->name());
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_cli(args, out, err);
  }

  std::vector<std::string> gen_args(const fs::path& dir, const std::string& mode = "entity") {
    return {"gen-data", "--corpus", (kData / "toy_corpus.jsonl").string(), "--gazetteer",
            (kData / "toy_gazetteer.jsonl").string(), "--output", dir.string(), "--seed", "7",
            "--dmp_mode", mode, "--threads", "2"};
  }

  std::vector<std::string> model_args() {
    return {"--embeddings", (kData / "toy_embeddings.txt").string(), "--filters", "16",
            "--threads", "2"};
  }

  std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  void train_into(const fs::path& dir, const std::string& lr = "0.05") {
    ASSERT_EQ(run(gen_args(dir)), 0) << err.str();
    ASSERT_EQ(run(with(model_args(), {"train", "--train_data", (dir / "train.jsonl").string(),
                                      "--output", dir.string(), "--max_epochs", "3",
                                      "--learning_rate", lr, "--seed", "7"})),
              0)
        << err.str();
  }

  fs::path root;
  std::ostringstream out, err;
};

}  // namespace

TEST_F(CliTest, GenDataIsByteReproducible) {
  ASSERT_EQ(run(gen_args(root / "a")), 0) << err.str();
  ASSERT_EQ(run(gen_args(root / "b")), 0) << err.str();
  for (const char* f : {"train.jsonl", "heldout.jsonl", "gen_report.json"}) {
    EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(root / "a" / "gen_report.json"));
  EXPECT_EQ(report["records"], 42);
  EXPECT_EQ(report["train_records"], 29);
  EXPECT_GT(report["train_instances"].get<int>(), 0);
}

TEST_F(CliTest, GenDataRejectsOversizedN) {
  EXPECT_EQ(run(with(gen_args(root), {"--n_candidates", "500"})), 2);
  EXPECT_NE(err.str().find("exceeds"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "train.jsonl"));
}

TEST_F(CliTest, GenDataModesShareSchema) {
  ASSERT_EQ(run(gen_args(root / "e", "entity")), 0);
  ASSERT_EQ(run(gen_args(root / "g", "ngram")), 0);
  const auto e = medrank::read_dataset(root / "e" / "train.jsonl");
  const auto g = medrank::read_dataset(root / "g" / "train.jsonl");
  ASSERT_FALSE(e.empty());
  ASSERT_FALSE(g.empty());
  EXPECT_NE(e.front().q, g.front().q);
  const auto line = slurp(root / "g" / "train.jsonl");
  EXPECT_EQ(line.rfind("{\"q\":", 0), 0u);
}

TEST_F(CliTest, GenDataWithNoiseAndUnreachableExtractorFallsBack) {
  ASSERT_EQ(run(with(gen_args(root), {"--noise_tokens", "20", "--distractors",
                                      (kData / "distractors.txt").string(), "--extractor_endpoint",
                                      "http://127.0.0.1:1/extract", "--extractor_timeout_ms",
                                      "200"})),
            0)
      << err.str();
  const auto report = nlohmann::json::parse(slurp(root / "gen_report.json"));
  EXPECT_EQ(report["noise_tokens"], 20);
  EXPECT_EQ(report["extractor"], "remote+gazetteer");
}

TEST_F(CliTest, TrainWithZeroLearningRateKeepsInit) {
  train_into(root, "0");
  auto table = std::make_shared<const medrank::EmbeddingTable>(
      medrank::load_embeddings(kData / "toy_embeddings.txt"));
  const auto saved = medrank::load_checkpoint(root / "model.mim", table, table);
  const auto init = medrank::init_params(table->dim(), 16, 2, 7);
  EXPECT_EQ(saved.query_tower, init.query_tower);
  EXPECT_EQ(saved.candidate_tower, init.candidate_tower);
  EXPECT_EQ(slurp(root / "history.csv").rfind("epoch,mean_loss,val_accuracy\n", 0), 0u);
}

TEST_F(CliTest, TrainValidatesBeforeWork) {
  EXPECT_EQ(run({"train", "--train_data", "x.jsonl", "--output", (root / "o").string()}), 2);
  EXPECT_NE(err.str().find("--embeddings"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "o"));
  EXPECT_EQ(run(with(model_args(), {"train", "--train_data", (root / "none.jsonl").string()})), 2);
  EXPECT_EQ(run(with(model_args(), {"train", "--train_data", (root / "none.jsonl").string(),
                                    "--margin", "3"})),
            2);
}

TEST_F(CliTest, TrainEvalClusterAreReproducible) {
  for (const char* sub : {"a", "b"}) {
    const auto dir = root / sub;
    train_into(dir);
    ASSERT_EQ(run(with(model_args(), {"eval", "--checkpoint", (dir / "model.mim").string(),
                                      "--dataset", (dir / "heldout.jsonl").string(), "--output",
                                      dir.string()})),
              0)
        << err.str();
    ASSERT_EQ(run(with(model_args(), {"cluster", "--checkpoint", (dir / "model.mim").string(),
                                      "--corpus", (kData / "toy_corpus.jsonl").string(),
                                      "--output", dir.string(), "--k_max", "8", "--restarts", "3",
                                      "--anchor", "Metformin", "--topk", "3"})),
              0)
        << err.str();
  }
  for (const char* f : {"model.mim", "history.csv", "eval.csv", "clusters.json", "vectors.tsv",
                        "names.tsv"}) {
    EXPECT_EQ(slurp(root / "a" / f), slurp(root / "b" / f)) << f;
  }
  const auto eval = slurp(root / "a" / "eval.csv");
  EXPECT_EQ(eval.rfind("dataset,n_candidates,mode,accuracy,instances\nheldout.jsonl,2,strict,", 0), 0u);
  EXPECT_NE(eval.find(",relaxed,"), std::string::npos);
  const auto clusters = nlohmann::json::parse(slurp(root / "a" / "clusters.json"));
  EXPECT_TRUE(clusters.contains("k"));
  EXPECT_TRUE(clusters.contains("silhouette"));
  EXPECT_EQ(clusters["clusters"].size(), clusters["k"].get<std::size_t>());
  EXPECT_EQ(clusters["nearest"]["anchor"].get<std::string>(), "metformin");
}

TEST_F(CliTest, RankPrintsJson) {
  train_into(root);
  ASSERT_EQ(run(with(model_args(), {"rank", "--checkpoint", (root / "model.mim").string(),
                                    "--query", "something for my bad cough", "--gazetteer",
                                    (kData / "toy_gazetteer.jsonl").string(), "--candidates",
                                    "metformin", "albuterol", "sertraline"})),
            0)
      << err.str();
  const auto doc = nlohmann::json::parse(out.str());
  EXPECT_EQ(doc["dmp"].get<std::string>(), "cough");
  ASSERT_EQ(doc["ranking"].size(), 3u);
  EXPECT_EQ(doc["ranking"][0]["rank"], 1);
  EXPECT_GE(doc["ranking"][0]["score"].get<double>(), doc["ranking"][1]["score"].get<double>());
  EXPECT_EQ(run(with(model_args(), {"rank", "--checkpoint", (root / "model.mim").string(),
                                    "--query", "x"})),
            2);
}

TEST_F(CliTest, BenchWritesStatsAndFingerprint) {
  ASSERT_EQ(run({"bench", "--output", root.string(), "--n_candidates", "5", "--trials", "5",
                 "--warmup", "1", "--dim", "16", "--filters", "16"}),
            0)
      << err.str();
  const auto csv = slurp(root / "bench.csv");
  EXPECT_EQ(csv.rfind("n_candidates,token_len,dim,filters,trials,mean_us,p50_us,p95_us,p99_us\n5,16,16,16,5,", 0), 0u);
  EXPECT_NE(csv.find("# env: "), std::string::npos);
  EXPECT_EQ(out.str(), csv);
}

TEST_F(CliTest, ExportEmbeddingsFromNameList) {
  train_into(root);
  { std::ofstream(root / "names.txt") << "metformin\n\nalbuterol\n"; }
  ASSERT_EQ(run(with(model_args(), {"export-embeddings", "--checkpoint",
                                    (root / "model.mim").string(), "--smn_list",
                                    (root / "names.txt").string(), "--output",
                                    (root / "x").string()})),
            0)
      << err.str();
  EXPECT_EQ(slurp(root / "x" / "names.tsv"), "metformin\nalbuterol\n");
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  { std::ofstream(root / "cfg.json") << R"({"seed": 7, "n_candidates": 500, "dmp_mode": "entity"})"; }
  auto args = gen_args(root / "o");
  args.insert(args.end(), {"--config", (root / "cfg.json").string()});
  EXPECT_EQ(run(args), 2);  // config n_candidates applies
  args.insert(args.end(), {"--n_candidates", "3"});
  EXPECT_EQ(run(args), 0) << err.str();  // flag overrides config
  EXPECT_EQ(nlohmann::json::parse(slurp(root / "o" / "gen_report.json"))["n_candidates"], 3);
}

TEST_F(CliTest, UsageErrors) {
  { std::ofstream(root / "cfg.json") << R"({"sed": 7})"; }
  EXPECT_EQ(run({"gen-data", "--config", (root / "cfg.json").string()}), 2);
  EXPECT_NE(err.str().find("unknown configuration key 'sed'"), std::string::npos);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"train", "--filters", "many"}), 2);
  EXPECT_EQ(run({"train", "--optimizer", "rmsprop"}), 2);
  EXPECT_EQ(run({"train", "--threads", "0"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_NE(out.str().find("gen-data"), std::string::npos);
}

TEST_F(CliTest, CorruptInputIsRuntimeFailure) {
  { std::ofstream(root / "bad.jsonl") << "{oops\n"; }
  EXPECT_EQ(run({"gen-data", "--corpus", (root / "bad.jsonl").string(), "--gazetteer",
                 (kData / "toy_gazetteer.jsonl").string(), "--output", root.string()}),
            1);
}
