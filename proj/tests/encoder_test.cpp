#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "medrank/checkpoint.hpp"
#include "medrank/encoder.hpp"
#include "medrank/training.hpp"
#include "support/oracles.hpp"

using namespace medrank;

namespace {

Matrix mat(std::size_t r, std::size_t c, std::vector<double> v) {
  Matrix m(r, c);
  m.data = std::move(v);
  return m;
}

}  // namespace

TEST(ConvForward, HandEvaluatedSingleFilter) {
  ConvTower t(2, 1, 2);
  t.weights = {1, 1, 1, 1};
  const auto out = conv_forward(mat(3, 2, {1, 0, 0, 1, 1, 1}), t);
  ASSERT_EQ(out.rows, 2u);
  ASSERT_EQ(out.cols, 1u);
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(1, 0), 3.0);
}

TEST(ConvForward, ZeroWeightsGiveZeros) {
  ConvTower t(2, 3, 2);
  const auto out = conv_forward(mat(3, 2, {4, -1, 2, 7, -3, 5}), t);
  for (double x : out.data) EXPECT_EQ(x, 0.0);
}

TEST(ConvForward, NegativeBiasClampedByRelu) {
  ConvTower t(2, 2, 1);
  t.weights = {0.1, 0.1, -0.1, 0.2};
  t.biases = {-10, -10};
  const auto out = conv_forward(mat(2, 2, {0.3, 0.2, 0.1, 0.5}), t);
  for (double x : out.data) EXPECT_EQ(x, 0.0);
}

TEST(ConvForward, ShorterThanWindowIsAnError) {
  ConvTower t(2, 1, 3);
  EXPECT_THROW(conv_forward(mat(2, 2, {1, 2, 3, 4}), t), std::invalid_argument);
}

TEST(MaxPool, ColumnMaxima) {
  const auto r = max_pool(mat(2, 2, {1, 5, 3, 2}));
  EXPECT_EQ(r.values, (std::vector<double>{3, 5}));
  EXPECT_EQ(r.argmax, (std::vector<std::size_t>{1, 0}));
}

TEST(MaxPool, SingleRowIsIdentity) {
  const auto r = max_pool(mat(1, 3, {0.5, -1, 2}));
  EXPECT_EQ(r.values, (std::vector<double>{0.5, -1, 2}));
}

TEST(MaxPool, TiesPickFirstRow) {
  const auto r = max_pool(mat(2, 2, {2, 0, 2, 0}));
  EXPECT_EQ(r.values, (std::vector<double>{2, 0}));
  EXPECT_EQ(r.argmax, (std::vector<std::size_t>{0, 0}));
}

TEST(MaxPool, EmptyIsAnError) { EXPECT_THROW(max_pool(Matrix(0, 3)), std::invalid_argument); }

TEST(Cosine, AnalyticValues) {
  const std::vector<double> a{1, 2, 3}, x{1, 0}, y{0, 1}, xy{1, 1};
  EXPECT_DOUBLE_EQ(cosine_score(a, a), 1.0);
  EXPECT_EQ(cosine_score(x, y), 0.0);
  EXPECT_NEAR(cosine_score(x, xy), 0.70710678, 1e-8);
}

TEST(Cosine, ZeroNormScoresZero) {
  const std::vector<double> z{0, 0}, x{1, 0}, tiny{1e-13, 0};
  EXPECT_EQ(cosine_score(z, x), 0.0);
  EXPECT_EQ(cosine_score(tiny, x), 0.0);
}

TEST(Cosine, BoundedAndScaleInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0, 100);
  std::uniform_real_distribution<double> c(1e-3, 1e3);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> u(7), v(7);
    for (auto& e : u) e = g(rng);
    for (auto& e : v) e = g(rng);
    EXPECT_LE(std::abs(cosine_score(u, v)), 1.0 + 1e-9);
    auto cu = u;
    const double k = c(rng);
    for (auto& e : cu) e *= k;
    EXPECT_NEAR(cosine_score(u, cu), 1.0, 1e-12);
  }
}

TEST(Encode, ZeroWeightTowerGivesZeroVector) {
  std::mt19937_64 rng(1);
  auto table = oracle::random_table(10, 4, rng);
  ConvTower t(4, 5, 2);
  for (double x : encode({"w1", "w2", "w3"}, t, *table)) EXPECT_EQ(x, 0.0);
}

TEST(Encode, OneTokenEqualsTokenPlusPad) {
  std::mt19937_64 rng(2);
  auto table = oracle::random_table(10, 4, rng);
  const auto t = oracle::random_tower(4, 6, 2, 0.5, rng);
  EXPECT_EQ(encode({"w3"}, t, *table), encode({"w3", "not-in-vocab"}, t, *table));
}

TEST(Encode, MatchesNaiveOracle) {
  std::mt19937_64 rng(3);
  auto table = oracle::random_table(30, 5, rng);
  for (std::size_t w = 1; w <= 3; ++w) {
    const auto t = oracle::random_tower(5, 7, w, 0.6, rng);
    for (std::size_t len = 0; len <= 6; ++len) {
      const auto s = oracle::random_sequence(*table, len, rng, 0.2);
      const auto got = encode(s, t, *table);
      const auto want = oracle::naive_encode(s, t, *table);
      ASSERT_EQ(got.size(), 7u);
      for (std::size_t f = 0; f < 7; ++f) {
        EXPECT_NEAR(got[f], want[f], 1e-10);
        EXPECT_TRUE(std::isfinite(got[f]));
      }
    }
  }
}

TEST(Score, ZeroWeightModelScoresZero) {
  std::mt19937_64 rng(4);
  auto table = oracle::random_table(10, 3, rng);
  ModelParams m{ConvTower(3, 4, 2), ConvTower(3, 4, 2), table, table};
  EXPECT_EQ(score(m, {"w1", "w2"}, {"w3"}), 0.0);
}

TEST(Score, PadTokensDoNotChangePaddedQuery) {
  std::mt19937_64 rng(5);
  auto table = oracle::random_table(10, 3, rng);
  auto m = oracle::random_model(table, 4, 2, 0.5, rng);
  // Once Q holds a pad-only window, further pads only repeat that window.
  const double base = score(m, {"w1", "oov", "oov"}, {"w2", "w3"});
  EXPECT_EQ(base, score(m, {"w1", "oov", "oov", "oov"}, {"w2", "w3"}));
  EXPECT_EQ(base, score(m, {"w1", "oov", "oov", "oov", "oov", "oov"}, {"w2", "w3"}));
  // A single pad only completes the first window.
  EXPECT_EQ(score(m, {"w1"}, {"w2", "w3"}), score(m, {"w1", "oov"}, {"w2", "w3"}));
}

TEST(Score, MatchesNaiveOracleAndIsOrderIndependent) {
  std::mt19937_64 rng(6);
  auto table = oracle::random_table(40, 6, rng);
  auto m = oracle::random_model(table, 8, 2, 0.4, rng);
  const auto q = oracle::random_sequence(*table, 4, rng);
  std::vector<TokenSequence> cands;
  std::vector<double> forward;
  for (int i = 0; i < 6; ++i) {
    cands.push_back(oracle::random_sequence(*table, 1 + i % 4, rng));
    forward.push_back(score(m, q, cands.back()));
    EXPECT_NEAR(forward.back(), oracle::naive_score(m, q, cands.back()), 1e-10);
  }
  for (int i = 5; i >= 0; --i) EXPECT_EQ(score(m, q, cands[i]), forward[i]);
}

TEST(ModelParams, ValidationCatchesShapeProblems) {
  std::mt19937_64 rng(7);
  auto table = oracle::random_table(5, 3, rng);
  ModelParams m{ConvTower(3, 4, 2), ConvTower(3, 5, 2), table, table};
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.candidate_tower = ConvTower(3, 4, 2);
  EXPECT_NO_THROW(m.validate());
  m.query_tower.weights[0] = std::nan("");
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(9);
    table = oracle::random_table(12, 4, rng);
    other = oracle::random_table(12, 4, rng);
    model = oracle::random_model(table, 5, 2, 0.5, rng);
    path = std::filesystem::temp_directory_path() / "medrank_ckpt_test.mim";
  }
  void TearDown() override { std::filesystem::remove(path); }

  std::shared_ptr<EmbeddingTable> table, other;
  ModelParams model;
  std::filesystem::path path;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  save_checkpoint(model, path);
  const auto back = load_checkpoint(path, table, table);
  EXPECT_EQ(back.query_tower, model.query_tower);
  EXPECT_EQ(back.candidate_tower, model.candidate_tower);
}

TEST_F(CheckpointTest, LayoutStartsWithMagicAndShapes) {
  save_checkpoint(model, path);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "MIM1");
  std::uint64_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  EXPECT_EQ(dims[0], 4u);
  EXPECT_EQ(dims[1], 5u);
  EXPECT_EQ(dims[2], 2u);
  const auto expected = 4 + 6 * 8 + 2 * (5 * 8 + 5) * 8 + 2 * 8;
  EXPECT_EQ(std::filesystem::file_size(path), std::uintmax_t(expected));
}

TEST_F(CheckpointTest, RejectsForeignEmbeddings) {
  save_checkpoint(model, path);
  EXPECT_THROW(load_checkpoint(path, other, table), CheckpointError);
  EXPECT_THROW(load_checkpoint(path, table, other), CheckpointError);
}

TEST_F(CheckpointTest, RejectsCorruptFiles) {
  save_checkpoint(model, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  EXPECT_THROW(load_checkpoint(path, table, table), CheckpointError);
  save_checkpoint(model, path);
  { std::ofstream(path, std::ios::app | std::ios::binary) << 'x'; }
  EXPECT_THROW(load_checkpoint(path, table, table), CheckpointError);
  { std::ofstream(path, std::ios::binary) << "NOPE"; }
  EXPECT_THROW(load_checkpoint(path, table, table), CheckpointError);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing", table, table), CheckpointError);
}
