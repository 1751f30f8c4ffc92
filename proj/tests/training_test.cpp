#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "medrank/ranking.hpp"
#include "medrank/training.hpp"
#include "support/oracles.hpp"

using namespace medrank;

namespace {

std::vector<double> flatten(const GradientSet& g) {
  std::vector<double> out;
  for (const auto* v : {&g.query.weights, &g.query.biases, &g.candidate.weights,
                        &g.candidate.biases}) {
    out.insert(out.end(), v->begin(), v->end());
  }
  return out;
}

DatasetInstance pair_instance(TokenSequence q, TokenSequence pos, TokenSequence neg,
                              bool pos_first) {
  DatasetInstance inst;
  inst.q = std::move(q);
  inst.candidates = pos_first ? std::vector{pos, neg} : std::vector{neg, pos};
  inst.labels = pos_first ? std::vector{1, 0} : std::vector{0, 1};
  inst.positive_smns = {join_tokens(pos)};
  inst.source = join_tokens(pos);
  return inst;
}

// Positive shares its only token with the query; the negative shares none.
Dataset separable_toy_set(std::size_t n) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = "w" + std::to_string(i);
    const std::string b = "w" + std::to_string((i + 7) % n);
    data.push_back(pair_instance({a, "w" + std::to_string(n + i % 3)}, {a}, {b}, i % 2 == 0));
  }
  return data;
}

}  // namespace

TEST(Hinge, Examples) {
  EXPECT_EQ(hinge_loss(0.9, 0.1, 0.5), 0.0);
  EXPECT_NEAR(hinge_loss(0.2, 0.4, 0.5), 0.7, 1e-15);
  for (double x : {-1.0, 0.0, 0.3, 1.0}) EXPECT_EQ(hinge_loss(x, x, 0.8), 0.8);
}

TEST(Hinge, NeverNegative) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> s(-1, 1), m(1e-3, 2);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(hinge_loss(s(rng), s(rng), m(rng)), 0.0);
}

TEST(Backward, ZeroLossGivesExactlyZeroGradients) {
  std::mt19937_64 rng(2);
  auto table = oracle::random_table(20, 4, rng);
  auto m = oracle::random_model(table, 5, 2, 0.5, rng);
  int seen = 0;
  for (int i = 0; i < 200 && seen < 10; ++i) {
    const auto q = oracle::random_sequence(*table, 3, rng);
    const auto a = oracle::random_sequence(*table, 2, rng);
    const auto b = oracle::random_sequence(*table, 2, rng);
    const double margin = 0.01;
    const auto r = backward(m, q, a, b, margin);
    if (r.loss > 0.0) continue;
    ++seen;
    EXPECT_TRUE(r.grads.all_zero());
    EXPECT_EQ(grad_check(m, q, a, b, margin, 1e-5).max_relative_error, 0.0);
  }
  EXPECT_GT(seen, 0);
}

TEST(Backward, ZeroWeightModelLossEqualsMargin) {
  std::mt19937_64 rng(3);
  auto table = oracle::random_table(10, 3, rng);
  ModelParams m{ConvTower(3, 4, 2), ConvTower(3, 4, 2), table, table};
  const auto r = backward(m, {"w1", "w2"}, {"w3"}, {"w4", "w5"}, 0.5);
  EXPECT_EQ(r.loss, 0.5);
  // One perturbed parameter moves a single tower; the other still outputs the
  // zero vector, so every score stays 0 and the difference quotient is 0 too.
  EXPECT_TRUE(r.grads.all_zero());
  for (double g : oracle::finite_difference_grad(m, {"w1", "w2"}, {"w3"}, {"w4", "w5"}, 0.5, 1e-5)) {
    EXPECT_EQ(g, 0.0);
  }
}

TEST(Backward, MatchesIndependentFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto table = oracle::random_table(25, 5, rng);
  int compared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto m = oracle::random_model(table, 4, 2, 0.6, rng);
    const auto q = oracle::random_sequence(*table, 2 + trial % 4, rng);
    const auto a = oracle::random_sequence(*table, 2 + trial % 3, rng);
    const auto b = oracle::random_sequence(*table, 3, rng);
    const auto r = backward(m, q, a, b, 1.5);
    EXPECT_NEAR(r.loss, oracle::naive_pair_loss(m, q, a, b, 1.5), 1e-12);
    if (r.loss < 1e-3) continue;
    const auto report = grad_check(m, q, a, b, 1.5, 1e-5);
    if (report.excluded > 0) continue;  // near a kink; the oracle would disagree there
    const auto analytic = flatten(r.grads);
    const auto fd = oracle::finite_difference_grad(m, q, a, b, 1.5, 1e-5);
    ASSERT_EQ(analytic.size(), fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      EXPECT_LT(std::abs(analytic[i] - fd[i]) / std::max(1e-8, std::abs(analytic[i]) + std::abs(fd[i])),
                1e-4);
    }
    ++compared;
  }
  EXPECT_GT(compared, 5);
}

TEST(GradCheck, RandomFixturesAreAccurate) {
  std::mt19937_64 rng(5);
  auto table = oracle::random_table(30, 8, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = oracle::random_model(table, 6, 2, 0.5, rng);
    const auto rep = grad_check(m, oracle::random_sequence(*table, 4, rng),
                                oracle::random_sequence(*table, 3, rng),
                                oracle::random_sequence(*table, 2, rng), 1.5, 1e-5);
    EXPECT_LT(rep.max_relative_error, 1e-4);
    EXPECT_EQ(rep.checked + rep.excluded, 2 * (6 * 16 + 6));
  }
}

TEST(GradCheck, KinkAdjacentCoordinatesAreExcluded) {
  std::mt19937_64 rng(6);
  auto table = oracle::random_table(10, 3, rng);
  auto m = oracle::random_model(table, 2, 1, 0.5, rng);
  // Put filter 0 of the query tower exactly on the ReLU kink for token w1.
  const auto v = table->lookup("w1");
  double z = 0;
  for (std::size_t j = 0; j < 3; ++j) z += m.query_tower.weights[j] * v[j];
  m.query_tower.biases[0] = -z;
  const auto rep = grad_check(m, {"w1"}, {"w2"}, {"w3"}, 1.5, 1e-5);
  EXPECT_GE(rep.excluded, 4u);
  EXPECT_THROW(grad_check(m, {"w1"}, {"w2"}, {"w3"}, 1.5, 0.0), std::invalid_argument);
}

TEST(InitParams, DeterministicAndScaled) {
  const auto a = init_params(200, 200, 2, 42);
  const auto b = init_params(200, 200, 2, 42);
  const auto c = init_params(200, 200, 2, 43);
  EXPECT_EQ(a.query_tower, b.query_tower);
  EXPECT_EQ(a.candidate_tower, b.candidate_tower);
  EXPECT_NE(a.query_tower, c.query_tower);
  EXPECT_NE(a.query_tower, a.candidate_tower);
  EXPECT_EQ(a.query_tower.weights.size(), 200u * 400u);
  const double bound = std::sqrt(6.0 / (400 + 200));
  for (double w : a.query_tower.weights) EXPECT_LE(std::abs(w), bound);
  for (double x : a.query_tower.biases) EXPECT_EQ(x, 0.0);
}

TEST(TrainingConfig, Validation) {
  TrainingConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.margin = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.margin = 2.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

class TrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(7);
    table = oracle::random_table(30, 8, rng);
    init = init_params(8, 16, 2, 1);
    init.query_table = init.candidate_table = table;
    data = separable_toy_set(20);
    cfg.batch_size = 4;
    cfg.learning_rate = 0.1;
    cfg.seed = 3;
  }
  std::shared_ptr<EmbeddingTable> table;
  ModelParams init;
  Dataset data;
  TrainingConfig cfg;
};

TEST_F(TrainTest, EmptyDatasetIsAnError) {
  EXPECT_THROW(train({}, {}, init, cfg), std::invalid_argument);
}

TEST_F(TrainTest, RejectsWrongShapes) {
  auto bad = data;
  bad[3].candidates.push_back({"w1"});
  bad[3].labels.push_back(0);
  EXPECT_THROW(train(bad, {}, init, cfg), std::invalid_argument);
  bad = data;
  bad[2].labels = {1, 1};
  EXPECT_THROW(train(bad, {}, init, cfg), std::invalid_argument);
  bad = data;
  bad[2].labels = {0, 0};
  EXPECT_THROW(train(bad, {}, init, cfg), std::invalid_argument);
}

TEST_F(TrainTest, ZeroLearningRateKeepsInitialWeights) {
  cfg.learning_rate = 0.0;
  cfg.max_epochs = 3;
  const auto r = train(data, {}, init, cfg);
  EXPECT_EQ(r.model.query_tower, init.query_tower);
  EXPECT_EQ(r.model.candidate_tower, init.candidate_tower);
}

TEST_F(TrainTest, SeparableSetReachesPerfectAccuracy) {
  cfg.max_epochs = 200;
  const auto hash = table->content_hash();
  const auto r = train(data, {}, init, cfg);
  EXPECT_EQ(top1_accuracy(r.model, data, false), 1.0);
  EXPECT_EQ(r.history[r.best_epoch - 1].val_accuracy, 1.0);
  EXPECT_EQ(table->content_hash(), hash);
}

TEST_F(TrainTest, LossNonIncreasingOverFirstTenEpochs) {
  cfg.max_epochs = 10;
  cfg.learning_rate = 0.05;
  const auto r = train(data, {}, init, cfg);
  for (std::size_t e = 1; e < r.history.size(); ++e) {
    EXPECT_LE(r.history[e].mean_loss, r.history[e - 1].mean_loss + 1e-12) << "epoch " << e + 1;
  }
}

TEST_F(TrainTest, DeterministicAndThreadIndependent) {
  cfg.max_epochs = 5;
  const auto a = train(data, {}, init, cfg);
  const auto b = train(data, {}, init, cfg);
  cfg.threads = 4;
  const auto c = train(data, {}, init, cfg);
  EXPECT_EQ(a.model.query_tower, b.model.query_tower);
  EXPECT_EQ(a.model.query_tower, c.model.query_tower);
  EXPECT_EQ(a.model.candidate_tower, c.model.candidate_tower);
  EXPECT_EQ(a.best_epoch, c.best_epoch);
}

TEST_F(TrainTest, AdamAlsoLearns) {
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 100;
  const auto r = train(data, {}, init, cfg);
  EXPECT_EQ(top1_accuracy(r.model, data, false), 1.0);
}

TEST_F(TrainTest, HistoryCsvFormat) {
  cfg.max_epochs = 2;
  const auto r = train(data, {}, init, cfg);
  std::ostringstream out;
  write_history_csv(r.history, out);
  const auto text = out.str();
  EXPECT_EQ(text.rfind("epoch,mean_loss,val_accuracy\n1,", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
