#include "carp/losses.hpp"
#include "carp/rmsprop.hpp"

#include <gtest/gtest.h>

#include <random>
#include <vector>

using namespace carp;

TEST(LossSqr, Examples) {
  const std::vector<double> r = {3, 4, 5};
  EXPECT_DOUBLE_EQ(loss_sqr<double>(r, r), 0.0);
  const std::vector<double> p2 = {2, 5}, r2 = {1, 6};
  EXPECT_DOUBLE_EQ(loss_sqr<double>(p2, r2), 1.0);
  const std::vector<double> p3 = {3.5, 5.5, 7};
  EXPECT_NEAR(loss_sqr<double>(p3, r), 2.1667, 1e-4);
  EXPECT_THROW(loss_sqr<double>(std::span<const double>{}, std::span<const double>{}), Error);
}

TEST(LossStm, Examples) {
  EXPECT_DOUBLE_EQ(sentiment_margin(0.95, 0.1, Sentiment::kPos, 0.8), 0.0);
  EXPECT_NEAR(sentiment_margin(0.5, 0.5, Sentiment::kPos, 0.8), 0.6, 1e-12);
  // Swapping sentiments mirrors the loss.
  EXPECT_DOUBLE_EQ(sentiment_margin(0.1, 0.95, Sentiment::kNeg, 0.8), 0.0);
  EXPECT_NEAR(sentiment_margin(0.3, 0.6, Sentiment::kNeg, 0.8), sentiment_margin(0.6, 0.3, Sentiment::kPos, 0.8),
              1e-15);
  const std::vector<CapsuleLengths> batch = {{0.95, 0.1, Sentiment::kPos}, {0.5, 0.5, Sentiment::kPos}};
  EXPECT_NEAR(loss_stm(batch, 0.8), 0.3, 1e-12);
}

TEST(LossStm, MutualExclusionNeverLowers) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> len(0, 1), eps(0.5, 0.99);
  for (int trial = 0; trial < 10000; ++trial) {
    const double p = len(rng), n = len(rng), e = eps(rng);
    const auto lab = rng() % 2 ? Sentiment::kPos : Sentiment::kNeg;
    const double with = sentiment_margin(p, n, lab, e, true), without = sentiment_margin(p, n, lab, e, false);
    EXPECT_GE(with, without);
    EXPECT_GE(without, 0.0);
  }
}

TEST(TotalLoss, Fusion) {
  EXPECT_DOUBLE_EQ(total_loss(2.0, 0.6, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(2.0, 0.6, 0.0), 0.6);
  EXPECT_NEAR(total_loss(2.0, 0.6, 0.5), 1.3, 1e-12);
  EXPECT_THROW(total_loss(2.0, 0.6, 1.5), AssertionError);
}

TEST(TotalLoss, NonNegativeAndZeroOnlyWhenPerfect) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::vector<double> p = {1 + 4 * u(rng), 1 + 4 * u(rng)}, r = {1 + 4 * u(rng), 1 + 4 * u(rng)};
    const std::vector<CapsuleLengths> caps = {{u(rng), u(rng), Sentiment::kPos}, {u(rng), u(rng), Sentiment::kNeg}};
    const double l = total_loss(loss_sqr<double>(p, r), loss_stm(caps, 0.8), u(rng));
    EXPECT_GE(l, 0.0);
  }
  const std::vector<double> r = {4, 2};
  const std::vector<CapsuleLengths> ok = {{0.9, 0.1, Sentiment::kPos}, {0.05, 0.85, Sentiment::kNeg}};
  EXPECT_EQ(total_loss(loss_sqr<double>(r, r), loss_stm(ok, 0.8), 0.5), 0.0);
}

TEST(RmsProp, ZeroGradientIsNoOp) {
  ModelConfig cfg;
  cfg.vocab_size = 10;
  cfg.num_users = 3;
  cfg.num_items = 4;
  cfg.embed_dim = 4;
  cfg.filters = 3;
  cfg.latent_dim = 2;
  cfg.slots = 2;
  std::mt19937_64 rng(3);
  auto p = ModelParams<double>::initialize(cfg, rng);
  const auto before = p;
  RmsProp<double> opt(cfg, 0.001);
  const auto zero = ModelParams<double>::zeros(cfg);
  for (int i = 0; i < 5; ++i) opt.step(p, zero);
  std::vector<const Matrix<double>*> a;
  before.visit([&](const std::string&, const Matrix<double>& m) { a.push_back(&m); });
  std::size_t i = 0;
  p.visit([&](const std::string& name, const Matrix<double>& m) { EXPECT_EQ(m, *a[i++]) << name; });
}

TEST(RmsProp, StepMatchesFormula) {
  ModelConfig cfg;
  cfg.vocab_size = 4;
  cfg.num_users = 1;
  cfg.num_items = 1;
  cfg.embed_dim = 1;
  cfg.filters = 1;
  cfg.latent_dim = 1;
  cfg.slots = 1;
  auto p = ModelParams<double>::zeros(cfg);
  auto g = ModelParams<double>::zeros(cfg);
  p.user_bias(0, 0) = 1.0;
  g.user_bias(0, 0) = 0.5;
  g.embedding(0, 0) = 3.0;  // padding row stays frozen
  RmsProp<double> opt(cfg, 0.01, 0.9, 1e-8);
  opt.step(p, g);
  double ms = 0.1 * 0.25;
  double expected = 1.0 - 0.01 * 0.5 / (std::sqrt(ms) + 1e-8);
  EXPECT_NEAR(p.user_bias(0, 0), expected, 1e-15);
  opt.step(p, g);
  ms = 0.9 * ms + 0.1 * 0.25;
  expected -= 0.01 * 0.5 / (std::sqrt(ms) + 1e-8);
  EXPECT_NEAR(p.user_bias(0, 0), expected, 1e-15);
  EXPECT_EQ(p.embedding(0, 0), 0.0);
}
