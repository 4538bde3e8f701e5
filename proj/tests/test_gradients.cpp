#include "carp/gradient_check.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace carp;
using carp::testing::make_dataset;
using carp::testing::synthetic_corpus;
using carp::testing::tiny_config;

namespace {

const Dataset& shared_dataset() {
  static const Dataset ds = make_dataset(synthetic_corpus(6, 5, 4, 21), 4, 100, 12);
  return ds;
}

std::span<const Interaction> small_batch(const Dataset& ds, std::size_t n = 4) {
  return {ds.split.train.data(), std::min(n, ds.split.train.size())};
}

// Default initialization leaves the capsule head with gradients far below
// finite-difference round-off, so checks run on uniformly drawn parameters.
ModelParams<double> lively_params(const ModelConfig& cfg, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  auto p = ModelParams<double>::zeros(cfg);
  p.visit([&](const std::string&, Matrix<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  });
  p.embedding.row(kPadToken).setZero();
  return p;
}

void expect_all_groups_below(const GradientCheckReport& rep, double tol) {
  ASSERT_FALSE(rep.groups.empty());
  for (const auto& g : rep.groups)
    EXPECT_LT(g.relative_error, tol) << g.name << " rel " << g.relative_error << " analytic " << g.analytic_norm << " numeric " << g.numeric_norm;
}

}  // namespace

TEST(GradientCheck, FullModelBiAgreement) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds, 2, 3, 2, RoutingKind::kBiAgreement);
  const auto p = lively_params(cfg, 5);
  expect_all_groups_below(gradient_check(p, cfg, ds.bank, small_batch(ds), LossConfig{}), 1e-4);
}

TEST(GradientCheck, FullModelAgreementOnly) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds, 2, 3, 2, RoutingKind::kAgreement);
  const auto p = lively_params(cfg, 6);
  expect_all_groups_below(gradient_check(p, cfg, ds.bank, small_batch(ds), LossConfig{}), 1e-4);
}

TEST(GradientCheck, ThreeIterationsWithoutMutualExclusion) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds, 3, 2, 3);
  const auto p = lively_params(cfg, 7);
  LossConfig loss;
  loss.lambda = 0.3;
  loss.mutual_exclusion = false;
  expect_all_groups_below(gradient_check(p, cfg, ds.bank, small_batch(ds, 3), loss), 1e-4);
}

TEST(GradientCheck, BiasPathIsNearlyExact) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds);
  const auto p = lively_params(cfg, 8);
  LossConfig loss;
  loss.lambda = 1.0;
  const auto rep = gradient_check(p, cfg, ds.bank, small_batch(ds, 6), loss, 1e-5, [](const std::string& name) {
    return name == "user_bias" || name == "item_bias" || name == "head_b3";
  });
  ASSERT_EQ(rep.groups.size(), 3u);
  expect_all_groups_below(rep, 1e-7);
}

TEST(GradientCheck, PaddingRowReceivesNoGradient) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds);
  const auto p = lively_params(cfg, 9);
  auto grads = ModelParams<double>::zeros(cfg);
  run_batch<double>(p, cfg, ds.bank, small_batch(ds, 8), LossConfig{}, &grads, nullptr);
  EXPECT_TRUE(grads.embedding.row(kPadToken).isZero());
  EXPECT_GT(grads.embedding.norm(), 0.0);
}

TEST(GradientCheck, GradientsAccumulateAcrossCalls) {
  const auto& ds = shared_dataset();
  const auto cfg = tiny_config(ds);
  const auto p = lively_params(cfg, 10);
  auto once = ModelParams<double>::zeros(cfg), twice = ModelParams<double>::zeros(cfg);
  run_batch<double>(p, cfg, ds.bank, small_batch(ds), LossConfig{}, &once, nullptr);
  run_batch<double>(p, cfg, ds.bank, small_batch(ds), LossConfig{}, &twice, nullptr);
  run_batch<double>(p, cfg, ds.bank, small_batch(ds), LossConfig{}, &twice, nullptr);
  std::vector<const Matrix<double>*> a;
  once.visit([&](const std::string&, const Matrix<double>& m) { a.push_back(&m); });
  std::size_t i = 0;
  twice.visit([&](const std::string& name, const Matrix<double>& m) {
    EXPECT_LT((m - 2 * *a[i++]).norm(), 1e-12) << name;
  });
}

TEST(GradientCheck, SeveralDrawsBothRoutings) {
  const auto& ds = shared_dataset();
  for (auto routing : {RoutingKind::kBiAgreement, RoutingKind::kAgreement})
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
      const auto cfg = tiny_config(ds, 2, 2, 2, routing);
      const auto rep = gradient_check(lively_params(cfg, seed), cfg, ds.bank, small_batch(ds, 2), LossConfig{});
      EXPECT_LT(rep.worst, 1e-4) << to_string(routing) << " seed " << seed << " group " << rep.worst_group;
    }
}
