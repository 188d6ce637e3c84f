#include <gtest/gtest.h>

#include <random>

#include "capsum/evaluation.hpp"
#include "oracles.hpp"

using namespace capsum;

TEST(KendallTau, Examples) {
  EXPECT_EQ(kendall_tau_b({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_EQ(kendall_tau_b({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_NEAR(kendall_tau_b({1, 2, 3, 4}, {1, 3, 2, 4}), 4.0 / 6.0, 1e-15);
  EXPECT_THROW((void)kendall_tau_b({1, 1, 1}, {1, 2, 3}), Error);
  EXPECT_THROW((void)kendall_tau_b({1, 2}, {1, 2, 3}), Error);
}

TEST(KendallTau, MatchesPairCountOracleWithTies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(2 + t % 30), y(x.size());
    for (auto& a : x) a = v(rng);
    for (auto& a : y) a = v(rng);
    const auto want = oracle::kendall_tau_b(x, y);
    if (!want) continue;
    EXPECT_EQ(kendall_tau_b(x, y), *want);
  }
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman_rho({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_NEAR(spearman_rho({1, 2, 3}, {1, 3, 2}), 0.5, 1e-15);
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, MatchesRankOracleWithTies) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> v(0, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(2 + t % 25), y(x.size());
    for (auto& a : x) a = v(rng);
    for (auto& a : y) a = v(rng);
    const auto want = oracle::spearman_rho(x, y);
    if (!want) continue;
    EXPECT_EQ(spearman_rho(x, y), *want);
  }
}

TEST(Upsample, StepHold) {
  EXPECT_EQ(upsample_step_hold({1, 2}, 5), (std::vector<double>{1, 1, 1, 2, 2}));
  EXPECT_EQ(upsample_step_hold({1, 2, 3}, 6), (std::vector<double>{1, 1, 2, 2, 3, 3}));
  EXPECT_EQ(downsample_block_mean({1, 1, 2, 4, 3, 3}, 3), (std::vector<double>{1, 3, 3}));
}

TEST(Annotators, Examples) {
  const std::vector<double> p{0.1, 0.5, 0.3, 0.9};
  auto r = correlation_vs_annotators(p, {p});
  EXPECT_EQ(r.tau, 1.0);
  EXPECT_DOUBLE_EQ(r.rho, 1.0);
  r = correlation_vs_annotators(p, {p, {0.9, 0.5, 0.7, 0.1}});
  EXPECT_NEAR(r.tau, 0.0, 1e-15);
  EXPECT_NEAR(r.rho, 0.0, 1e-15);
  EXPECT_THROW((void)correlation_vs_annotators(p, {{1, 2, 3}}), Error);
}

TEST(Annotators, MatchesPerAnnotatorLoop) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> k(1, 5);
  std::vector<double> p(12);
  for (auto& v : p) v = u(rng);
  std::vector<std::vector<double>> ann(4, std::vector<double>(12));
  for (auto& a : ann)
    for (auto& v : a) v = k(rng);
  const auto r = correlation_vs_annotators(p, ann);
  double st = 0, sr = 0;
  for (const auto& a : ann) {
    st += kendall_tau_b(p, a);
    sr += spearman_rho(p, a);
  }
  EXPECT_EQ(r.tau, st / 4);
  EXPECT_EQ(r.rho, sr / 4);
}

TEST(PrecisionRecall, Examples) {
  const std::vector<bool> a{true, false, true, true};
  auto [p, r] = personalization_pr(a, a);
  EXPECT_EQ(p, 1.0);
  EXPECT_EQ(r, 1.0);
  std::tie(p, r) = personalization_pr({true, true, false, false}, {false, false, true, true});
  EXPECT_EQ(p, 0.0);
  EXPECT_EQ(r, 0.0);
  try {
    (void)personalization_pr({false, false}, {true, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySelection);
  }
  try {
    (void)personalization_pr({true, false}, {false, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyGroundTruth);
  }
}
