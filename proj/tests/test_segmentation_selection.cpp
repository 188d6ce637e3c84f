#include <gtest/gtest.h>

#include <random>

#include "capsum/segmentation.hpp"
#include "capsum/selection.hpp"
#include "test_util.hpp"

using namespace capsum;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::ParseError;
}

// sum over segments of sum ||x - mean||^2, in feature space
double direct_scatter(const Matrix& x, const SceneSegmentation& seg) {
  double total = 0;
  for (std::size_t j = 0; j < seg.n_scenes(); ++j) {
    Vector mu(x.cols(), 0.0);
    for (std::size_t i = seg.scene_begin(j); i < seg.scene_end(j); ++i)
      for (std::size_t k = 0; k < x.cols(); ++k) mu[k] += x(i, k);
    for (double& v : mu) v /= static_cast<double>(seg.scene_length(j));
    for (std::size_t i = seg.scene_begin(j); i < seg.scene_end(j); ++i)
      for (std::size_t k = 0; k < x.cols(); ++k) total += (x(i, k) - mu[k]) * (x(i, k) - mu[k]);
  }
  return total;
}

Matrix normalized(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm2(m.row(i));
    for (auto& v : m.row(i)) v /= n;
  }
  return m;
}

}  // namespace

TEST(Kernel, Examples) {
  const auto same = kernel_matrix(Matrix::from_rows({{1, 0}, {1, 0}}), {});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(same(i, j), 1.0, 1e-15);
  EXPECT_EQ(kernel_matrix(Matrix::from_rows({{1, 0}, {0, 1}}), {})(0, 1), 0.0);

  std::mt19937_64 rng(1);
  const auto m = test::random_matrix(4, 3, rng);
  const auto k = kernel_matrix(m, {});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(k(i, j), cosine(m.row(i), m.row(j)), 1e-15);
  KernelConfig lin;
  lin.kernel = KernelType::linear;
  EXPECT_NEAR(kernel_matrix(m, lin)(1, 2), dot(m.row(1), m.row(2)), 1e-15);
}

TEST(Scatter, MatchesFeatureSpaceDefinition) {
  std::mt19937_64 rng(6);
  KernelConfig lin;
  lin.kernel = KernelType::linear;
  for (int t = 0; t < 30; ++t) {
    const auto m = test::random_matrix(12, 3, rng);
    const ScatterTable table(kernel_matrix(m, lin));
    const SceneSegmentation seg({3, 4, 9}, 12);
    EXPECT_NEAR(table.objective(seg), direct_scatter(m, seg), 1e-10);
  }
}

TEST(Kts, SingleScene) {
  std::mt19937_64 rng(2);
  const auto s = kts_segment(test::random_matrix(5, 3, rng), {}, std::size_t{1});
  EXPECT_EQ(s.n_scenes(), 1u);
  EXPECT_TRUE(s.boundaries().empty());
}

TEST(Kts, TwoOrthogonalBlocks) {
  const auto m = Matrix::from_rows({{1, 0}, {1, 0}, {1, 0}, {0, 1}, {0, 1}, {0, 1}});
  EXPECT_EQ(kts_segment(m, {}, std::size_t{2}).boundaries(), (std::vector<std::size_t>{3}));
  EXPECT_EQ(kts_segment(m, {}).boundaries(), (std::vector<std::size_t>{3}));
}

TEST(Kts, TenByFourThreeScenesBruteForce) {
  std::mt19937_64 rng(10);
  const auto m = test::random_matrix(10, 4, rng);
  const auto r = kts_solve(m, {}, std::size_t{3});
  const ScatterTable table(kernel_matrix(m, {}));
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_b;
  for (std::size_t a = 1; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      const double v = table.objective(SceneSegmentation({a, b}, 10));
      if (v < best) {
        best = v;
        best_b = {a, b};
      }
    }
  EXPECT_EQ(r.objective, best);
  EXPECT_EQ(r.segmentation.boundaries(), best_b);
}

TEST(Kts, RejectsBadSceneCounts) {
  std::mt19937_64 rng(2);
  const auto m = test::random_matrix(5, 3, rng);
  EXPECT_EQ(code_of([&] { (void)kts_segment(m, {}, std::size_t{0}); }), Errc::InvalidSceneCount);
  EXPECT_EQ(code_of([&] { (void)kts_segment(m, {}, std::size_t{6}); }), Errc::InvalidSceneCount);
  KernelConfig c;
  c.max_scenes = 2;
  EXPECT_EQ(code_of([&] { (void)kts_segment(m, c, std::size_t{3}); }), Errc::InvalidSceneCount);
}

TEST(Kts, ScaleInvariantUnderCosineKernel) {
  std::mt19937_64 rng(17);
  auto m = test::random_matrix(15, 4, rng);
  const auto a = kts_segment(m, {});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (auto& v : m.row(i)) v *= 4.0;  // power of two keeps cosines bit-identical
  EXPECT_EQ(kts_segment(m, {}), a);
}

TEST(Kts, RecoversNoisyBlocks) {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> g(0, 0.05);
  const std::vector<std::size_t> lengths{5, 7, 4, 6};
  Matrix m(22, 8);
  std::size_t row = 0;
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t k = 0; k < lengths[b]; ++k, ++row)
      for (std::size_t c = 0; c < 8; ++c) m(row, c) = (c == b ? 1.0 : 0.0) + g(rng);
  const auto seg = kts_segment(normalized(m), {});
  EXPECT_EQ(seg.boundaries(), (std::vector<std::size_t>{5, 12, 16}));
}

// ---------------------------------------------------------------------------
// selection

TEST(SceneScores, Examples) {
  const FrameScores s({0.2, 0.4, 0.9});
  EXPECT_NEAR(scene_scores(s, SceneSegmentation::single(3))[0], s.mean(), 1e-15);
  EXPECT_EQ(scene_scores(FrameScores({1, 0, 1, 0}), SceneSegmentation({2}, 4)), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(code_of([&] { (void)scene_scores(s, SceneSegmentation({2}, 4)); }), Errc::LengthMismatch);
}

TEST(Knapsack, Examples) {
  auto sel = knapsack_select({0.9, 0.8, 0.7}, {4, 3, 2}, 5.0 / 9.0, 9);
  EXPECT_EQ(sel.budget_frames, 5u);
  EXPECT_EQ(sel.selected_scenes, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(sel.total_value, 1.5, 1e-15);

  sel = knapsack_select({0.9, 0.8, 0.7}, {4, 3, 2}, 1.0, 9);
  EXPECT_EQ(sel.selected_scenes, (std::vector<std::size_t>{0, 1, 2}));

  sel = knapsack_select({0.9, 0.8}, {4, 6}, 0.05, 10);
  EXPECT_EQ(sel.budget_frames, 0u);
  EXPECT_TRUE(sel.selected_scenes.empty());
  EXPECT_EQ(sel.total_value, 0.0);
  EXPECT_EQ(sel.bitstring(), "0000000000");

  EXPECT_EQ(code_of([] { (void)budget_frames(0.0, 10); }), Errc::InvalidBudget);
  EXPECT_EQ(code_of([] { (void)budget_frames(1.5, 10); }), Errc::InvalidBudget);
  EXPECT_EQ(budget_frames(0.29, 100), 29u);
  EXPECT_EQ(budget_frames(0.15, 36), 5u);
}

TEST(Knapsack, TieBreaks) {
  // equal value: fewer frames wins
  auto sel = knapsack_select({0.5, 0.25, 0.25}, {3, 1, 1}, 0.6, 5);
  EXPECT_EQ(sel.selected_scenes, (std::vector<std::size_t>{1, 2}));
  // equal value and frames: lexicographically smallest set
  sel = knapsack_select({0.5, 0.5, 0.5}, {2, 2, 2}, 2.0 / 6.0, 6);
  EXPECT_EQ(sel.selected_scenes, (std::vector<std::size_t>{0}));
  sel = knapsack_select({0.25, 0.5, 0.25, 0.5}, {1, 2, 1, 2}, 0.5, 6);
  EXPECT_EQ(sel.selected_scenes, (std::vector<std::size_t>{0, 1}));
}

TEST(FrameMask, Examples) {
  const SceneSegmentation seg({2}, 4);
  SummarySelection sel;
  sel.budget_frames = 4;
  EXPECT_EQ(selection_to_frame_mask(sel, seg), (std::vector<bool>(4, false)));
  sel.selected_scenes = {0, 1};
  EXPECT_EQ(selection_to_frame_mask(sel, seg), (std::vector<bool>(4, true)));
  sel.selected_scenes = {1};
  EXPECT_EQ(selection_to_frame_mask(sel, seg), (std::vector<bool>{false, false, true, true}));
  sel.budget_frames = 1;
  EXPECT_EQ(code_of([&] { (void)selection_to_frame_mask(sel, seg); }), Errc::InconsistentSelection);
  sel.budget_frames = 4;
  sel.selected_scenes = {2};
  EXPECT_EQ(code_of([&] { (void)selection_to_frame_mask(sel, seg); }), Errc::InconsistentSelection);
}

TEST(FrameMask, AgreesWithKnapsackMask) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    const SceneSegmentation seg({3, 5, 9, 10}, 14);
    std::vector<double> v(5);
    for (auto& x : v) x = u(rng);
    const auto sel = knapsack_select(v, seg, 0.4);
    EXPECT_EQ(selection_to_frame_mask(sel, seg), sel.frame_mask);
    EXPECT_LE(sel.selected_frames(), sel.budget_frames);
  }
}
