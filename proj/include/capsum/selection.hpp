#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "capsum/error.hpp"
#include "capsum/scene.hpp"
#include "capsum/scoring.hpp"

namespace capsum {

inline constexpr double kDefaultBudgetRatio = 0.15;

struct SummarySelection {
  std::vector<std::size_t> selected_scenes;  // ascending
  std::vector<bool> frame_mask;
  std::size_t budget_frames = 0;
  double total_value = 0.0;

  std::size_t selected_frames() const {
    return static_cast<std::size_t>(std::count(frame_mask.begin(), frame_mask.end(), true));
  }

  /// '1'/'0' per frame.
  std::string bitstring() const {
    std::string s;
    s.reserve(frame_mask.size());
    for (bool b : frame_mask) s.push_back(b ? '1' : '0');
    return s;
  }

  bool operator==(const SummarySelection&) const = default;
};

/// Mean frame score of every scene.
inline std::vector<double> scene_scores(const FrameScores& scores, const SceneSegmentation& seg) {
  if (seg.n_frames() != scores.size())
    throw Error(Errc::LengthMismatch, "segmentation covers " + std::to_string(seg.n_frames()) + " frames, got " +
                                          std::to_string(scores.size()) + " scores");
  std::vector<double> out(seg.n_scenes());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double sum = 0.0;
    for (std::size_t i = seg.scene_begin(j); i < seg.scene_end(j); ++i) sum += scores[i];
    out[j] = sum / static_cast<double>(seg.scene_length(j));
  }
  return out;
}

/// floor(ratio * n). A 1e-9 slack absorbs representation error in products
/// such as 0.29 * 100.
inline std::size_t budget_frames(double budget_ratio, std::size_t n) {
  if (!(budget_ratio > 0.0 && budget_ratio <= 1.0))
    throw Error(Errc::InvalidBudget, "budget ratio must lie in (0,1], got " + std::to_string(budget_ratio));
  const auto b = static_cast<std::size_t>(std::floor(budget_ratio * static_cast<double>(n) + 1e-9));
  return std::min(b, n);
}

/// Exact 0/1 knapsack over scenes: maximize the summed scene values with
/// total length <= floor(budget_ratio * n). Ties go to fewer frames, then to
/// the lexicographically smallest index set.
inline SummarySelection knapsack_select(const std::vector<double>& values, const std::vector<std::size_t>& weights,
                                        double budget_ratio, std::size_t n) {
  const std::size_t q = values.size();
  if (weights.size() != q) throw Error(Errc::LengthMismatch, "values and weights differ in length");
  for (auto w : weights)
    if (w == 0) throw Error(Errc::LengthMismatch, "scene weights must be positive");
  if (std::accumulate(weights.begin(), weights.end(), std::size_t{0}) != n)
    throw Error(Errc::LengthMismatch, "scene weights do not sum to n = " + std::to_string(n));
  for (double v : values)
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, "non-finite scene value");

  SummarySelection sel;
  sel.budget_frames = budget_frames(budget_ratio, n);
  const std::size_t cap = sel.budget_frames;

  struct Cell {
    double value = 0.0;
    std::size_t frames = 0;
  };
  auto better = [](const Cell& a, const Cell& b) {
    return a.value > b.value || (a.value == b.value && a.frames < b.frames);
  };

  // best[i][w]: optimum over items i..q-1 with capacity w.
  std::vector<std::vector<Cell>> best(q + 1, std::vector<Cell>(cap + 1));
  for (std::size_t i = q; i-- > 0;) {
    for (std::size_t w = 0; w <= cap; ++w) {
      Cell skip = best[i + 1][w];
      if (weights[i] <= w) {
        const Cell& rest = best[i + 1][w - weights[i]];
        Cell take{values[i] + rest.value, weights[i] + rest.frames};
        best[i][w] = better(skip, take) ? skip : take;
      } else {
        best[i][w] = skip;
      }
    }
  }

  std::size_t w = cap;
  for (std::size_t i = 0; i < q; ++i) {
    if (weights[i] > w) continue;
    const Cell& rest = best[i + 1][w - weights[i]];
    const Cell take{values[i] + rest.value, weights[i] + rest.frames};
    if (take.value == best[i][w].value && take.frames == best[i][w].frames) {
      sel.selected_scenes.push_back(i);
      w -= weights[i];
    }
  }

  sel.frame_mask.assign(n, false);
  std::size_t begin = 0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < q; ++i) {
    if (next < sel.selected_scenes.size() && sel.selected_scenes[next] == i) {
      std::fill(sel.frame_mask.begin() + static_cast<std::ptrdiff_t>(begin),
                sel.frame_mask.begin() + static_cast<std::ptrdiff_t>(begin + weights[i]), true);
      sel.total_value += values[i];
      ++next;
    }
    begin += weights[i];
  }
  return sel;
}

inline SummarySelection knapsack_select(const std::vector<double>& values, const SceneSegmentation& seg,
                                        double budget_ratio = kDefaultBudgetRatio) {
  return knapsack_select(values, seg.scene_lengths(), budget_ratio, seg.n_frames());
}

/// Expands selected scenes into a per-frame mask.
inline std::vector<bool> selection_to_frame_mask(const SummarySelection& sel, const SceneSegmentation& seg) {
  std::vector<bool> mask(seg.n_frames(), false);
  std::size_t prev = 0;
  for (std::size_t k = 0; k < sel.selected_scenes.size(); ++k) {
    const auto j = sel.selected_scenes[k];
    if (j >= seg.n_scenes()) throw Error(Errc::InconsistentSelection, "scene " + std::to_string(j) + " out of range");
    if (k > 0 && j <= prev) throw Error(Errc::InconsistentSelection, "selected scenes not strictly increasing");
    prev = j;
    for (std::size_t i = seg.scene_begin(j); i < seg.scene_end(j); ++i) mask[i] = true;
  }
  const auto pop = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (pop > sel.budget_frames)
    throw Error(Errc::InconsistentSelection, "selection uses " + std::to_string(pop) + " frames, budget is " +
                                                 std::to_string(sel.budget_frames));
  if (!sel.frame_mask.empty() && sel.frame_mask != mask)
    throw Error(Errc::InconsistentSelection, "stored frame mask disagrees with the segmentation");
  return mask;
}

}  // namespace capsum
