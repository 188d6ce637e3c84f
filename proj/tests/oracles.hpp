#pragma once

// Slow reference implementations used by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "capsum/segmentation.hpp"
#include "capsum/selection.hpp"

namespace capsum::oracle {

/// tau-b from an O(n^2) scan of all pairs; nullopt when undefined.
inline std::optional<double> kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  std::int64_t conc = 0, disc = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  const std::int64_t a = conc + disc + ty;  // pairs untied in x
  const std::int64_t b = conc + disc + tx;  // pairs untied in y
  if (a == 0 || b == 0) return std::nullopt;
  return static_cast<double>(conc - disc) / std::sqrt(static_cast<double>(a) * static_cast<double>(b));
}

/// Mean rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> counted_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1.0 + static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1);
  }
  return r;
}

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

inline std::optional<double> spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(counted_ranks(x), counted_ranks(y));
}

struct KnapsackBest {
  std::vector<std::size_t> scenes;
  double value = 0.0;
  std::size_t frames = 0;
};

namespace detail {

// Sorted-list lexicographic order on index sets given as bitmasks.
inline bool lex_less(std::uint64_t a, std::uint64_t b) {
  if (a == b) return false;
  const std::uint64_t diff = a ^ b;
  const std::uint64_t low = diff & (~diff + 1);  // smallest index in exactly one set
  const std::uint64_t above = ~((low << 1) - 1);
  // the set holding `low` is smaller unless the other set ends before it
  return (a & low) ? (b & above) != 0 : (a & above) == 0;
}

}  // namespace detail

/// All 2^q subsets; ties by fewer frames, then lexicographically smallest
/// sorted index list. Values are folded from the highest index down, the
/// same association the DP uses.
inline KnapsackBest knapsack(const std::vector<double>& values, const std::vector<std::size_t>& weights,
                             std::size_t budget) {
  const std::size_t q = values.size();
  std::uint64_t best_mask = 0;
  double best_value = 0.0;
  std::size_t best_frames = 0;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << q); ++mask) {
    std::size_t frames = 0;
    double value = 0.0;
    for (std::size_t i = q; i-- > 0;)
      if (mask >> i & 1) {
        frames += weights[i];
        value = values[i] + value;
      }
    if (frames > budget) continue;
    if (value > best_value ||
        (value == best_value && (frames < best_frames || (frames == best_frames && detail::lex_less(mask, best_mask))))) {
      best_mask = mask;
      best_value = value;
      best_frames = frames;
    }
  }
  KnapsackBest best{{}, best_value, best_frames};
  for (std::size_t i = 0; i < q; ++i)
    if (best_mask >> i & 1) best.scenes.push_back(i);
  return best;
}

/// Minimum scatter over every boundary list with exactly q scenes; the
/// first (lexicographically smallest) minimizer is kept.
inline std::pair<double, std::vector<std::size_t>> kts_brute_force(const ScatterTable& table, std::size_t n,
                                                                   std::size_t q) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_b;
  std::vector<std::size_t> b(q - 1);
  for (std::size_t k = 0; k + 1 < q; ++k) b[k] = k + 1;
  while (true) {
    const double v = table.objective(SceneSegmentation(b, n));
    if (v < best) {
      best = v;
      best_b = b;
    }
    // next combination of q-1 boundaries from {1..n-1}, lexicographic order
    std::size_t k = q - 1;
    while (k > 0 && b[k - 1] == n - (q - k)) --k;
    if (k == 0) break;
    ++b[k - 1];
    for (std::size_t j = k; j + 1 < q; ++j) b[j] = b[j - 1] + 1;
  }
  return {best, best_b};
}

}  // namespace capsum::oracle
