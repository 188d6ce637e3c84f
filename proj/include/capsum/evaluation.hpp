#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capsum/error.hpp"

namespace capsum {

namespace detail {

inline void check_pair(std::size_t nx, std::size_t ny) {
  if (nx != ny) throw Error(Errc::LengthMismatch, "sequences differ in length: " + std::to_string(nx) + " vs " + std::to_string(ny));
  if (nx < 2) throw Error(Errc::DegenerateInput, "rank correlation needs at least 2 elements");
}

inline std::int64_t tied_pairs(const std::vector<double>& sorted) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Sorts v[lo, hi) ascending, returning the number of inversions removed.
inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace detail

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x.size(), y.size());
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const std::int64_t n1 = detail::tied_pairs(xs);

  std::int64_t n3 = 0;  // tied in both
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && xs[i] == xs[i - 1] && ys[i] == ys[i - 1]) {
      ++run;
    } else {
      n3 += run * (run - 1) / 2;
      run = 1;
    }
  }

  std::vector<double> buf(n);
  const std::int64_t discordant = detail::merge_count(ys, buf, 0, n);
  const std::int64_t n2 = detail::tied_pairs(ys);  // ys is now sorted

  const std::int64_t not_tied_x = n0 - n1;
  const std::int64_t not_tied_y = n0 - n2;
  if (not_tied_x == 0 || not_tied_y == 0) throw Error(Errc::DegenerateInput, "a sequence is constant");
  const std::int64_t concordant_minus_discordant = n0 - n1 - n2 + n3 - 2 * discordant;
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(not_tied_x) * static_cast<double>(not_tied_y));
}

/// 1-based ranks with ties sharing their mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x.size(), y.size());
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(Errc::DegenerateInput, "a sequence is constant");
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman's rho: Pearson correlation of average ranks.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x.size(), y.size());
  return pearson(average_ranks(x), average_ranks(y));
}

/// Expands n downsampled scores to n_original frames; original frame f
/// holds the score of downsampled frame floor(f * n / n_original).
inline std::vector<double> upsample_step_hold(const std::vector<double>& scores, std::size_t n_original) {
  if (scores.empty()) throw Error(Errc::LengthMismatch, "no scores to upsample");
  std::vector<double> out(n_original);
  const auto n = static_cast<std::uint64_t>(scores.size());
  for (std::size_t f = 0; f < n_original; ++f) out[f] = scores[static_cast<std::size_t>(f * n / n_original)];
  return out;
}

/// Inverse of upsample_step_hold for annotations: each downsampled frame
/// gets the mean of the original frames it covers.
inline std::vector<double> downsample_block_mean(const std::vector<double>& values, std::size_t n) {
  const std::size_t n_original = values.size();
  if (n == 0 || n_original == 0) throw Error(Errc::LengthMismatch, "empty sequence");
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t f = 0; f < n_original; ++f) {
    const auto i = static_cast<std::size_t>(static_cast<std::uint64_t>(f) * n / n_original);
    sum[i] += values[f];
    ++count[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    sum[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : values[std::min(n_original - 1, i * n_original / n)];
  return sum;
}

struct AnnotatorCorrelation {
  double tau = 0.0;
  double rho = 0.0;
};

struct EvalReport {
  double tau = 0.0;
  double rho = 0.0;
  std::vector<AnnotatorCorrelation> per_annotator;
  std::optional<double> precision;
  std::optional<double> recall;
};

/// Correlates the prediction with every annotator and averages.
inline EvalReport correlation_vs_annotators(const std::vector<double>& predicted,
                                            const std::vector<std::vector<double>>& annotations) {
  if (annotations.empty()) throw Error(Errc::LengthMismatch, "no annotators");
  EvalReport r;
  double st = 0.0, sr = 0.0;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    if (annotations[a].size() != predicted.size())
      throw Error(Errc::LengthMismatch, "annotator " + std::to_string(a) + " has " + std::to_string(annotations[a].size()) +
                                            " frames, prediction has " + std::to_string(predicted.size()));
    AnnotatorCorrelation c{kendall_tau_b(predicted, annotations[a]), spearman_rho(predicted, annotations[a])};
    st += c.tau;
    sr += c.rho;
    r.per_annotator.push_back(c);
  }
  r.tau = st / static_cast<double>(annotations.size());
  r.rho = sr / static_cast<double>(annotations.size());
  return r;
}

/// precision = |P & Q| / |P|, recall = |P & Q| / |Q|
inline std::pair<double, double> personalization_pr(const std::vector<bool>& selected,
                                                    const std::vector<bool>& ground_truth) {
  if (selected.size() != ground_truth.size())
    throw Error(Errc::LengthMismatch, "selection and ground truth differ in length");
  std::size_t p = 0, q = 0, both = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    p += selected[i];
    q += ground_truth[i];
    both += selected[i] && ground_truth[i];
  }
  if (p == 0) throw Error(Errc::EmptySelection, "no frames selected");
  if (q == 0) throw Error(Errc::EmptyGroundTruth, "ground truth is empty");
  return {static_cast<double>(both) / static_cast<double>(p), static_cast<double>(both) / static_cast<double>(q)};
}

}  // namespace capsum
