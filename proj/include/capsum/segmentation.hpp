#pragma once

// Kernel temporal segmentation: exact dynamic programming over change
// points minimizing total within-scene kernel scatter, with penalized model
// selection of the scene count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capsum/embedding_io.hpp"
#include "capsum/error.hpp"
#include "capsum/matrix.hpp"
#include "capsum/scene.hpp"

namespace capsum {

enum class KernelType { linear, cosine };

inline std::string_view to_string(KernelType k) { return k == KernelType::linear ? "linear" : "cosine"; }

inline KernelType parse_kernel_type(std::string_view s) {
  if (s == "linear") return KernelType::linear;
  if (s == "cosine") return KernelType::cosine;
  throw Error(Errc::ConfigError, "unknown kernel '" + std::string(s) + "'");
}

struct KernelConfig {
  KernelType kernel = KernelType::cosine;
  std::size_t max_scenes = 20;  // clamped to n at run time
  double penalty_weight = 1.0;
};

/// Gram matrix of the rows (cosine kernel normalizes rows first).
inline Matrix kernel_matrix(const Matrix& embs, const KernelConfig& cfg) {
  const std::size_t n = embs.rows();
  Matrix x = embs;
  if (cfg.kernel == KernelType::cosine) {
    for (std::size_t i = 0; i < n; ++i) {
      const double nr = norm2(x.row(i));
      if (!(nr > 0.0)) throw Error(Errc::ZeroNormVector, "row " + std::to_string(i) + " has zero norm");
      for (double& v : x.row(i)) v /= nr;
    }
  }
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = dot(x.row(i), x.row(i));
    for (std::size_t j = i + 1; j < n; ++j) k(i, j) = k(j, i) = dot(x.row(i), x.row(j));
  }
  return k;
}

/// O(1) within-segment scatter queries over a kernel matrix:
///   scatter[s, e) = sum_i K_ii - (1/(e-s)) sum_{i,j} K_ij
/// which equals sum_i ||phi(x_i) - mean||^2 in feature space.
class ScatterTable {
 public:
  explicit ScatterTable(const Matrix& k) : n_(k.rows()), block_((n_ + 1) * (n_ + 1), 0.0), diag_(n_ + 1, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      diag_[i + 1] = diag_[i] + k(i, i);
      for (std::size_t j = 0; j < n_; ++j)
        at(i + 1, j + 1) = k(i, j) + at(i, j + 1) + at(i + 1, j) - at(i, j);
    }
  }

  std::size_t size() const noexcept { return n_; }

  double scatter(std::size_t begin, std::size_t end) const {
    const double mass = at(end, end) - at(begin, end) - at(end, begin) + at(begin, begin);
    const double v = (diag_[end] - diag_[begin]) - mass / static_cast<double>(end - begin);
    return v > 0.0 ? v : 0.0;
  }

  /// Sum of scene scatters, accumulated left to right.
  double objective(const SceneSegmentation& seg) const {
    double total = 0.0;
    for (std::size_t j = 0; j < seg.n_scenes(); ++j) total += scatter(seg.scene_begin(j), seg.scene_end(j));
    return total;
  }

 private:
  double& at(std::size_t i, std::size_t j) { return block_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return block_[i * (n_ + 1) + j]; }

  std::size_t n_;
  std::vector<double> block_;
  std::vector<double> diag_;
};

struct KtsResult {
  SceneSegmentation segmentation;
  double objective = 0.0;                  // scatter sum of the returned segmentation
  std::vector<double> objective_by_count;  // [q-1] -> optimal scatter with q scenes
};

/// Penalty added per candidate scene count during model selection.
inline double kts_penalty(std::size_t q, std::size_t n, double weight) {
  const double qd = static_cast<double>(q);
  return weight * qd * (std::log(static_cast<double>(n) / qd) + 1.0);
}

/// Optimal segmentation. With `scenes` given, exactly that many scenes;
/// otherwise the count in [1, min(n, max_scenes)] minimizing
/// objective + penalty, smallest count on ties. Among equal-objective
/// boundary lists the lexicographically smallest is returned.
inline KtsResult kts_solve(const Matrix& embs, const KernelConfig& cfg, std::optional<std::size_t> scenes = {}) {
  const std::size_t n = embs.rows();
  if (n == 0) throw Error(Errc::InvalidSceneCount, "cannot segment an empty sequence");
  const std::size_t q_cap = std::min(n, std::max<std::size_t>(1, cfg.max_scenes));
  if (scenes && (*scenes < 1 || *scenes > q_cap))
    throw Error(Errc::InvalidSceneCount, "requested " + std::to_string(*scenes) + " scenes for " + std::to_string(n) +
                                             " frames with max_scenes " + std::to_string(cfg.max_scenes));
  const std::size_t q_max = scenes ? *scenes : q_cap;

  const ScatterTable table(kernel_matrix(embs, cfg));
  constexpr double inf = std::numeric_limits<double>::infinity();

  // tail[k][s]: best cost of splitting [s, n) into exactly k scenes.
  std::vector<std::vector<double>> tail(q_max + 1, std::vector<double>(n + 1, inf));
  for (std::size_t s = 0; s < n; ++s) tail[1][s] = table.scatter(s, n);
  for (std::size_t k = 2; k <= q_max; ++k) {
    for (std::size_t s = 0; s + k <= n; ++s) {
      double best = inf;
      for (std::size_t b = s + 1; b + (k - 1) <= n; ++b) {
        const double c = table.scatter(s, b) + tail[k - 1][b];
        if (c < best) best = c;
      }
      tail[k][s] = best;
    }
  }

  auto reconstruct = [&](std::size_t q) {
    std::vector<std::size_t> bounds;
    std::size_t s = 0;
    for (std::size_t k = q; k > 1; --k) {
      const double target = tail[k][s];
      std::size_t pick = n;
      for (std::size_t b = s + 1; b + (k - 1) <= n; ++b) {
        if (table.scatter(s, b) + tail[k - 1][b] == target) {
          pick = b;
          break;
        }
      }
      bounds.push_back(pick);
      s = pick;
    }
    return SceneSegmentation(std::move(bounds), n);
  };

  KtsResult r;
  r.objective_by_count.resize(q_max);
  for (std::size_t q = 1; q <= q_max; ++q) r.objective_by_count[q - 1] = tail[q][0];

  std::size_t q_best = q_max;
  if (!scenes) {
    double best = inf;
    for (std::size_t q = 1; q <= q_max; ++q) {
      const double v = tail[q][0] + kts_penalty(q, n, cfg.penalty_weight);
      if (v < best) {
        best = v;
        q_best = q;
      }
    }
  }
  r.segmentation = reconstruct(q_best);
  r.objective = table.objective(r.segmentation);
  return r;
}

inline SceneSegmentation kts_segment(const Matrix& embs, const KernelConfig& cfg,
                                     std::optional<std::size_t> scenes = {}) {
  return kts_solve(embs, cfg, scenes).segmentation;
}

inline SceneSegmentation kts_segment(const EmbeddingMatrix& embs, const KernelConfig& cfg,
                                     std::optional<std::size_t> scenes = {}) {
  return kts_segment(embs.matrix(), cfg, scenes);
}

}  // namespace capsum
