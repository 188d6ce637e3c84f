#pragma once

// Frame scoring, the loss family, and video diversity.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capsum/embedding_io.hpp"
#include "capsum/error.hpp"
#include "capsum/matrix.hpp"
#include "capsum/scene.hpp"

namespace capsum {

/// Per-frame scores S_i in [0,1] and their arithmetic mean.
class FrameScores {
 public:
  FrameScores() = default;
  explicit FrameScores(std::vector<double> scores) : scores_(std::move(scores)) {
    if (scores_.empty()) throw Error(Errc::LengthMismatch, "frame scores need at least one frame");
    double sum = 0.0;
    for (double s : scores_) {
      if (!(s >= 0.0 && s <= 1.0)) throw Error(Errc::NonFiniteLoss, "frame score outside [0,1]: " + std::to_string(s));
      sum += s;
    }
    mean_ = sum / static_cast<double>(scores_.size());
  }

  std::size_t size() const noexcept { return scores_.size(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  const std::vector<double>& scores() const noexcept { return scores_; }
  double mean() const noexcept { return mean_; }

  bool operator==(const FrameScores&) const = default;

 private:
  std::vector<double> scores_;
  double mean_ = 0.0;
};

/// S = (1 + cos(a, b)) / 2
inline double similarity_score(std::span<const double> a, std::span<const double> b) {
  return 0.5 * (1.0 + cosine(a, b));
}

/// One cosine per caption row against the summary embedding. When
/// `similarity_evals` is given it is incremented once per evaluation.
inline FrameScores frame_scores(const Matrix& caption_embs, std::span<const double> summary_emb,
                                std::size_t* similarity_evals = nullptr) {
  if (caption_embs.cols() != summary_emb.size())
    throw Error(Errc::DimensionMismatch, "caption dim " + std::to_string(caption_embs.cols()) + " vs summary dim " +
                                             std::to_string(summary_emb.size()));
  std::vector<double> s(caption_embs.rows());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = similarity_score(caption_embs.row(i), summary_emb);
    if (similarity_evals) ++*similarity_evals;
  }
  return FrameScores(std::move(s));
}

inline FrameScores frame_scores(const EmbeddingMatrix& caption_embs, std::span<const double> summary_emb,
                                std::size_t* similarity_evals = nullptr) {
  return frame_scores(caption_embs.matrix(), summary_emb, similarity_evals);
}

// ---------------------------------------------------------------------------
// Losses

enum class LossMode { pdl, fixed_alpha, margin_only, sparsity_only, awl };

inline std::string_view to_string(LossMode m) {
  switch (m) {
    case LossMode::pdl: return "pdl";
    case LossMode::fixed_alpha: return "fixed_alpha";
    case LossMode::margin_only: return "margin_only";
    case LossMode::sparsity_only: return "sparsity_only";
    case LossMode::awl: return "awl";
  }
  return "?";
}

inline LossMode parse_loss_mode(std::string_view s) {
  for (auto m : {LossMode::pdl, LossMode::fixed_alpha, LossMode::margin_only, LossMode::sparsity_only, LossMode::awl})
    if (to_string(m) == s) return m;
  throw Error(Errc::ConfigError, "unknown loss mode '" + std::string(s) + "'");
}

struct LossConfig {
  double margin = 0.11;
  double epsilon = 0.3;
  double delta = 0.35;
  std::optional<double> alpha;
  LossMode mode = LossMode::pdl;
  // initial observation-noise scalers for awl mode
  double sigma1 = 1.0;
  double sigma2 = 1.0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
    if (!(margin > 0.0 && margin < 1.0)) fail("margin must lie in (0,1)");
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail("epsilon must lie in (0,1)");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0,1)");
    if (mode == LossMode::fixed_alpha && (!alpha || !std::isfinite(*alpha) || *alpha < 0.0))
      fail("fixed_alpha mode needs a nonnegative alpha");
    if (mode == LossMode::awl && (!(sigma1 > 0.0) || !(sigma2 > 0.0))) fail("awl sigmas must be positive");
  }
};

/// (1/n) sum_i max(0, m - |S_i - S_avg|)
inline double improved_margin_loss(const FrameScores& s, double margin) {
  double acc = 0.0;
  for (double v : s.scores()) acc += std::fmax(0.0, -std::fabs(v - s.mean()) + margin);
  return acc / static_cast<double>(s.size());
}

/// |mean(S) - epsilon|
inline double sparsity_loss(const FrameScores& s, double epsilon) { return std::fabs(s.mean() - epsilon); }

/// Weight on the sparsity term as a function of diversity D: zero for
/// diverse videos (D >= delta), (1-D) e^(1-D) otherwise.
inline double lambda_of_diversity(double diversity, double delta) {
  if (diversity >= delta) return 0.0;
  return (1.0 - diversity) * std::exp(1.0 - diversity);
}

/// 1/(2 s1^2) L_m + 1/(2 s2^2) L_s + ln s1 + ln s2
inline double awl_loss(double margin_term, double sparsity_term, double sigma1, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw Error(Errc::NonPositiveSigma, "awl sigmas must be positive");
  return margin_term / (2.0 * sigma1 * sigma1) + sparsity_term / (2.0 * sigma2 * sigma2) + std::log(sigma1) +
         std::log(sigma2);
}

struct LossBreakdown {
  double margin_term = 0.0;
  double sparsity_term = 0.0;
  double lambda = 0.0;  // weight applied to the sparsity term
  double total = 0.0;
};

/// Evaluates the configured objective. `diversity` is required in pdl mode.
/// awl mode uses cfg.sigma1 / cfg.sigma2.
inline LossBreakdown pdl_loss(const FrameScores& s, const LossConfig& cfg, std::optional<double> diversity) {
  LossBreakdown b;
  b.margin_term = improved_margin_loss(s, cfg.margin);
  b.sparsity_term = sparsity_loss(s, cfg.epsilon);
  switch (cfg.mode) {
    case LossMode::pdl:
      if (!diversity) throw Error(Errc::MissingDiversity, "pdl mode needs the video diversity D");
      b.lambda = lambda_of_diversity(*diversity, cfg.delta);
      b.total = b.margin_term + b.lambda * b.sparsity_term;
      break;
    case LossMode::fixed_alpha:
      if (!cfg.alpha) throw Error(Errc::ConfigError, "fixed_alpha mode needs alpha");
      b.lambda = *cfg.alpha;
      b.total = b.margin_term + b.lambda * b.sparsity_term;
      break;
    case LossMode::margin_only:
      b.lambda = 0.0;
      b.total = b.margin_term;
      break;
    case LossMode::sparsity_only:
      b.lambda = 1.0;
      b.total = b.sparsity_term;
      break;
    case LossMode::awl:
      b.lambda = 1.0 / (2.0 * cfg.sigma2 * cfg.sigma2);
      b.total = awl_loss(b.margin_term, b.sparsity_term, cfg.sigma1, cfg.sigma2);
      break;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Diversity

struct DiversityReport {
  Matrix scene_means;                 // q x d
  std::vector<double> adjacent_sims;  // q-1 cosines between consecutive scene means
  double sim_scene = 1.0;
  double diversity = 0.0;
};

/// Row j is the mean embedding of the frames in scene j.
inline Matrix scene_mean_embeddings(const Matrix& embs, const SceneSegmentation& seg) {
  if (seg.n_frames() != embs.rows())
    throw Error(Errc::LengthMismatch, "segmentation covers " + std::to_string(seg.n_frames()) + " frames, matrix has " +
                                          std::to_string(embs.rows()));
  Matrix means(seg.n_scenes(), embs.cols());
  for (std::size_t j = 0; j < seg.n_scenes(); ++j) {
    const std::size_t p = seg.scene_length(j);
    if (p == 0) throw Error(Errc::EmptyScene, "scene " + std::to_string(j) + " is empty");
    auto out = means.row(j);
    for (std::size_t i = seg.scene_begin(j); i < seg.scene_end(j); ++i) {
      auto r = embs.row(i);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += r[k];
    }
    for (double& v : out) v /= static_cast<double>(p);
  }
  return means;
}

inline Matrix scene_mean_embeddings(const EmbeddingMatrix& embs, const SceneSegmentation& seg) {
  return scene_mean_embeddings(embs.matrix(), seg);
}

/// D = 1 - mean_k cos(mean_k, mean_{k+1}). Needs at least two scenes.
inline DiversityReport diversity_score(Matrix scene_means) {
  const std::size_t q = scene_means.rows();
  if (q < 2) throw Error(Errc::TooFewScenes, "diversity needs at least 2 scenes, got " + std::to_string(q));
  DiversityReport r;
  r.adjacent_sims.reserve(q - 1);
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < q; ++k) {
    const double c = cosine(scene_means.row(k), scene_means.row(k + 1));
    r.adjacent_sims.push_back(c);
    sum += c;
  }
  r.sim_scene = sum / static_cast<double>(q - 1);
  r.diversity = 1.0 - r.sim_scene;
  r.scene_means = std::move(scene_means);
  return r;
}

/// Diversity of a segmented video. A single-scene video has no adjacent
/// pairs and is reported with D = 0 (sim_scene = 1).
inline DiversityReport video_diversity(const Matrix& embs, const SceneSegmentation& seg) {
  auto means = scene_mean_embeddings(embs, seg);
  if (means.rows() < 2) {
    DiversityReport r;
    r.scene_means = std::move(means);
    return r;
  }
  return diversity_score(std::move(means));
}

}  // namespace capsum
