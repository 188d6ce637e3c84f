#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "capsum/error.hpp"

namespace capsum {

/// Partition of frames [0, n) into contiguous scenes. `boundaries` holds the
/// first frame of every scene except the first.
class SceneSegmentation {
 public:
  SceneSegmentation() = default;
  SceneSegmentation(std::vector<std::size_t> boundaries, std::size_t n_frames)
      : boundaries_(std::move(boundaries)), n_frames_(n_frames) {
    if (n_frames_ == 0) throw Error(Errc::InvalidSceneCount, "segmentation over zero frames");
    for (std::size_t i = 0; i < boundaries_.size(); ++i) {
      const auto b = boundaries_[i];
      if (b == 0 || b >= n_frames_)
        throw Error(Errc::InvalidSceneCount, "boundary " + std::to_string(b) + " outside (0, " + std::to_string(n_frames_) + ")");
      if (i > 0 && b <= boundaries_[i - 1]) throw Error(Errc::InvalidSceneCount, "boundaries not strictly increasing");
    }
  }

  static SceneSegmentation single(std::size_t n_frames) { return {{}, n_frames}; }

  std::size_t n_frames() const noexcept { return n_frames_; }
  std::size_t n_scenes() const noexcept { return boundaries_.size() + 1; }
  const std::vector<std::size_t>& boundaries() const noexcept { return boundaries_; }

  std::size_t scene_begin(std::size_t j) const { return j == 0 ? 0 : boundaries_.at(j - 1); }
  std::size_t scene_end(std::size_t j) const { return j == boundaries_.size() ? n_frames_ : boundaries_.at(j); }
  std::size_t scene_length(std::size_t j) const { return scene_end(j) - scene_begin(j); }

  std::vector<std::size_t> scene_lengths() const {
    std::vector<std::size_t> out(n_scenes());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = scene_length(j);
    return out;
  }

  /// Scene index of every frame.
  std::vector<std::size_t> frame_labels() const {
    std::vector<std::size_t> out(n_frames_);
    for (std::size_t j = 0; j < n_scenes(); ++j)
      for (std::size_t i = scene_begin(j); i < scene_end(j); ++i) out[i] = j;
    return out;
  }

  bool operator==(const SceneSegmentation&) const = default;

 private:
  std::vector<std::size_t> boundaries_;
  std::size_t n_frames_ = 0;
};

}  // namespace capsum
