#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsum/error.hpp"

namespace capsum {

struct CaptionRecord {
  std::uint64_t frame_index = 0;  // index into the downsampled sequence
  double time_sec = 0.0;          // position in the original video
  std::string text;               // generation prompt already stripped

  bool operator==(const CaptionRecord&) const = default;
};

struct VideoMetadata {
  std::optional<std::string> title;
  std::optional<std::string> genre;
  std::optional<std::string> query_category;

  bool operator==(const VideoMetadata&) const = default;
};

/// Everything known about one video. Large arrays live in EMB1 sidecars
/// referenced by path relative to the bundle file.
struct VideoBundle {
  std::string video_id;
  double fps_downsampled = 2.0;
  std::uint64_t n_frames_original = 0;
  std::vector<CaptionRecord> captions;
  VideoMetadata metadata;
  std::optional<std::string> summary_text;
  std::string embeddings_ref;
  std::optional<std::string> summary_embedding_ref;
  std::optional<std::string> features_ref;
  std::vector<std::vector<double>> annotations;

  std::size_t n() const noexcept { return captions.size(); }

  bool operator==(const VideoBundle&) const = default;
};

inline constexpr int kBundleFormatVersion = 1;

/// Throws SchemaError on the first violated invariant.
inline void validate_bundle(const VideoBundle& b) {
  auto fail = [](const std::string& msg) { throw Error(Errc::SchemaError, msg); };
  if (b.video_id.empty()) fail("video_id is empty");
  if (!(b.fps_downsampled > 0.0) || !std::isfinite(b.fps_downsampled)) fail("fps_downsampled must be positive");
  if (b.n_frames_original == 0) fail("n_frames_original must be positive");
  if (b.captions.size() < 2) fail("a bundle needs at least 2 captions");
  for (std::size_t i = 0; i < b.captions.size(); ++i) {
    const auto& c = b.captions[i];
    if (c.text.empty()) fail("caption " + std::to_string(i) + " has empty text");
    if (!(c.time_sec >= 0.0) || !std::isfinite(c.time_sec)) fail("caption " + std::to_string(i) + " has bad time_sec");
    if (i > 0 && c.frame_index <= b.captions[i - 1].frame_index)
      fail("frame_index not strictly increasing at caption " + std::to_string(i));
  }
  if (b.summary_text && b.summary_text->empty()) fail("summary_text present but empty");
  if (b.embeddings_ref.empty()) fail("embeddings_ref is empty");
  for (std::size_t a = 0; a < b.annotations.size(); ++a) {
    if (b.annotations[a].size() != b.n_frames_original)
      fail("annotation " + std::to_string(a) + " has length " + std::to_string(b.annotations[a].size()) +
           ", expected n_frames_original = " + std::to_string(b.n_frames_original));
    for (double v : b.annotations[a])
      if (!std::isfinite(v)) fail("annotation " + std::to_string(a) + " has a non-finite score");
  }
}

inline nlohmann::json bundle_to_json(const VideoBundle& b) {
  using nlohmann::json;
  validate_bundle(b);
  json j;
  j["format_version"] = kBundleFormatVersion;
  j["video_id"] = b.video_id;
  j["fps_downsampled"] = b.fps_downsampled;
  j["n_frames_original"] = b.n_frames_original;
  json caps = json::array();
  for (const auto& c : b.captions)
    caps.push_back({{"frame_index", c.frame_index}, {"time_sec", c.time_sec}, {"text", c.text}});
  j["captions"] = std::move(caps);
  json meta = json::object();
  if (b.metadata.title) meta["title"] = *b.metadata.title;
  if (b.metadata.genre) meta["genre"] = *b.metadata.genre;
  if (b.metadata.query_category) meta["query_category"] = *b.metadata.query_category;
  j["metadata"] = std::move(meta);
  if (b.summary_text) j["summary_text"] = *b.summary_text;
  j["embeddings_ref"] = b.embeddings_ref;
  if (b.summary_embedding_ref) j["summary_embedding_ref"] = *b.summary_embedding_ref;
  if (b.features_ref) j["features_ref"] = *b.features_ref;
  if (!b.annotations.empty()) j["annotations"] = b.annotations;
  return j;
}

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::SchemaError, std::string("missing required field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, std::string("field '") + key + "': " + e.what());
  }
}

inline std::uint64_t required_index(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::SchemaError, std::string("missing required field '") + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw Error(Errc::SchemaError, std::string("field '") + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

}  // namespace detail

inline VideoBundle bundle_from_json(const nlohmann::json& j) {
  using detail::optional_field;
  using detail::required;
  if (!j.is_object()) throw Error(Errc::SchemaError, "bundle document must be an object");
  if (auto v = optional_field<int>(j, "format_version"); v && *v != kBundleFormatVersion)
    throw Error(Errc::SchemaError, "unsupported format_version " + std::to_string(*v));

  VideoBundle b;
  b.video_id = required<std::string>(j, "video_id");
  b.fps_downsampled = required<double>(j, "fps_downsampled");
  b.n_frames_original = detail::required_index(j, "n_frames_original");
  if (!j.contains("captions")) throw Error(Errc::SchemaError, "missing required field 'captions'");
  const auto& caps = j.at("captions");
  if (!caps.is_array()) throw Error(Errc::SchemaError, "captions must be an array");
  for (const auto& c : caps) {
    if (!c.is_object()) throw Error(Errc::SchemaError, "caption entries must be objects");
    b.captions.push_back({detail::required_index(c, "frame_index"), required<double>(c, "time_sec"),
                          required<std::string>(c, "text")});
  }
  if (j.contains("metadata")) {
    const auto& m = j.at("metadata");
    if (!m.is_object()) throw Error(Errc::SchemaError, "metadata must be an object");
    for (const auto& [key, _] : m.items())
      if (key != "title" && key != "genre" && key != "query_category")
        throw Error(Errc::SchemaError, "unknown metadata key '" + key + "'");
    b.metadata.title = optional_field<std::string>(m, "title");
    b.metadata.genre = optional_field<std::string>(m, "genre");
    b.metadata.query_category = optional_field<std::string>(m, "query_category");
  }
  b.summary_text = optional_field<std::string>(j, "summary_text");
  b.embeddings_ref = required<std::string>(j, "embeddings_ref");
  b.summary_embedding_ref = optional_field<std::string>(j, "summary_embedding_ref");
  b.features_ref = optional_field<std::string>(j, "features_ref");
  if (auto ann = optional_field<std::vector<std::vector<double>>>(j, "annotations")) b.annotations = std::move(*ann);
  validate_bundle(b);
  return b;
}

/// Canonical text form: sorted keys, two-space indent, trailing newline.
inline std::string dump_bundle(const VideoBundle& b) { return bundle_to_json(b).dump(2) + "\n"; }

inline VideoBundle parse_bundle(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, e.what());
  }
  return bundle_from_json(j);
}

inline VideoBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IOError, "cannot open bundle " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bundle(ss.str());
}

inline void save_bundle(const VideoBundle& b, const std::filesystem::path& path) {
  const auto text = dump_bundle(b);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IOError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(Errc::IOError, "short write to " + path.string());
}

/// Resolve a sidecar reference relative to the directory holding the bundle.
inline std::filesystem::path resolve_ref(const std::filesystem::path& bundle_path, const std::string& ref) {
  const std::filesystem::path p(ref);
  if (p.is_absolute()) return p;
  return bundle_path.parent_path() / p;
}

}  // namespace capsum
