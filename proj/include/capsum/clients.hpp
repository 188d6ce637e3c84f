#pragma once

// Client contracts for the three external models (captioner, LLM, sentence
// encoder) plus deterministic offline implementations of each.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "capsum/error.hpp"
#include "capsum/matrix.hpp"

namespace capsum {

struct FrameRef {
  std::uint64_t frame_index = 0;
  double time_sec = 0.0;
  std::string uri;
};

class CaptionClient {
 public:
  virtual ~CaptionClient() = default;
  /// Raw captioner output for one frame. May still start with `prompt`.
  virtual std::string caption(const FrameRef& frame, const std::string& prompt) const = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) const = 0;
};

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual Vector embed(const std::string& text) const = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Lowercased alphanumeric tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Adds `weight` times a pseudo-random vector in [-1,1)^dim keyed by (key, seed).
inline void add_keyed_noise(Vector& acc, std::uint64_t key, std::uint64_t seed, double weight) {
  std::uint64_t mix = seed;
  std::uint64_t state = key ^ splitmix64(mix);
  for (double& v : acc) {
    const std::uint64_t r = splitmix64(state);
    const double u = static_cast<double>(r >> 11) * 0x1.0p-53;  // [0,1)
    v += weight * (2.0 * u - 1.0);
  }
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline bool is_stopword(std::string_view w) {
  static constexpr std::string_view words[] = {"a",  "an", "the", "of",   "on",  "in", "at", "to",
                                               "is", "and", "with", "near", "down", "by", "for"};
  return std::find(std::begin(words), std::end(words), w) != std::end(words);
}

}  // namespace detail

/// Offline stand-in for the sentence encoder. A hashed bag-of-words so that
/// captions sharing content words land close together, plus a whole-string term so
/// that distinct texts map to distinct vectors. Pure in (text, dim, seed).
inline Vector fixture_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(Errc::DimensionMismatch, "fixture_embed needs dim >= 1");
  Vector v(dim, 0.0);
  for (const auto& tok : detail::tokenize(text))
    if (!detail::is_stopword(tok)) detail::add_keyed_noise(v, detail::fnv1a64(tok), seed, 1.0);
  detail::add_keyed_noise(v, detail::fnv1a64(text) ^ 0xA5A5A5A5A5A5A5A5ull, seed, 0.25);
  double n = norm2(v);
  if (!(n > 0.0)) {
    v.assign(dim, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

class FixtureEmbeddingClient final : public EmbeddingClient {
 public:
  FixtureEmbeddingClient(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  Vector embed(const std::string& text) const override { return fixture_embed(text, dim_, seed_); }
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Deterministic captioner. A frame uri of the form "path#description"
/// captions as "<prompt> description"; otherwise a phrase is drawn from a
/// small vocabulary keyed by the uri.
class FixtureCaptionClient final : public CaptionClient {
 public:
  std::string caption(const FrameRef& frame, const std::string& prompt) const override {
    const auto hash_pos = frame.uri.find('#');
    if (hash_pos != std::string::npos && hash_pos + 1 < frame.uri.size())
      return prompt + " " + frame.uri.substr(hash_pos + 1);
    static constexpr std::string_view subjects[] = {"a dog", "a man", "a woman", "a red car", "two children",
                                                    "a bird", "a train", "a cyclist"};
    static constexpr std::string_view actions[] = {"running on grass", "standing near a river", "crossing a road",
                                                   "sitting on a bench", "in front of a building",
                                                   "under a cloudy sky"};
    const std::uint64_t h = detail::fnv1a64(frame.uri);
    const auto& s = subjects[h % std::size(subjects)];
    const auto& a = actions[(h >> 17) % std::size(actions)];
    return prompt + " " + std::string(s) + " " + std::string(a);
  }
};

/// Offline LLM. Reads the caption block out of a rendered prompt and builds
/// a summary from it:
///   echo_first  - the first caption verbatim
///   majority    - up to three most frequent distinct captions
/// Personalized prompts (those carrying a user query block) return the
/// captions with the largest word overlap with the query.
class FixtureLlmClient final : public LlmClient {
 public:
  enum class Mode { echo_first, majority };

  explicit FixtureLlmClient(Mode mode = Mode::majority) : mode_(mode) {}

  static std::vector<std::string> captions_in_prompt(const std::string& prompt) {
    const auto block = quoted_block(prompt, "Captions:");
    std::vector<std::string> out;
    if (!block) return out;
    std::size_t start = 0;
    while (start <= block->size()) {
      auto end = block->find('\n', start);
      if (end == std::string::npos) end = block->size();
      auto line = detail::trim(std::string_view(*block).substr(start, end - start));
      if (!line.empty()) out.push_back(std::move(line));
      start = end + 1;
    }
    return out;
  }

  std::string complete(const std::string& prompt) const override {
    const auto caps = captions_in_prompt(prompt);
    if (caps.empty()) throw Error(Errc::ClientError, "fixture LLM found no captions in the prompt");
    if (auto query = quoted_block(prompt, "User query")) return personalized(caps, *query);
    if (mode_ == Mode::echo_first) return caps.front();
    return majority(caps);
  }

 private:
  static std::optional<std::string> quoted_block(const std::string& prompt, std::string_view label) {
    const auto at = prompt.find(label);
    if (at == std::string::npos) return std::nullopt;
    const auto open = prompt.find("\"\"\"", at);
    if (open == std::string::npos) return std::nullopt;
    const auto close = prompt.find("\"\"\"", open + 3);
    if (close == std::string::npos) return std::nullopt;
    return prompt.substr(open + 3, close - open - 3);
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
      if (!out.empty()) out += ". ";
      out += p;
    }
    return out;
  }

  static std::string majority(const std::vector<std::string>& caps) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> seen;  // text -> (count, first position)
    for (std::size_t i = 0; i < caps.size(); ++i) {
      auto [it, inserted] = seen.try_emplace(caps[i], 0, i);
      ++it->second.first;
    }
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(seen.begin(), seen.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;
    });
    if (ranked.size() > 3) ranked.resize(3);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second.second < b.second.second; });
    std::vector<std::string> parts;
    for (auto& r : ranked) parts.push_back(r.first);
    return join(parts);
  }

  static std::string personalized(const std::vector<std::string>& caps, const std::string& query) {
    const auto qtok = detail::tokenize(query);
    std::vector<std::pair<std::size_t, std::size_t>> overlap;  // (score, index)
    for (std::size_t i = 0; i < caps.size(); ++i) {
      std::size_t score = 0;
      for (const auto& t : detail::tokenize(caps[i]))
        if (t.size() > 2 && std::find(qtok.begin(), qtok.end(), t) != qtok.end()) ++score;
      overlap.emplace_back(score, i);
    }
    std::stable_sort(overlap.begin(), overlap.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> parts;
    for (const auto& [score, idx] : overlap) {
      if (parts.size() == 3 || (score == 0 && !parts.empty())) break;
      if (std::find(parts.begin(), parts.end(), caps[idx]) == parts.end()) parts.push_back(caps[idx]);
    }
    return join(parts);
  }

  Mode mode_;
};

}  // namespace capsum
