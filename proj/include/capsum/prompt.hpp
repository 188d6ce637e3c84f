#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "capsum/bundle.hpp"
#include "capsum/clients.hpp"
#include "capsum/error.hpp"

namespace capsum {

inline constexpr std::string_view kDefaultCaptionPrompt = "a photo of";

enum class TemplateId { chain_of_density, personalized };

inline std::string_view to_string(TemplateId id) {
  return id == TemplateId::chain_of_density ? "chain_of_density" : "personalized";
}

inline TemplateId parse_template_id(std::string_view s) {
  if (s == "chain_of_density") return TemplateId::chain_of_density;
  if (s == "personalized") return TemplateId::personalized;
  throw Error(Errc::TemplateError, "unknown template_id '" + std::string(s) + "'");
}

inline constexpr std::string_view kTitle = "[TITLE]";
inline constexpr std::string_view kGenre = "[GENRE]";
inline constexpr std::string_view kQuery = "[QUERY]";
inline constexpr std::string_view kCaptions = "[CAPTIONS]";
inline constexpr std::string_view kUserQuery = "[USER QUERY]";

inline std::vector<std::string_view> required_placeholders(TemplateId id) {
  if (id == TemplateId::chain_of_density) return {kTitle, kGenre, kQuery, kCaptions};
  return {kUserQuery, kCaptions};
}

namespace detail {

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace detail

class PromptTemplate {
 public:
  PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
    for (auto ph : required_placeholders(id_)) {
      const auto n = detail::count_occurrences(body_, ph);
      if (n != 1)
        throw Error(Errc::TemplateError, std::string(to_string(id_)) + " template must contain " + std::string(ph) +
                                             " exactly once (found " + std::to_string(n) + ")");
    }
  }

  TemplateId id() const noexcept { return id_; }
  const std::string& body() const noexcept { return body_; }

 private:
  TemplateId id_;
  std::string body_;
};

/// Reads `<dir>/<template_id>.txt`.
inline PromptTemplate load_template(const std::filesystem::path& dir, TemplateId id) {
  const auto path = dir / (std::string(to_string(id)) + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IOError, "cannot open template " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return PromptTemplate(id, ss.str());
}

/// Fills a template. Metadata lines whose value is absent are dropped;
/// captions go into [CAPTIONS] one per line in chronological order.
inline std::string render_prompt(const PromptTemplate& tpl, const VideoBundle& bundle,
                                 const std::optional<std::string>& user_query) {
  if (bundle.captions.empty()) throw Error(Errc::TemplateError, "no captions to summarize");
  if (tpl.id() == TemplateId::personalized && (!user_query || user_query->empty()))
    throw Error(Errc::TemplateError, "personalized template requires a user query");
  if (tpl.id() == TemplateId::chain_of_density && user_query)
    throw Error(Errc::TemplateError, "chain_of_density template does not take a user query");

  const std::pair<std::string_view, const std::optional<std::string>*> meta[] = {
      {kTitle, &bundle.metadata.title}, {kGenre, &bundle.metadata.genre}, {kQuery, &bundle.metadata.query_category}};

  std::string out;
  std::istringstream lines(tpl.body());
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    bool drop = false;
    for (const auto& [ph, value] : meta) {
      if (line.find(ph) == std::string::npos) continue;
      if (!value->has_value())
        drop = true;
      else
        detail::replace_all(line, ph, **value);
    }
    if (drop) continue;
    if (user_query) detail::replace_all(line, kUserQuery, *user_query);
    if (!first) out += '\n';
    out += line;
    first = false;
  }
  if (!tpl.body().empty() && tpl.body().back() == '\n') out += '\n';

  for (auto ph : {kTitle, kGenre, kQuery, kUserQuery})
    if (out.find(ph) != std::string::npos)
      throw Error(Errc::TemplateError, "unresolved placeholder " + std::string(ph));

  std::string caps;
  for (const auto& c : bundle.captions) {
    if (!caps.empty()) caps += '\n';
    caps += c.text;
  }
  const auto at = out.find(kCaptions);
  if (at == std::string::npos) throw Error(Errc::TemplateError, "template lost its [CAPTIONS] placeholder");
  out.replace(at, kCaptions.size(), caps);
  return out;
}

/// Pulls the summary out of a completion. Both templates ask for JSON: the
/// densest (last) "Denser_Summary" of a list, or the single string value of
/// an object. Anything else is taken verbatim.
inline std::string extract_summary_text(const std::string& completion) {
  const auto raw = detail::trim(completion);
  try {
    const auto j = nlohmann::json::parse(raw);
    if (j.is_array() && !j.empty() && j.back().is_object() && j.back().contains("Denser_Summary") &&
        j.back().at("Denser_Summary").is_string())
      return detail::trim(j.back().at("Denser_Summary").get<std::string>());
    if (j.is_object() && j.size() == 1 && j.begin()->is_string()) return detail::trim(j.begin()->get<std::string>());
    if (j.is_string()) return detail::trim(j.get<std::string>());
  } catch (const nlohmann::json::parse_error&) {
  }
  return raw;
}

inline std::string generate_text_summary(const VideoBundle& bundle, const PromptTemplate& tpl,
                                         const std::optional<std::string>& user_query, const LlmClient& client) {
  const auto prompt = render_prompt(tpl, bundle, user_query);
  auto summary = extract_summary_text(client.complete(prompt));
  if (summary.empty()) throw Error(Errc::ClientError, "LLM returned an empty summary");
  return summary;
}

/// Removes a leading generation prompt ("a photo of a dog" -> "a dog").
inline std::string strip_caption_prompt(std::string_view raw, std::string_view prompt) {
  auto text = detail::trim(raw);
  const auto p = detail::trim(prompt);
  if (!p.empty() && text.size() >= p.size()) {
    const bool prefix = std::equal(p.begin(), p.end(), text.begin(), [](char a, char b) {
      return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    if (prefix && (text.size() == p.size() || std::isspace(static_cast<unsigned char>(text[p.size()]))))
      text = detail::trim(std::string_view(text).substr(p.size()));
  }
  return text;
}

struct CaptionOptions {
  std::string prompt{kDefaultCaptionPrompt};
  std::size_t max_in_flight = 4;
};

/// One caption per frame, in input order. Up to `max_in_flight` requests run
/// at once; the first failure is rethrown after all workers stop.
inline std::vector<CaptionRecord> fetch_captions(const std::vector<FrameRef>& frames, const CaptionClient& client,
                                                 const CaptionOptions& opts = {}) {
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].frame_index <= frames[i - 1].frame_index)
      throw Error(Errc::SchemaError, "frame_index not strictly increasing at frame " + std::to_string(i));

  std::vector<CaptionRecord> out(frames.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < frames.size() && !failed; i = next++) {
      try {
        auto text = strip_caption_prompt(client.caption(frames[i], opts.prompt), opts.prompt);
        if (text.empty()) throw Error(Errc::EmptyCaption, "empty caption for frame " + std::to_string(frames[i].frame_index));
        out[i] = {frames[i].frame_index, frames[i].time_sec, std::move(text)};
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opts.max_in_flight, frames.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

/// Frame list text format: one frame per line, `frame_index<TAB>time_sec<TAB>uri`.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<FrameRef> parse_frame_list(std::istream& in) {
  std::vector<FrameRef> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw Error(Errc::ParseError, "frame list line " + std::to_string(lineno) + " needs 3 fields");
    try {
      FrameRef f;
      f.frame_index = std::stoull(line.substr(0, t1));
      f.time_sec = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      f.uri = line.substr(t2 + 1);
      frames.push_back(std::move(f));
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "frame list line " + std::to_string(lineno) + " is malformed");
    }
  }
  return frames;
}

}  // namespace capsum
