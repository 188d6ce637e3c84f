#pragma once

// JSON-over-HTTP implementations of the client contracts.
//
// Wire contract (all POST, Content-Type: application/json):
//   captioner  {"image": <frame uri>, "prompt": <prompt>}  -> {"text": <caption>}
//   llm        {"prompt": <rendered prompt>}                -> {"text": <completion>}
//   embedder   {"text": <text>}                            -> {"embedding": [numbers]}
//
// Transport failures, 429 and 5xx are retried with exponential backoff;
// other non-2xx statuses fail immediately.

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "capsum/clients.hpp"
#include "capsum/error.hpp"

namespace capsum {

struct HttpEndpoint {
  std::string url;  // http://host:port/path
  int max_retries = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{30000};
  std::optional<std::string> api_key;
};

inline std::optional<std::string> env_api_key(const char* var) {
  if (const char* v = std::getenv(var); v && *v) return std::string(v);
  return std::nullopt;
}

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(Errc::ClientError, "endpoint url lacks a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline nlohmann::json post_json(const HttpEndpoint& ep, const nlohmann::json& body) {
  const auto [origin, path] = split_url(ep.url);
  std::string last_error;
  for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(ep.backoff * (1 << (attempt - 1)));
    httplib::Client cli(origin);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(ep.timeout).count(),
                               static_cast<long>((ep.timeout.count() % 1000) * 1000));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(ep.timeout).count(),
                         static_cast<long>((ep.timeout.count() % 1000) * 1000));
    httplib::Headers headers;
    if (ep.api_key) headers.emplace("Authorization", "Bearer " + *ep.api_key);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::ClientError, ep.url + " returned HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::ClientError, ep.url + " returned malformed JSON: " + e.what());
    }
  }
  throw Error(Errc::ClientError,
              ep.url + " failed after " + std::to_string(ep.max_retries + 1) + " attempts (" + last_error + ")");
}

inline std::string text_field(const nlohmann::json& j, const char* key, const std::string& url) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string())
    throw Error(Errc::ClientError, url + " response lacks string field '" + key + "'");
  return j.at(key).get<std::string>();
}

}  // namespace detail

class HttpCaptionClient final : public CaptionClient {
 public:
  explicit HttpCaptionClient(HttpEndpoint ep) : ep_(std::move(ep)) {
    if (!ep_.api_key) ep_.api_key = env_api_key("SUMM_CAPTION_API_KEY");
  }
  std::string caption(const FrameRef& frame, const std::string& prompt) const override {
    const auto res = detail::post_json(ep_, {{"image", frame.uri}, {"prompt", prompt}});
    return detail::text_field(res, "text", ep_.url);
  }

 private:
  HttpEndpoint ep_;
};

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpEndpoint ep) : ep_(std::move(ep)) {
    if (!ep_.api_key) ep_.api_key = env_api_key("SUMM_LLM_API_KEY");
  }
  std::string complete(const std::string& prompt) const override {
    const auto res = detail::post_json(ep_, {{"prompt", prompt}});
    return detail::text_field(res, "text", ep_.url);
  }

 private:
  HttpEndpoint ep_;
};

class HttpEmbeddingClient final : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(HttpEndpoint ep) : ep_(std::move(ep)) {}
  Vector embed(const std::string& text) const override {
    const auto res = detail::post_json(ep_, {{"text", text}});
    if (!res.is_object() || !res.contains("embedding") || !res.at("embedding").is_array())
      throw Error(Errc::ClientError, ep_.url + " response lacks 'embedding' array");
    try {
      return res.at("embedding").get<Vector>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ClientError, ep_.url + " embedding is not numeric: " + e.what());
    }
  }

 private:
  HttpEndpoint ep_;
};

}  // namespace capsum
