#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "capsum/error.hpp"
#include "capsum/prompt.hpp"
#include "capsum/scoring.hpp"
#include "capsum/segmentation.hpp"
#include "capsum/selection.hpp"
#include "capsum/training.hpp"

#ifndef CAPSUM_DEFAULT_TEMPLATES_DIR
#define CAPSUM_DEFAULT_TEMPLATES_DIR "templates"
#endif

namespace capsum {

enum class ClientMode { fixture, live };
enum class EvalResolution { original, downsampled };

struct PipelinePaths {
  std::string bundle;
  std::string output_dir = "out";
  std::string templates_dir = CAPSUM_DEFAULT_TEMPLATES_DIR;
  std::optional<std::string> frames;        // frame list to caption before summarizing
  std::optional<std::string> ground_truth;  // '0'/'1' per downsampled frame, for precision/recall
};

struct ClientSettings {
  std::string caption_url = "http://127.0.0.1:8081/caption";
  std::string llm_url = "http://127.0.0.1:8082/complete";
  std::string embed_url = "http://127.0.0.1:8083/embed";
  int max_retries = 3;
  std::int64_t backoff_ms = 200;
  std::int64_t timeout_ms = 30000;
  std::size_t max_in_flight = 4;
  std::string caption_prompt{kDefaultCaptionPrompt};
};

struct FixtureSettings {
  std::size_t embedding_dim = 64;
  FixtureLlmClient::Mode llm_mode = FixtureLlmClient::Mode::majority;
};

struct SegmentationSettings {
  KernelConfig kernel;
  std::optional<std::size_t> scenes;  // force a scene count instead of model selection
};

struct PipelineConfig {
  PipelinePaths paths;
  ClientMode client_mode = ClientMode::fixture;
  ClientSettings clients;
  FixtureSettings fixture;
  std::uint64_t seed = 7;
  TrainConfig train;  // train.loss holds the loss settings
  SegmentationSettings segmentation;
  double budget_ratio = kDefaultBudgetRatio;
  std::optional<std::string> user_query;
  EvalResolution eval_resolution = EvalResolution::original;

  /// Throws ConfigError; paths are checked when a stage opens them.
  void validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::ConfigError, m); };
    try {
      train.validate();
      (void)budget_frames(budget_ratio, 1);
    } catch (const Error& e) {
      fail(e.what());
    }
    if (fixture.embedding_dim == 0) fail("fixture.embedding_dim must be positive");
    if (segmentation.kernel.max_scenes == 0) fail("segmentation.max_scenes must be positive");
    if (!(segmentation.kernel.penalty_weight >= 0.0)) fail("segmentation.penalty_weight must be nonnegative");
    if (segmentation.scenes && *segmentation.scenes == 0) fail("segmentation.scenes must be positive");
    if (clients.max_retries < 0) fail("clients.max_retries must be nonnegative");
    if (clients.max_in_flight == 0) fail("clients.max_in_flight must be positive");
    if (user_query && user_query->empty()) fail("user_query is empty");
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("config field '") + key + "': " + e.what());
  }
}

template <typename T>
void read_nullable(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read_opt(j, key, v);
  out = std::move(v);
}

template <typename T>
nlohmann::json nullable(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw Error(Errc::ConfigError, std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace detail

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  using nlohmann::json;
  using detail::nullable;
  const auto& l = c.train.loss;
  return json{
      {"paths",
       {{"bundle", c.paths.bundle},
        {"output_dir", c.paths.output_dir},
        {"templates_dir", c.paths.templates_dir},
        {"frames", nullable(c.paths.frames)},
        {"ground_truth", nullable(c.paths.ground_truth)}}},
      {"client_mode", c.client_mode == ClientMode::fixture ? "fixture" : "live"},
      {"clients",
       {{"caption_url", c.clients.caption_url},
        {"llm_url", c.clients.llm_url},
        {"embed_url", c.clients.embed_url},
        {"max_retries", c.clients.max_retries},
        {"backoff_ms", c.clients.backoff_ms},
        {"timeout_ms", c.clients.timeout_ms},
        {"max_in_flight", c.clients.max_in_flight},
        {"caption_prompt", c.clients.caption_prompt}}},
      {"fixture",
       {{"embedding_dim", c.fixture.embedding_dim},
        {"llm_mode", c.fixture.llm_mode == FixtureLlmClient::Mode::majority ? "majority" : "echo_first"}}},
      {"seed", c.seed},
      {"loss",
       {{"mode", std::string(to_string(l.mode))},
        {"margin", l.margin},
        {"epsilon", l.epsilon},
        {"delta", l.delta},
        {"alpha", nullable(l.alpha)},
        {"sigma1", l.sigma1},
        {"sigma2", l.sigma2}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"max_epochs", c.train.max_epochs},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_eps", c.train.adam_eps}}},
      {"segmentation",
       {{"kernel", std::string(to_string(c.segmentation.kernel.kernel))},
        {"max_scenes", c.segmentation.kernel.max_scenes},
        {"penalty_weight", c.segmentation.kernel.penalty_weight},
        {"scenes", nullable(c.segmentation.scenes)}}},
      {"budget_ratio", c.budget_ratio},
      {"user_query", nullable(c.user_query)},
      {"eval_resolution", c.eval_resolution == EvalResolution::original ? "original" : "downsampled"},
  };
}

/// Missing fields keep their defaults.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw Error(Errc::ConfigError, "config must be an object");
  PipelineConfig c;

  const auto& p = section(j, "paths");
  read_opt(p, "bundle", c.paths.bundle);
  read_opt(p, "output_dir", c.paths.output_dir);
  read_opt(p, "templates_dir", c.paths.templates_dir);
  read_nullable(p, "frames", c.paths.frames);
  read_nullable(p, "ground_truth", c.paths.ground_truth);

  std::string mode = "fixture";
  read_opt(j, "client_mode", mode);
  if (mode == "fixture")
    c.client_mode = ClientMode::fixture;
  else if (mode == "live")
    c.client_mode = ClientMode::live;
  else
    throw Error(Errc::ConfigError, "client_mode must be 'fixture' or 'live'");

  const auto& cl = section(j, "clients");
  read_opt(cl, "caption_url", c.clients.caption_url);
  read_opt(cl, "llm_url", c.clients.llm_url);
  read_opt(cl, "embed_url", c.clients.embed_url);
  read_opt(cl, "max_retries", c.clients.max_retries);
  read_opt(cl, "backoff_ms", c.clients.backoff_ms);
  read_opt(cl, "timeout_ms", c.clients.timeout_ms);
  read_opt(cl, "max_in_flight", c.clients.max_in_flight);
  read_opt(cl, "caption_prompt", c.clients.caption_prompt);

  const auto& fx = section(j, "fixture");
  read_opt(fx, "embedding_dim", c.fixture.embedding_dim);
  std::string llm_mode = "majority";
  read_opt(fx, "llm_mode", llm_mode);
  if (llm_mode == "majority")
    c.fixture.llm_mode = FixtureLlmClient::Mode::majority;
  else if (llm_mode == "echo_first")
    c.fixture.llm_mode = FixtureLlmClient::Mode::echo_first;
  else
    throw Error(Errc::ConfigError, "fixture.llm_mode must be 'majority' or 'echo_first'");

  read_opt(j, "seed", c.seed);
  c.train.seed = c.seed;

  const auto& l = section(j, "loss");
  std::string loss_mode(to_string(c.train.loss.mode));
  read_opt(l, "mode", loss_mode);
  c.train.loss.mode = parse_loss_mode(loss_mode);
  read_opt(l, "margin", c.train.loss.margin);
  read_opt(l, "epsilon", c.train.loss.epsilon);
  read_opt(l, "delta", c.train.loss.delta);
  read_nullable(l, "alpha", c.train.loss.alpha);
  read_opt(l, "sigma1", c.train.loss.sigma1);
  read_opt(l, "sigma2", c.train.loss.sigma2);

  const auto& t = section(j, "train");
  read_opt(t, "learning_rate", c.train.learning_rate);
  read_opt(t, "max_epochs", c.train.max_epochs);
  read_opt(t, "beta1", c.train.beta1);
  read_opt(t, "beta2", c.train.beta2);
  read_opt(t, "adam_eps", c.train.adam_eps);

  const auto& s = section(j, "segmentation");
  std::string kernel(to_string(c.segmentation.kernel.kernel));
  read_opt(s, "kernel", kernel);
  c.segmentation.kernel.kernel = parse_kernel_type(kernel);
  read_opt(s, "max_scenes", c.segmentation.kernel.max_scenes);
  read_opt(s, "penalty_weight", c.segmentation.kernel.penalty_weight);
  read_nullable(s, "scenes", c.segmentation.scenes);

  read_opt(j, "budget_ratio", c.budget_ratio);
  read_nullable(j, "user_query", c.user_query);
  std::string res = "original";
  read_opt(j, "eval_resolution", res);
  if (res == "original")
    c.eval_resolution = EvalResolution::original;
  else if (res == "downsampled")
    c.eval_resolution = EvalResolution::downsampled;
  else
    throw Error(Errc::ConfigError, "eval_resolution must be 'original' or 'downsampled'");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace capsum
