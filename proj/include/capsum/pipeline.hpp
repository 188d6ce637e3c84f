#pragma once

// Stage functions and artifact files for the end-to-end pipeline:
//   caption -> summarize -> embed -> diversity + training -> segment -> select -> evaluate
// Every stage reads and writes plain files so it can be re-run on its own.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsum/bundle.hpp"
#include "capsum/clients.hpp"
#include "capsum/config.hpp"
#include "capsum/embedding_io.hpp"
#include "capsum/evaluation.hpp"
#include "capsum/format.hpp"
#include "capsum/http_clients.hpp"
#include "capsum/prompt.hpp"
#include "capsum/scoring.hpp"
#include "capsum/segmentation.hpp"
#include "capsum/selection.hpp"
#include "capsum/training.hpp"

namespace capsum {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Clients

struct Clients {
  std::unique_ptr<CaptionClient> captioner;
  std::unique_ptr<LlmClient> llm;
  std::unique_ptr<EmbeddingClient> embedder;
};

inline Clients make_clients(const PipelineConfig& cfg) {
  Clients c;
  if (cfg.client_mode == ClientMode::fixture) {
    c.captioner = std::make_unique<FixtureCaptionClient>();
    c.llm = std::make_unique<FixtureLlmClient>(cfg.fixture.llm_mode);
    c.embedder = std::make_unique<FixtureEmbeddingClient>(cfg.fixture.embedding_dim, cfg.seed);
    return c;
  }
  auto endpoint = [&](const std::string& url) {
    HttpEndpoint ep;
    ep.url = url;
    ep.max_retries = cfg.clients.max_retries;
    ep.backoff = std::chrono::milliseconds(cfg.clients.backoff_ms);
    ep.timeout = std::chrono::milliseconds(cfg.clients.timeout_ms);
    return ep;
  };
  c.captioner = std::make_unique<HttpCaptionClient>(endpoint(cfg.clients.caption_url));
  c.llm = std::make_unique<HttpLlmClient>(endpoint(cfg.clients.llm_url));
  c.embedder = std::make_unique<HttpEmbeddingClient>(endpoint(cfg.clients.embed_url));
  return c;
}

// ---------------------------------------------------------------------------
// Small file helpers

inline std::string read_text_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IOError, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IOError, "cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw Error(Errc::IOError, "short write to " + p.string());
}

inline nlohmann::json read_json_file(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, p.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const nlohmann::json& j) { write_text_file(p, j.dump(2) + "\n"); }

/// Reads a '0'/'1' mask; whitespace is ignored.
inline std::vector<bool> read_mask_file(const fs::path& p) {
  std::vector<bool> mask;
  for (char ch : read_text_file(p)) {
    if (ch == '0' || ch == '1')
      mask.push_back(ch == '1');
    else if (!std::isspace(static_cast<unsigned char>(ch)))
      throw Error(Errc::ParseError, p.string() + ": mask may contain only 0, 1 and whitespace");
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Embedding

/// Embeds every text and rounds the result to float32, exactly as it will
/// read back from an EMB1 file.
inline EmbeddingMatrix embed_texts(const std::vector<std::string>& texts, const EmbeddingClient& embedder) {
  std::vector<Vector> rows;
  rows.reserve(texts.size());
  for (const auto& t : texts) {
    rows.push_back(embedder.embed(t));
    if (rows.back().size() != rows.front().size())
      throw Error(Errc::ClientError, "embedder returned vectors of differing length");
  }
  return decode_embeddings(encode_embeddings(EmbeddingMatrix::from_rows(rows)));
}

inline std::vector<std::string> caption_texts(const VideoBundle& b) {
  std::vector<std::string> out;
  out.reserve(b.captions.size());
  for (const auto& c : b.captions) out.push_back(c.text);
  return out;
}

struct BundleEmbeddings {
  EmbeddingMatrix captions;
  Vector summary;
};

/// Loads the caption and summary embeddings a bundle points at.
inline BundleEmbeddings load_bundle_embeddings(const fs::path& bundle_path, const VideoBundle& b) {
  BundleEmbeddings e;
  e.captions = read_embeddings(resolve_ref(bundle_path, b.embeddings_ref));
  if (e.captions.n_rows() != b.n())
    throw Error(Errc::SchemaError, "embedding file has " + std::to_string(e.captions.n_rows()) + " rows for " +
                                       std::to_string(b.n()) + " captions");
  if (!b.summary_embedding_ref) throw Error(Errc::SchemaError, "bundle has no summary_embedding_ref");
  const auto s = read_embeddings(resolve_ref(bundle_path, *b.summary_embedding_ref));
  if (s.n_rows() != 1 || s.dim() != e.captions.dim())
    throw Error(Errc::SchemaError, "summary embedding must be a single row of the caption dimension");
  e.summary.assign(s.row(0).begin(), s.row(0).end());
  return e;
}

// ---------------------------------------------------------------------------
// Scoring stage

struct ScoreArtifact {
  std::string video_id;
  FrameScores scores;
  SceneSegmentation diversity_segmentation;
  std::vector<double> adjacent_sims;
  double sim_scene = 1.0;
  double diversity = 0.0;
  double lambda = 0.0;  // lambda_of_diversity(diversity, delta)
  LossConfig loss;
  EpochRecord initial;
  EpochRecord final;
  std::size_t epochs = 0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  TrainTrace trace;
};

inline ScoreArtifact stage_score(const std::string& video_id, const EmbeddingMatrix& captions,
                                 std::span<const double> summary, const PipelineConfig& cfg) {
  ScoreArtifact a;
  a.video_id = video_id;
  a.loss = cfg.train.loss;
  a.diversity_segmentation = kts_segment(captions, cfg.segmentation.kernel, cfg.segmentation.scenes);
  const auto div = video_diversity(captions.matrix(), a.diversity_segmentation);
  a.adjacent_sims = div.adjacent_sims;
  a.sim_scene = div.sim_scene;
  a.diversity = div.diversity;
  a.lambda = lambda_of_diversity(a.diversity, cfg.train.loss.delta);

  auto result = train_video(captions.matrix(), summary, cfg.train, a.diversity);
  a.scores = result.trace.final_scores;
  a.initial = result.trace.initial;
  a.final = result.trace.epochs.empty() ? result.trace.initial : result.trace.epochs.back();
  a.epochs = result.trace.epochs.size();
  a.sigma1 = result.sigma1;
  a.sigma2 = result.sigma2;
  a.trace = std::move(result.trace);
  return a;
}

inline nlohmann::json epoch_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},          {"L_m", r.margin_term}, {"L_s", r.sparsity_term},
          {"sparsity_weight", r.lambda}, {"total", r.total},     {"mean_S", r.mean_score}};
}

inline nlohmann::json scores_to_json(const ScoreArtifact& a) {
  return {
      {"video_id", a.video_id},
      {"n_frames", a.scores.size()},
      {"scores", a.scores.scores()},
      {"mean", a.scores.mean()},
      {"diversity",
       {{"D", a.diversity},
        {"sim_scene", a.sim_scene},
        {"adjacent_sims", a.adjacent_sims},
        {"scenes", a.diversity_segmentation.n_scenes()},
        {"boundaries", a.diversity_segmentation.boundaries()}}},
      {"lambda", a.lambda},
      {"delta", a.loss.delta},
      {"loss",
       {{"mode", std::string(to_string(a.loss.mode))},
        {"margin", a.loss.margin},
        {"epsilon", a.loss.epsilon},
        {"alpha", a.loss.alpha ? nlohmann::json(*a.loss.alpha) : nlohmann::json(nullptr)},
        {"epochs", a.epochs},
        {"initial", epoch_to_json(a.initial)},
        {"final", epoch_to_json(a.final)},
        {"sigma1", a.sigma1},
        {"sigma2", a.sigma2}}},
  };
}

/// The parts of a scores file later stages need.
struct ScoresFile {
  std::string video_id;
  FrameScores scores;
  double diversity = 0.0;
  double lambda = 0.0;
};

inline ScoresFile load_scores(const fs::path& p) {
  const auto j = read_json_file(p);
  try {
    return {j.at("video_id").get<std::string>(), FrameScores(j.at("scores").get<std::vector<double>>()),
            j.at("diversity").at("D").get<double>(), j.at("lambda").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Segmentation stage

struct SegmentArtifact {
  SceneSegmentation segmentation;
  std::string source;  // "features" or "captions"
};

/// Scenes for score aggregation: visual features when the bundle has them,
/// caption embeddings otherwise.
inline SegmentArtifact stage_segment(const fs::path& bundle_path, const VideoBundle& b, const EmbeddingMatrix& captions,
                                     const PipelineConfig& cfg) {
  if (b.features_ref) {
    const auto feats = read_embeddings(resolve_ref(bundle_path, *b.features_ref));
    if (feats.n_rows() != b.n())
      throw Error(Errc::SchemaError, "feature file has " + std::to_string(feats.n_rows()) + " rows for " +
                                         std::to_string(b.n()) + " frames");
    return {kts_segment(feats, cfg.segmentation.kernel, cfg.segmentation.scenes), "features"};
  }
  return {kts_segment(captions, cfg.segmentation.kernel, cfg.segmentation.scenes), "captions"};
}

inline nlohmann::json segmentation_to_json(const SegmentArtifact& s) {
  return {{"n_frames", s.segmentation.n_frames()},
          {"scenes", s.segmentation.n_scenes()},
          {"boundaries", s.segmentation.boundaries()},
          {"source", s.source}};
}

inline SegmentArtifact load_segmentation(const fs::path& p) {
  const auto j = read_json_file(p);
  try {
    return {SceneSegmentation(j.at("boundaries").get<std::vector<std::size_t>>(), j.at("n_frames").get<std::size_t>()),
            j.value("source", std::string("captions"))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Selection stage

inline SummarySelection stage_select(const FrameScores& scores, const SceneSegmentation& seg, double budget_ratio) {
  return knapsack_select(scene_scores(scores, seg), seg, budget_ratio);
}

inline nlohmann::json selection_to_json(const SummarySelection& s, double budget_ratio) {
  return {{"budget_ratio", budget_ratio},
          {"budget_frames", s.budget_frames},
          {"selected_scenes", s.selected_scenes},
          {"selected_frames", s.selected_frames()},
          {"total_value", s.total_value},
          {"bitstring", s.bitstring()}};
}

/// index, S_i, scene_id, selected - one row per downsampled frame.
inline std::string frame_table(const FrameScores& scores, const SceneSegmentation& seg, const std::vector<bool>& mask) {
  if (seg.n_frames() != scores.size() || mask.size() != scores.size())
    throw Error(Errc::LengthMismatch, "frame table inputs differ in length");
  const auto labels = seg.frame_labels();
  std::string out = "index\tscore\tscene\tselected\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    out += std::to_string(i) + '\t' + format_double(scores[i]) + '\t' + std::to_string(labels[i]) + '\t' +
           (mask[i] ? "1" : "0") + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation stage

inline EvalReport stage_evaluate(const FrameScores& scores, const VideoBundle& b, EvalResolution res) {
  if (b.annotations.empty()) throw Error(Errc::SchemaError, "bundle has no annotations to evaluate against");
  if (res == EvalResolution::original)
    return correlation_vs_annotators(upsample_step_hold(scores.scores(), b.n_frames_original), b.annotations);
  std::vector<std::vector<double>> down;
  down.reserve(b.annotations.size());
  for (const auto& a : b.annotations) down.push_back(downsample_block_mean(a, scores.size()));
  return correlation_vs_annotators(scores.scores(), down);
}

inline nlohmann::json eval_to_json(const EvalReport& r, EvalResolution res) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& a : r.per_annotator) per.push_back({{"tau", a.tau}, {"rho", a.rho}});
  nlohmann::json j{{"resolution", res == EvalResolution::original ? "original" : "downsampled"},
                   {"tau", r.tau},
                   {"rho", r.rho},
                   {"per_annotator", std::move(per)}};
  return j;
}

// ---------------------------------------------------------------------------
// Full run

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  std::string video_id;
  std::size_t n_frames_original = 0;
  std::uint64_t seed = 0;
  std::string client_mode;
  std::string summary_text;
  std::string summary_template;
  std::optional<std::string> user_query;
  ScoreArtifact score;
  SegmentArtifact segment;
  SummarySelection selection;
  double budget_ratio = kDefaultBudgetRatio;
  std::optional<EvalReport> evaluation;
  EvalResolution eval_resolution = EvalResolution::original;
  std::optional<std::pair<double, double>> precision_recall;
  std::vector<StageTiming> timings;  // not part of the deterministic report
};

inline nlohmann::json report_to_json(const RunReport& r) {
  using nlohmann::json;
  json j{
      {"video_id", r.video_id},
      {"n_frames", r.score.scores.size()},
      {"n_frames_original", r.n_frames_original},
      {"seed", r.seed},
      {"client_mode", r.client_mode},
      {"summary",
       {{"text", r.summary_text},
        {"template", r.summary_template},
        {"user_query", r.user_query ? json(*r.user_query) : json(nullptr)}}},
      {"scoring", scores_to_json(r.score)},
      {"segmentation", segmentation_to_json(r.segment)},
      {"selection", selection_to_json(r.selection, r.budget_ratio)},
      {"evaluation", r.evaluation ? eval_to_json(*r.evaluation, r.eval_resolution) : json(nullptr)},
      {"personalization", r.precision_recall
                              ? json{{"precision", r.precision_recall->first}, {"recall", r.precision_recall->second}}
                              : json(nullptr)},
  };
  return j;
}

enum class ReportFormat { structured_text, delimited_table };

/// Writes report.json and/or frames.tsv into `dir`. Output is a pure
/// function of the report, so re-emitting gives identical bytes.
inline std::vector<fs::path> emit_report(const RunReport& r, const fs::path& dir,
                                         std::vector<ReportFormat> formats = {ReportFormat::structured_text,
                                                                             ReportFormat::delimited_table}) {
  std::vector<fs::path> written;
  for (auto f : formats) {
    if (f == ReportFormat::structured_text) {
      written.push_back(dir / "report.json");
      write_json_file(written.back(), report_to_json(r));
    } else {
      written.push_back(dir / "frames.tsv");
      write_text_file(written.back(), frame_table(r.score.scores, r.segment.segmentation, r.selection.frame_mask));
    }
  }
  return written;
}

namespace detail {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}
  void mark(std::string stage) {
    const auto now = std::chrono::steady_clock::now();
    sink_.push_back({std::move(stage), std::chrono::duration<double>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageTiming>& sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Runs every stage on one video and writes all artifacts to
/// cfg.paths.output_dir:
///   bundle.json, captions.emb, summary.emb, scores.json, trace.tsv,
///   segmentation.json, selection.json, report.json, frames.tsv, timings.json
inline RunReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const fs::path bundle_path = cfg.paths.bundle;
  const fs::path out_dir = cfg.paths.output_dir;
  fs::create_directories(out_dir);

  RunReport r;
  detail::StageClock clock(r.timings);
  const auto clients = make_clients(cfg);

  VideoBundle bundle = load_bundle(bundle_path);
  if (cfg.paths.frames) {
    std::ifstream in(*cfg.paths.frames);
    if (!in) throw Error(Errc::IOError, "cannot open frame list " + *cfg.paths.frames);
    bundle.captions = fetch_captions(parse_frame_list(in), *clients.captioner,
                                     {cfg.clients.caption_prompt, cfg.clients.max_in_flight});
    bundle.summary_text.reset();
    validate_bundle(bundle);
  }
  clock.mark("caption");

  const TemplateId tid = cfg.user_query ? TemplateId::personalized : TemplateId::chain_of_density;
  if (cfg.user_query || !bundle.summary_text) {
    const auto tpl = load_template(cfg.paths.templates_dir, tid);
    bundle.summary_text = generate_text_summary(bundle, tpl, cfg.user_query, *clients.llm);
    r.summary_template = std::string(to_string(tid));
  } else {
    r.summary_template = "provided";
  }
  clock.mark("summarize");

  const auto captions = embed_texts(caption_texts(bundle), *clients.embedder);
  const auto summary_m = embed_texts({*bundle.summary_text}, *clients.embedder);
  if (summary_m.dim() != captions.dim()) throw Error(Errc::ClientError, "summary and caption embeddings differ in dim");
  const Vector summary(summary_m.row(0).begin(), summary_m.row(0).end());

  // features (if any) stay where the input bundle points
  if (bundle.features_ref) bundle.features_ref = fs::absolute(resolve_ref(bundle_path, *bundle.features_ref)).string();
  bundle.embeddings_ref = "captions.emb";
  bundle.summary_embedding_ref = "summary.emb";
  write_embeddings(captions, out_dir / "captions.emb");
  write_embeddings(summary_m, out_dir / "summary.emb");
  save_bundle(bundle, out_dir / "bundle.json");
  clock.mark("embed");

  r.score = stage_score(bundle.video_id, captions, summary, cfg);
  write_json_file(out_dir / "scores.json", scores_to_json(r.score));
  {
    std::ostringstream trace;
    write_trace_table(trace, r.score.trace);
    write_text_file(out_dir / "trace.tsv", trace.str());
  }
  clock.mark("score");

  r.segment = stage_segment(out_dir / "bundle.json", bundle, captions, cfg);
  write_json_file(out_dir / "segmentation.json", segmentation_to_json(r.segment));
  clock.mark("segment");

  r.budget_ratio = cfg.budget_ratio;
  r.selection = stage_select(r.score.scores, r.segment.segmentation, cfg.budget_ratio);
  write_json_file(out_dir / "selection.json", selection_to_json(r.selection, cfg.budget_ratio));
  clock.mark("select");

  r.eval_resolution = cfg.eval_resolution;
  if (!bundle.annotations.empty()) r.evaluation = stage_evaluate(r.score.scores, bundle, cfg.eval_resolution);
  if (cfg.paths.ground_truth)
    r.precision_recall = personalization_pr(r.selection.frame_mask, read_mask_file(*cfg.paths.ground_truth));
  clock.mark("evaluate");

  r.video_id = bundle.video_id;
  r.n_frames_original = bundle.n_frames_original;
  r.seed = cfg.seed;
  r.client_mode = cfg.client_mode == ClientMode::fixture ? "fixture" : "live";
  r.summary_text = *bundle.summary_text;
  r.user_query = cfg.user_query;

  emit_report(r, out_dir);
  nlohmann::json t = nlohmann::json::array();
  for (const auto& s : r.timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  write_json_file(out_dir / "timings.json", t);
  return r;
}

// ---------------------------------------------------------------------------
// Exit codes

inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::ConfigError:
    case Errc::InvalidBudget:
      return 2;
    case Errc::ParseError:
    case Errc::SchemaError:
    case Errc::BadMagic:
    case Errc::TruncatedFile:
    case Errc::ZeroNormRow:
    case Errc::IOError:
    case Errc::TemplateError:
    case Errc::EmptyCaption:
    case Errc::EmptySelection:
    case Errc::EmptyGroundTruth:
      return 3;
    case Errc::ClientError:
      return 4;
    default:
      return 5;
  }
}

}  // namespace capsum
