// capsum: caption-driven video summarization from the command line.
//
//   capsum init-config > cfg.json
//   capsum run --config cfg.json --bundle video.json --out out/
//
// Stage subcommands read and write the same artifacts `run` produces, so
// any stage can be re-run by itself.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "capsum/pipeline.hpp"

namespace {

using namespace capsum;

struct Overrides {
  std::string config;
  std::optional<std::string> bundle;
  std::optional<std::string> out;
  std::optional<std::string> templates;
  std::optional<std::uint64_t> seed;
  bool fixture = false;
  bool live = false;
  std::optional<std::string> loss_mode;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> scenes;
  std::optional<double> budget;
  std::optional<std::string> user_query;
  std::optional<std::string> eval_resolution;
  std::optional<std::string> ground_truth;
  std::optional<std::string> frames;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON config file (see init-config)");
  app->add_option("-b,--bundle", o.bundle, "video bundle JSON");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "random seed");
  auto* fx = app->add_flag("--fixture", o.fixture, "use deterministic offline clients");
  app->add_flag("--live", o.live, "use HTTP clients")->excludes(fx);
}

void add_model(CLI::App* app, Overrides& o) {
  app->add_option("--loss", o.loss_mode, "pdl | fixed_alpha | margin_only | sparsity_only | awl");
  app->add_option("--alpha", o.alpha, "sparsity weight for fixed_alpha");
  app->add_option("--lr", o.lr, "Adam learning rate");
  app->add_option("--epochs", o.epochs, "training epochs");
  app->add_option("--scenes", o.scenes, "force the KTS scene count");
}

PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.bundle) cfg.paths.bundle = *o.bundle;
  if (o.out) cfg.paths.output_dir = *o.out;
  if (o.templates) cfg.paths.templates_dir = *o.templates;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.fixture) cfg.client_mode = ClientMode::fixture;
  if (o.live) cfg.client_mode = ClientMode::live;
  try {
    if (o.loss_mode) cfg.train.loss.mode = parse_loss_mode(*o.loss_mode);
    if (o.eval_resolution) {
      if (*o.eval_resolution == "original")
        cfg.eval_resolution = EvalResolution::original;
      else if (*o.eval_resolution == "downsampled")
        cfg.eval_resolution = EvalResolution::downsampled;
      else
        throw Error(Errc::ConfigError, "eval resolution must be 'original' or 'downsampled'");
    }
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  if (o.alpha) cfg.train.loss.alpha = *o.alpha;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.epochs) cfg.train.max_epochs = *o.epochs;
  if (o.scenes) cfg.segmentation.scenes = *o.scenes;
  if (o.budget) cfg.budget_ratio = *o.budget;
  if (o.user_query) cfg.user_query = *o.user_query;
  if (o.ground_truth) cfg.paths.ground_truth = *o.ground_truth;
  if (o.frames) cfg.paths.frames = *o.frames;
  cfg.validate();
  return cfg;
}

const std::string& need_bundle(const PipelineConfig& cfg) {
  if (cfg.paths.bundle.empty()) throw Error(Errc::ConfigError, "no bundle given (--bundle or paths.bundle)");
  return cfg.paths.bundle;
}

/// Writes the bundle into the output dir with its refs rewritten to stay valid there.
void save_rebased(VideoBundle b, const fs::path& src, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto rebase = [&](std::string& ref) {
    ref = fs::relative(fs::absolute(resolve_ref(src, ref)), fs::absolute(out_dir)).generic_string();
  };
  rebase(b.embeddings_ref);
  if (b.summary_embedding_ref) rebase(*b.summary_embedding_ref);
  if (b.features_ref) b.features_ref = fs::absolute(resolve_ref(src, *b.features_ref)).string();
  save_bundle(b, out_dir / "bundle.json");
}

int cmd_init_config(const std::optional<std::string>& path) {
  const std::string text = config_to_json(PipelineConfig{}).dump(2) + "\n";
  if (path)
    write_text_file(*path, text);
  else
    std::cout << text;
  return 0;
}

int cmd_caption(const Overrides& o) {
  const auto cfg = resolve_config(o);
  if (!cfg.paths.frames) throw Error(Errc::ConfigError, "caption needs --frames");
  const fs::path src = need_bundle(cfg);
  auto bundle = load_bundle(src);
  std::ifstream in(*cfg.paths.frames);
  if (!in) throw Error(Errc::IOError, "cannot open frame list " + *cfg.paths.frames);
  const auto clients = make_clients(cfg);
  bundle.captions =
      fetch_captions(parse_frame_list(in), *clients.captioner, {cfg.clients.caption_prompt, cfg.clients.max_in_flight});
  bundle.summary_text.reset();
  validate_bundle(bundle);
  save_rebased(bundle, src, cfg.paths.output_dir);
  std::cout << bundle.captions.size() << " captions\n";
  return 0;
}

int cmd_summarize(const Overrides& o, bool personalized) {
  const auto cfg = resolve_config(o);
  if (personalized && !cfg.user_query) throw Error(Errc::ConfigError, "personalize needs --query");
  if (!personalized && cfg.user_query) throw Error(Errc::ConfigError, "summarize takes no user query; use personalize");
  const fs::path src = need_bundle(cfg);
  auto bundle = load_bundle(src);
  const auto clients = make_clients(cfg);
  const auto id = personalized ? TemplateId::personalized : TemplateId::chain_of_density;
  bundle.summary_text =
      generate_text_summary(bundle, load_template(cfg.paths.templates_dir, id), cfg.user_query, *clients.llm);
  save_rebased(bundle, src, cfg.paths.output_dir);
  std::cout << *bundle.summary_text << "\n";
  return 0;
}

// Embeds captions and summary into EMB1 files next to a canonical bundle.
int cmd_ingest(const Overrides& o) {
  const auto cfg = resolve_config(o);
  const fs::path src = need_bundle(cfg);
  auto bundle = load_bundle(src);
  if (!bundle.summary_text) throw Error(Errc::SchemaError, "bundle has no summary_text; run summarize first");
  const auto clients = make_clients(cfg);
  const auto captions = embed_texts(caption_texts(bundle), *clients.embedder);
  const auto summary = embed_texts({*bundle.summary_text}, *clients.embedder);
  const fs::path out = cfg.paths.output_dir;
  fs::create_directories(out);
  write_embeddings(captions, out / "captions.emb");
  write_embeddings(summary, out / "summary.emb");
  if (bundle.features_ref) bundle.features_ref = fs::absolute(resolve_ref(src, *bundle.features_ref)).string();
  bundle.embeddings_ref = "captions.emb";
  bundle.summary_embedding_ref = "summary.emb";
  save_bundle(bundle, out / "bundle.json");
  std::cout << captions.n_rows() << " x " << captions.dim() << " caption embeddings\n";
  return 0;
}

int cmd_score(const Overrides& o) {
  const auto cfg = resolve_config(o);
  const fs::path src = need_bundle(cfg);
  const auto bundle = load_bundle(src);
  const auto embs = load_bundle_embeddings(src, bundle);
  const auto a = stage_score(bundle.video_id, embs.captions, embs.summary, cfg);
  const fs::path out = cfg.paths.output_dir;
  write_json_file(out / "scores.json", scores_to_json(a));
  std::ostringstream trace;
  write_trace_table(trace, a.trace);
  write_text_file(out / "trace.tsv", trace.str());
  std::cout << "D=" << format_double(a.diversity) << " lambda=" << format_double(a.lambda)
            << " mean_S=" << format_double(a.scores.mean()) << "\n";
  return 0;
}

int cmd_segment(const Overrides& o) {
  const auto cfg = resolve_config(o);
  const fs::path src = need_bundle(cfg);
  const auto bundle = load_bundle(src);
  const auto captions = read_embeddings(resolve_ref(src, bundle.embeddings_ref));
  const auto s = stage_segment(src, bundle, captions, cfg);
  write_json_file(fs::path(cfg.paths.output_dir) / "segmentation.json", segmentation_to_json(s));
  std::cout << s.segmentation.n_scenes() << " scenes from " << s.source << "\n";
  return 0;
}

int cmd_select(const Overrides& o, const std::string& scores_path, const std::string& seg_path) {
  const auto cfg = resolve_config(o);
  const auto scores = load_scores(scores_path);
  const auto seg = load_segmentation(seg_path);
  const auto sel = stage_select(scores.scores, seg.segmentation, cfg.budget_ratio);
  const fs::path out = cfg.paths.output_dir;
  write_json_file(out / "selection.json", selection_to_json(sel, cfg.budget_ratio));
  write_text_file(out / "frames.tsv", frame_table(scores.scores, seg.segmentation, sel.frame_mask));
  std::cout << sel.bitstring() << "\n";
  return 0;
}

int cmd_evaluate(const Overrides& o, const std::string& scores_path, const std::optional<std::string>& selection_path) {
  const auto cfg = resolve_config(o);
  const auto bundle = load_bundle(need_bundle(cfg));
  const auto scores = load_scores(scores_path);
  nlohmann::json j = eval_to_json(stage_evaluate(scores.scores, bundle, cfg.eval_resolution), cfg.eval_resolution);
  if (cfg.paths.ground_truth) {
    if (!selection_path) throw Error(Errc::ConfigError, "--ground-truth needs --selection");
    const auto sel = read_json_file(*selection_path);
    std::vector<bool> mask;
    for (char ch : sel.at("bitstring").get<std::string>()) mask.push_back(ch == '1');
    const auto [p, r] = personalization_pr(mask, read_mask_file(*cfg.paths.ground_truth));
    j["precision"] = p;
    j["recall"] = r;
  }
  write_json_file(fs::path(cfg.paths.output_dir) / "evaluation.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_run(const Overrides& o) {
  const auto cfg = resolve_config(o);
  need_bundle(cfg);
  const auto r = run_pipeline(cfg);
  std::cout << r.video_id << ": D=" << format_double(r.score.diversity) << " lambda=" << format_double(r.score.lambda)
            << " selected " << r.selection.selected_frames() << "/" << r.score.scores.size() << " frames\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caption-driven video summarization"};
  app.require_subcommand(1);

  Overrides o;
  std::optional<std::string> init_out;
  std::string scores_path = "out/scores.json";
  std::string seg_path = "out/segmentation.json";
  std::optional<std::string> selection_path;

  auto* init = app.add_subcommand("init-config", "print the default config");
  init->add_option("-o,--out", init_out, "write to a file instead of stdout");

  auto* ingest = app.add_subcommand("ingest", "embed captions and summary into EMB1 files");
  add_common(ingest, o);

  auto* caption = app.add_subcommand("caption", "caption a frame list into the bundle");
  add_common(caption, o);
  caption->add_option("--frames", o.frames, "tab-separated index, time_sec, image uri")->required();

  auto* summarize = app.add_subcommand("summarize", "generate the text summary");
  add_common(summarize, o);
  summarize->add_option("--templates", o.templates, "prompt template directory");

  auto* personalize = app.add_subcommand("personalize", "generate a summary tailored to a user query");
  add_common(personalize, o);
  personalize->add_option("--templates", o.templates, "prompt template directory");
  personalize->add_option("-q,--query", o.user_query, "user query")->required();

  auto* score = app.add_subcommand("score", "diversity, training and frame scores");
  add_common(score, o);
  add_model(score, o);

  auto* segment = app.add_subcommand("segment", "KTS scene segmentation");
  add_common(segment, o);
  segment->add_option("--scenes", o.scenes, "force the scene count");

  auto* select = app.add_subcommand("select", "knapsack scene selection");
  add_common(select, o);
  select->add_option("--scores", scores_path, "scores.json")->capture_default_str();
  select->add_option("--segmentation", seg_path, "segmentation.json")->capture_default_str();
  select->add_option("--budget", o.budget, "summary length as a fraction of n");

  auto* evaluate = app.add_subcommand("evaluate", "rank correlation and precision/recall");
  add_common(evaluate, o);
  evaluate->add_option("--scores", scores_path, "scores.json")->capture_default_str();
  evaluate->add_option("--selection", selection_path, "selection.json (for precision/recall)");
  evaluate->add_option("--ground-truth", o.ground_truth, "0/1 mask over downsampled frames");
  evaluate->add_option("--resolution", o.eval_resolution, "original | downsampled");

  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run, o);
  add_model(run, o);
  run->add_option("--templates", o.templates, "prompt template directory");
  run->add_option("--budget", o.budget, "summary length as a fraction of n");
  run->add_option("-q,--query", o.user_query, "user query for a personalized summary");
  run->add_option("--frames", o.frames, "frame list to caption first");
  run->add_option("--ground-truth", o.ground_truth, "0/1 mask over downsampled frames");
  run->add_option("--resolution", o.eval_resolution, "original | downsampled");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*init) return cmd_init_config(init_out);
    if (*ingest) return cmd_ingest(o);
    if (*caption) return cmd_caption(o);
    if (*summarize) return cmd_summarize(o, false);
    if (*personalize) return cmd_summarize(o, true);
    if (*score) return cmd_score(o);
    if (*segment) return cmd_segment(o);
    if (*select) return cmd_select(o, scores_path, seg_path);
    if (*evaluate) return cmd_evaluate(o, scores_path, selection_path);
    if (*run) return cmd_run(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "capsum: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "capsum: malformed JSON: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "capsum: %s\n", e.what());
    return 3;
  }
  return 1;
}
