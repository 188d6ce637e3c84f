// Regenerates data/fixture: a 36-frame, five-scene video with captions,
// three annotators, an LLM summary from the offline client, and EMB1
// embeddings from the offline embedder (dim 64, seed 7).
//
//   make_fixture <out_dir> [templates_dir]

#include <cstdio>
#include <filesystem>
#include <string>

#include "capsum/pipeline.hpp"

using namespace capsum;

namespace {

constexpr std::size_t kOriginalPerFrame = 6;  // 12 fps source, 2 fps downsampled

const std::vector<std::vector<std::string>> kScenes = {
    {"a brown dog running on the grass in a park", "a brown dog chasing a ball on the grass",
     "a brown dog running across the park lawn", "a dog catching a ball in the park",
     "a brown dog running on the grass in a park", "a dog with a ball on the grass",
     "a brown dog fetching a ball in the park", "a dog lying on the park grass"},
    {"a man riding a bicycle down a city street", "a cyclist riding a bicycle past parked cars",
     "a man on a bicycle at a city traffic light", "a man riding a bicycle down a city street",
     "a cyclist turning a bicycle on a city street"},
    {"two children playing on a playground slide", "children climbing a playground slide",
     "two children on a swing at the playground", "a child sliding down a playground slide",
     "two children playing on a playground slide", "children running around the playground",
     "a child on the playground swing", "two children laughing at the playground",
     "children playing on a playground slide", "a child climbing the playground ladder"},
    {"a red train arriving at a station platform", "passengers waiting on a train platform",
     "a red train stopped at the station platform", "passengers boarding a red train"},
    {"a woman cooking pasta in a kitchen", "a woman stirring a pot of pasta in the kitchen",
     "a pot of pasta boiling on a kitchen stove", "a woman tasting pasta in the kitchen",
     "a woman cooking pasta in a kitchen", "a plate of pasta on a kitchen table",
     "a woman serving pasta in the kitchen", "a woman cooking sauce in a kitchen",
     "a woman cleaning the kitchen table"},
};

// Per-scene base importance (1..5) for each annotator; frames inside a scene
// vary by a small deterministic offset so ties occur but are not total.
const std::vector<std::vector<int>> kAnnotatorBase = {{5, 2, 4, 3, 2}, {4, 2, 5, 3, 1}, {5, 3, 4, 1, 2}};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: make_fixture <out_dir> [templates_dir]\n");
    return 2;
  }
  const fs::path out = argv[1];
  const fs::path templates = argc > 2 ? fs::path(argv[2]) : fs::path(CAPSUM_DEFAULT_TEMPLATES_DIR);
  fs::create_directories(out);

  VideoBundle b;
  b.video_id = "fixture_park";
  b.fps_downsampled = 2.0;
  std::vector<std::size_t> scene_of;
  for (std::size_t s = 0; s < kScenes.size(); ++s) scene_of.insert(scene_of.end(), kScenes[s].size(), s);
  const std::size_t n = scene_of.size();
  b.n_frames_original = n * kOriginalPerFrame;
  b.metadata.title = "A day around town";
  b.metadata.genre = "vlog";
  b.metadata.query_category = "pets and outdoor activities";

  std::string frame_list;
  for (std::size_t s = 0, i = 0; s < kScenes.size(); ++s)
    for (const auto& text : kScenes[s]) {
      b.captions.push_back({i, static_cast<double>(i) / b.fps_downsampled, text});
      frame_list += std::to_string(i) + '\t' + format_double(static_cast<double>(i) / b.fps_downsampled) +
                    "\tframes/" + std::to_string(i) + ".jpg#" + text + '\n';
      ++i;
    }

  for (std::size_t a = 0; a < kAnnotatorBase.size(); ++a) {
    std::vector<double> ann(b.n_frames_original);
    for (std::size_t f = 0; f < ann.size(); ++f) {
      const std::size_t frame = f / kOriginalPerFrame;
      const std::size_t scene = scene_of[frame];
      const int wobble = static_cast<int>((frame * 7 + a * 3) % 5 == 0);
      ann[f] = std::clamp(kAnnotatorBase[a][scene] - wobble, 1, 5);
    }
    b.annotations.push_back(std::move(ann));
  }

  b.embeddings_ref = "fixture.emb";
  b.summary_embedding_ref = "fixture_summary.emb";
  FixtureLlmClient llm(FixtureLlmClient::Mode::majority);
  b.summary_text = generate_text_summary(b, load_template(templates, TemplateId::chain_of_density), std::nullopt, llm);

  FixtureEmbeddingClient embedder(64, 7);
  write_embeddings(embed_texts(caption_texts(b), embedder), out / b.embeddings_ref);
  write_embeddings(embed_texts({*b.summary_text}, embedder), out / *b.summary_embedding_ref);
  save_bundle(b, out / "bundle.json");
  write_text_file(out / "frames.tsv", frame_list);

  // ground truth for the query "dog playing with a ball": the first scene
  std::string mask;
  for (std::size_t i = 0; i < n; ++i) mask += scene_of[i] == 0 ? '1' : '0';
  write_text_file(out / "ground_truth.txt", mask + "\n");
  std::printf("wrote %s (%zu frames)\n", (out / "bundle.json").string().c_str(), n);
  return 0;
}
