#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <thread>

#include "capsum/bundle.hpp"
#include "capsum/clients.hpp"
#include "capsum/embedding_io.hpp"
#include "capsum/http_clients.hpp"
#include "capsum/prompt.hpp"
#include "test_util.hpp"

using namespace capsum;
namespace fs = std::filesystem;

namespace {

VideoBundle two_caption_bundle() {
  VideoBundle b;
  b.video_id = "v";
  b.n_frames_original = 4;
  b.captions = {{0, 0.0, "a dog"}, {1, 0.5, "a cat"}};
  b.embeddings_ref = "v.emb";
  return b;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::ParseError;
}

}  // namespace

TEST(Bundle, MinimalTwoCaptions) {
  const auto b = parse_bundle(dump_bundle(two_caption_bundle()));
  EXPECT_EQ(b.n(), 2u);
  EXPECT_TRUE(b.annotations.empty());
}

TEST(Bundle, WrongAnnotationLengthIsSchemaError) {
  auto b = two_caption_bundle();
  b.annotations = {{1, 2, 3}};
  EXPECT_EQ(code_of([&] { validate_bundle(b); }), Errc::SchemaError);
  EXPECT_EQ(code_of([&] { (void)dump_bundle(b); }), Errc::SchemaError);
}

TEST(Bundle, InvariantViolations) {
  auto b = two_caption_bundle();
  b.captions[1].frame_index = 0;
  EXPECT_EQ(code_of([&] { validate_bundle(b); }), Errc::SchemaError);
  b = two_caption_bundle();
  b.captions.pop_back();
  EXPECT_EQ(code_of([&] { validate_bundle(b); }), Errc::SchemaError);
  b = two_caption_bundle();
  b.summary_text = "";
  EXPECT_EQ(code_of([&] { validate_bundle(b); }), Errc::SchemaError);
  b = two_caption_bundle();
  b.captions[0].text.clear();
  EXPECT_EQ(code_of([&] { validate_bundle(b); }), Errc::SchemaError);
}

TEST(Bundle, MalformedJsonIsParseError) {
  EXPECT_EQ(code_of([] { (void)parse_bundle("{not json"); }), Errc::ParseError);
  EXPECT_EQ(code_of([] { (void)parse_bundle("{}"); }), Errc::SchemaError);
}

TEST(Bundle, ShippedFixtureRoundTripsByteIdentical) {
  const fs::path src = fs::path(CAPSUM_FIXTURE_DIR) / "bundle.json";
  const auto original = read_file_bytes(src);
  const auto b = load_bundle(src);
  EXPECT_EQ(b.annotations.size(), 3u);
  test::TempDir tmp;
  save_bundle(b, tmp.path() / "bundle.json");
  EXPECT_EQ(read_file_bytes(tmp.path() / "bundle.json"), original);
  EXPECT_EQ(load_bundle(tmp.path() / "bundle.json"), b);
}

TEST(Bundle, MetadataKeysAreOptional) {
  auto b = two_caption_bundle();
  b.metadata.title = "t";
  const auto back = parse_bundle(dump_bundle(b));
  EXPECT_EQ(back.metadata.title, "t");
  EXPECT_FALSE(back.metadata.genre);
  EXPECT_FALSE(back.metadata.query_category);
}

TEST(EmbeddingIo, OneByOneFileIs16Bytes) {
  const auto bytes = encode_embeddings(EmbeddingMatrix(Matrix(1, 1, std::vector<double>{2.0})));
  ASSERT_EQ(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EMB1");
  EXPECT_EQ(decode_embeddings(bytes).matrix()(0, 0), 2.0);
}

TEST(EmbeddingIo, NanAndZeroRowsRejected) {
  EXPECT_EQ(code_of([] { EmbeddingMatrix(Matrix(1, 2, std::vector<double>{NAN, 1.0})); }), Errc::ZeroNormRow);
  EXPECT_EQ(code_of([] { EmbeddingMatrix(Matrix(2, 2, std::vector<double>{1.0, 0.0, 0.0, 0.0})); }),
            Errc::ZeroNormRow);
  // nonzero in double, zero once rounded to float32
  EXPECT_EQ(code_of([] { (void)encode_embeddings(EmbeddingMatrix(Matrix(1, 1, std::vector<double>{1e-50}))); }),
            Errc::ZeroNormRow);
}

TEST(EmbeddingIo, RandomRoundTripExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Matrix m(5, 8);
  for (std::size_t i = 0; i < 5; ++i)
    for (auto& v : m.row(i)) v = static_cast<float>(g(rng));
  const EmbeddingMatrix e(m);
  test::TempDir tmp;
  write_embeddings(e, tmp.path() / "m.emb");
  EXPECT_EQ(read_embeddings(tmp.path() / "m.emb").matrix(), m);
}

TEST(EmbeddingIo, CorruptFiles) {
  auto bytes = encode_embeddings(EmbeddingMatrix(Matrix(2, 3, 1.0)));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { (void)decode_embeddings(bad); }), Errc::BadMagic);
  auto shortened = bytes;
  shortened.pop_back();
  EXPECT_EQ(code_of([&] { (void)decode_embeddings(shortened); }), Errc::TruncatedFile);
  EXPECT_EQ(code_of([&] { (void)decode_embeddings(std::vector<char>(bytes.begin(), bytes.begin() + 6)); }),
            Errc::TruncatedFile);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_EQ(code_of([&] { (void)decode_embeddings(longer); }), Errc::ParseError);
  EXPECT_EQ(code_of([] { (void)read_embeddings("/nonexistent/x.emb"); }), Errc::IOError);
}

TEST(FixtureEmbed, DeterministicAndUnitNorm) {
  const auto a1 = fixture_embed("a", 4, 7);
  const auto a2 = fixture_embed("a", 4, 7);
  EXPECT_EQ(a1, a2);
  const auto b = fixture_embed("b", 4, 7);
  EXPECT_NEAR(norm2(a1), 1.0, 1e-12);
  EXPECT_NEAR(norm2(b), 1.0, 1e-12);
  EXPECT_LT(cosine(a1, b), 1.0);
  for (const char* t : {"", "the", "a dog running on the grass", "x y z"})
    EXPECT_NEAR(norm2(fixture_embed(t, 64, 11)), 1.0, 1e-12) << t;
  EXPECT_NE(fixture_embed("a", 4, 7), fixture_embed("a", 4, 8));
}

TEST(FetchCaptions, FixtureIsDeterministicAndOrdered) {
  std::vector<FrameRef> frames{{0, 0.0, "f0.jpg"}, {2, 1.0, "f2.jpg"}, {5, 2.5, "f5.jpg#a dog on a sofa"}};
  FixtureCaptionClient client;
  const auto a = fetch_captions(frames, client);
  const auto b = fetch_captions(frames, client, {"a photo of", 1});
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[2].text, "a dog on a sofa");
  EXPECT_EQ(a[1].frame_index, 2u);
  EXPECT_EQ(a[1].time_sec, 1.0);
}

TEST(FetchCaptions, PromptIsStripped) {
  EXPECT_EQ(strip_caption_prompt("a photo of a dog running", "a photo of"), "a dog running");
  EXPECT_EQ(strip_caption_prompt("A Photo Of a dog", "a photo of"), "a dog");
  EXPECT_EQ(strip_caption_prompt("a photograph", "a photo"), "a photograph");
  EXPECT_EQ(strip_caption_prompt("a dog", "a photo of"), "a dog");
}

namespace {
struct ConstCaption final : CaptionClient {
  std::string text;
  std::string caption(const FrameRef&, const std::string&) const override { return text; }
};
struct CountingCaption final : CaptionClient {
  mutable std::atomic<int> in_flight{0};
  mutable std::atomic<int> peak{0};
  std::string caption(const FrameRef& f, const std::string& p) const override {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return p + " frame " + std::to_string(f.frame_index);
  }
};
}  // namespace

TEST(FetchCaptions, EmptyCaptionAfterStripping) {
  ConstCaption c;
  c.text = "a photo of";
  EXPECT_EQ(code_of([&] { (void)fetch_captions({{0, 0.0, "x"}}, c); }), Errc::EmptyCaption);
}

TEST(FetchCaptions, InFlightBounded) {
  std::vector<FrameRef> frames;
  for (std::uint64_t i = 0; i < 24; ++i) frames.push_back({i, 0.5 * static_cast<double>(i), "f"});
  CountingCaption c;
  const auto out = fetch_captions(frames, c, {"a photo of", 3});
  EXPECT_LE(c.peak.load(), 3);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].text, "frame " + std::to_string(i));
}

TEST(FrameList, Parses) {
  std::istringstream in("# header\n0\t0\ta.jpg\n\n3\t1.5\tdir/b c.jpg\n");
  const auto f = parse_frame_list(in);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[1].frame_index, 3u);
  EXPECT_EQ(f[1].uri, "dir/b c.jpg");
  std::istringstream bad("0 0 a.jpg\n");
  EXPECT_EQ(code_of([&] { (void)parse_frame_list(bad); }), Errc::ParseError);
}

TEST(Prompt, TemplatesLoadAndValidate) {
  EXPECT_NO_THROW(load_template(CAPSUM_TEMPLATES_DIR, TemplateId::chain_of_density));
  EXPECT_NO_THROW(load_template(CAPSUM_TEMPLATES_DIR, TemplateId::personalized));
  EXPECT_EQ(code_of([] { PromptTemplate(TemplateId::chain_of_density, "no placeholders"); }), Errc::TemplateError);
  EXPECT_EQ(code_of([] { PromptTemplate(TemplateId::personalized, "[CAPTIONS] only"); }), Errc::TemplateError);
}

TEST(Prompt, TitleOnlyDropsGenreAndQueryLines) {
  auto b = two_caption_bundle();
  b.metadata.title = "Beach day";
  const auto p = render_prompt(load_template(CAPSUM_TEMPLATES_DIR, TemplateId::chain_of_density), b, std::nullopt);
  EXPECT_NE(p.find("Title: \"\"\"Beach day\"\"\""), std::string::npos);
  EXPECT_EQ(p.find("Genre:"), std::string::npos);
  EXPECT_EQ(p.find("Query category:"), std::string::npos);
  for (auto ph : {kTitle, kGenre, kQuery, kCaptions, kUserQuery}) EXPECT_EQ(p.find(ph), std::string::npos) << ph;
  EXPECT_NE(p.find("a dog\na cat"), std::string::npos);
}

TEST(Prompt, PersonalizedNeedsQuery) {
  const auto tpl = load_template(CAPSUM_TEMPLATES_DIR, TemplateId::personalized);
  EXPECT_EQ(code_of([&] { (void)render_prompt(tpl, two_caption_bundle(), std::nullopt); }), Errc::TemplateError);
  const auto p = render_prompt(tpl, two_caption_bundle(), std::string("dogs"));
  EXPECT_NE(p.find("dogs"), std::string::npos);
  EXPECT_EQ(code_of([] {
              (void)render_prompt(load_template(CAPSUM_TEMPLATES_DIR, TemplateId::chain_of_density),
                                  two_caption_bundle(), std::string("dogs"));
            }),
            Errc::TemplateError);
}

TEST(Prompt, CaptionTextCannotInjectPlaceholders) {
  auto b = two_caption_bundle();
  b.captions[0].text = "a sign reading [TITLE]";
  const auto p = render_prompt(load_template(CAPSUM_TEMPLATES_DIR, TemplateId::chain_of_density), b, std::nullopt);
  EXPECT_NE(p.find("a sign reading [TITLE]"), std::string::npos);
}

TEST(Summary, FixtureEchoFirst) {
  const auto tpl = load_template(CAPSUM_TEMPLATES_DIR, TemplateId::chain_of_density);
  FixtureLlmClient llm(FixtureLlmClient::Mode::echo_first);
  EXPECT_EQ(generate_text_summary(two_caption_bundle(), tpl, std::nullopt, llm), "a dog");
}

TEST(Summary, ExtractFromCompletion) {
  EXPECT_EQ(extract_summary_text(R"([{"Missing_Entities":"x","Denser_Summary":"one"},{"Denser_Summary":"two"}])"),
            "two");
  EXPECT_EQ(extract_summary_text(R"({"summary": " s "})"), "s");
  EXPECT_EQ(extract_summary_text("  plain text \n"), "plain text");
}

// ---------------------------------------------------------------------------
// HTTP clients against a local server

namespace {

class LocalServer {
 public:
  explicit LocalServer(const std::function<void(httplib::Server&)>& routes) {
    routes(svr_);
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~LocalServer() {
    svr_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

HttpEndpoint fast(const std::string& url, int retries = 3) {
  HttpEndpoint ep;
  ep.url = url;
  ep.max_retries = retries;
  ep.backoff = std::chrono::milliseconds(1);
  ep.timeout = std::chrono::milliseconds(2000);
  return ep;
}

}  // namespace

TEST(HttpClients, WireContractAndRetries) {
  std::atomic<int> llm_calls{0};
  std::string seen_auth;
  LocalServer srv([&](httplib::Server& s) {
  s.Post("/caption", [](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"text", j.at("prompt").get<std::string>() + " a boat"}}.dump(),
                    "application/json");
  });
  s.Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    if (++llm_calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"text": "[{\"Denser_Summary\": \"boats\"}]"})", "application/json");
  });
  s.Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"embedding": [0.5, 0.25, 1]})", "application/json");
  });
  s.Post("/forbidden", [](const httplib::Request&, httplib::Response& res) { res.status = 403; });
  });

  const HttpCaptionClient cap(fast(srv.url("/caption")));
  const auto caps = fetch_captions({{0, 0.0, "x.jpg"}}, cap);
  EXPECT_EQ(caps[0].text, "a boat");

  auto ep = fast(srv.url("/complete"));
  ep.api_key = "k";
  const HttpLlmClient llm(ep);
  EXPECT_EQ(extract_summary_text(llm.complete("p")), "boats");
  EXPECT_EQ(llm_calls.load(), 3);
  EXPECT_EQ(seen_auth, "Bearer k");

  const HttpEmbeddingClient emb(fast(srv.url("/embed")));
  EXPECT_EQ(emb.embed("t"), (Vector{0.5, 0.25, 1.0}));

  const HttpLlmClient forbidden(fast(srv.url("/forbidden")));
  EXPECT_EQ(code_of([&] { (void)forbidden.complete("p"); }), Errc::ClientError);

  llm_calls = 0;
  const HttpLlmClient few(fast(srv.url("/complete"), 1));
  EXPECT_EQ(code_of([&] { (void)few.complete("p"); }), Errc::ClientError);
  EXPECT_EQ(llm_calls.load(), 2);
}

TEST(HttpClients, UnreachableEndpointFailsAfterRetries) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }  // closed again, so nothing listens there
  const HttpCaptionClient cap(fast("http://127.0.0.1:" + std::to_string(port) + "/caption", 2));
  try {
    (void)fetch_captions({{0, 0.0, "x"}}, cap);
    FAIL() << "expected ClientError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClientError);
    EXPECT_NE(std::string(e.what()).find("3 attempts"), std::string::npos) << e.what();
  }
}
