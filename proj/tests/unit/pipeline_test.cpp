#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pixelmod/pipeline.hpp"
#include "pixelmod/synthetic.hpp"
#include "support/test_support.hpp"

namespace pixelmod::pipeline {
namespace {

using pixelmod::testing::fixture_path;
using pixelmod::testing::TempDir;

std::filesystem::path image(const std::string& name) {
  return fixture_path("images/" + name);
}

// Counts provider runs per image path and can be told to fail on some.
class RecordingProvider : public ocr::OcrProvider {
 public:
  std::string name() const override { return "recording"; }
  ocr::Capabilities capabilities() const override { return {}; }
  ocr::ProviderOutput run(const ocr::ImageSource& img) override {
    std::lock_guard lock(mutex);
    ++calls;
    const std::string p = img.path ? img.path->filename().string() : "";
    if (failing.contains(p)) {
      throw Error(ErrorCode::kProviderUnavailable, "engine down for " + p);
    }
    return inner.run(img);
  }
  std::mutex mutex;
  int calls = 0;
  std::set<std::string> failing;
  ocr::SidecarProvider inner;
};

struct World {
  MemoryCatalog catalog;
  index::BinaryIndex index{HashKind::kPdq256};
  RecordingProvider provider;
  ocr::LabelCache cache;

  void add(const std::string& id, const std::filesystem::path& path) {
    catalog.add_file(id, path);
    index.insert(id, *catalog.hash_of(id, HashKind::kPdq256));
  }
  Pipeline pipeline(PipelineConfig config = {}) {
    return Pipeline(config, index, catalog, provider, cache);
  }
};

Seed seed_from(const std::string& id, const std::filesystem::path& path) {
  return make_seed(id, ocr::ImageSource::from_file(path), HashKind::kPdq256);
}

// Identical, re-encoded and a look-alike with other text.
void add_fraud_corpus(World& w) {
  w.add("identical", image("fraud_map.png"));
  w.add("reencoded", image("fraud_map_q75.jpg"));
  w.add("twin", image("fraud_map_twin.png"));
  for (const char* name : {"camera", "coffee", "rocket", "clock", "stop_the_steal"}) {
    w.add(name, image(std::string(name) + ".png"));
  }
}

const ModerationCandidate* find(const std::vector<ModerationCandidate>& cs,
                                const std::string& id) {
  for (const auto& c : cs) {
    if (c.image_id == id) return &c;
  }
  return nullptr;
}

TEST(Query, ContextualMismatchIsRejected) {
  World w;
  add_fraud_corpus(w);
  const auto result = w.pipeline().query(seed_from("seed", image("fraud_map.png")));
  ASSERT_EQ(result.candidates.size(), 3u);
  EXPECT_EQ(find(result.candidates, "identical")->decision, Decision::kAccepted);
  EXPECT_EQ(find(result.candidates, "reencoded")->decision, Decision::kAccepted);
  const auto* twin = find(result.candidates, "twin");
  EXPECT_EQ(twin->decision, Decision::kRejectedText);
  ASSERT_TRUE(twin->text_similarity.has_value());
  EXPECT_LT(*twin->text_similarity, 0.05);
  EXPECT_EQ(twin->distance, 28);

  const auto& r = result.report;
  EXPECT_EQ(r.visual_match_count, 3);
  EXPECT_EQ(r.accepted_count, 2);
  EXPECT_EQ(r.rejected_count, 1);
  EXPECT_EQ(r.accepted_count + r.rejected_count + r.visual_only_count + r.errored_count,
            r.visual_match_count);
}

TEST(Query, CandidatesAreCanonicallyOrdered) {
  World w;
  add_fraud_corpus(w);
  const auto cs = w.pipeline().query(seed_from("seed", image("fraud_map.png"))).candidates;
  EXPECT_TRUE(std::is_sorted(cs.begin(), cs.end(), candidate_before));
  EXPECT_EQ(cs.back().image_id, "twin");
  EXPECT_EQ(cs.front().image_id, "identical");
}

TEST(Query, NoVisualMatchesSkipsOcr) {
  World w;
  add_fraud_corpus(w);
  const auto result = w.pipeline().query(seed_from("seed", image("moon.png")));
  EXPECT_TRUE(result.candidates.empty());
  EXPECT_EQ(result.report.visual_match_count, 0);
  EXPECT_LE(result.report.ocr_calls_made, 1);
  EXPECT_EQ(w.provider.calls, 0);
}

TEST(Query, SeedIsExcludedByIdNotByHash) {
  World w;
  add_fraud_corpus(w);
  const auto cs = w.pipeline().query(seed_from("identical", image("fraud_map.png"))).candidates;
  EXPECT_EQ(find(cs, "identical"), nullptr);
  ASSERT_NE(find(cs, "reencoded"), nullptr);
  EXPECT_EQ(cs.size(), 2u);
}

class EmptySeedLabel : public ::testing::Test {
 protected:
  void SetUp() override {
    add_fraud_corpus(w);
    // Same pixels, no sidecar: the seed has no overlay text.
    std::filesystem::copy_file(image("fraud_map.png"), dir / "seed.png");
  }
  TempDir dir;
  World w;
};

TEST_F(EmptySeedLabel, AcceptVisualOnlyPolicy) {
  const auto result = w.pipeline().query(seed_from("seed", dir / "seed.png"));
  ASSERT_EQ(result.candidates.size(), 3u);
  for (const auto& c : result.candidates) {
    EXPECT_EQ(c.decision, Decision::kAcceptedVisualOnly);
    EXPECT_FALSE(c.text_similarity.has_value());
  }
  EXPECT_EQ(result.report.visual_only_count, 3);
  EXPECT_EQ(result.report.ocr_calls_made, 1);  // only the seed
}

TEST_F(EmptySeedLabel, RejectAllPolicy) {
  PipelineConfig config;
  config.empty_query_policy = EmptyQueryPolicy::kRejectAll;
  const auto result = w.pipeline(config).query(seed_from("seed", dir / "seed.png"));
  ASSERT_EQ(result.candidates.size(), 3u);
  for (const auto& c : result.candidates) {
    EXPECT_EQ(c.decision, Decision::kRejectedText);
    EXPECT_FALSE(c.text_similarity.has_value());
  }
  EXPECT_EQ(result.report.rejected_count, 3);
}

TEST(Query, OcrThriftCountsOnlyUncachedLabels) {
  World w;
  add_fraud_corpus(w);
  auto p = w.pipeline();
  const auto first = p.query(seed_from("seed", image("fraud_map_twin.png")));
  // Seed shares its hash with "twin"; identical/reencoded are new.
  EXPECT_EQ(first.report.visual_match_count, 3);
  EXPECT_EQ(first.report.ocr_calls_made, 1 + 2);
  EXPECT_EQ(w.provider.calls, 3);
  const auto again = p.query(seed_from("seed", image("fraud_map_twin.png")));
  EXPECT_EQ(again.report.ocr_calls_made, 0);
  EXPECT_EQ(w.provider.calls, 3);
}

TEST(Query, OcrFailureOnAMatchIsErroredNotDropped) {
  World w;
  add_fraud_corpus(w);
  w.provider.failing = {"fraud_map_q75.jpg"};
  const auto result = w.pipeline().query(seed_from("seed", image("fraud_map.png")));
  const auto* c = find(result.candidates, "reencoded");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->decision, Decision::kErrored);
  EXPECT_FALSE(c->text_similarity.has_value());
  ASSERT_TRUE(c->error.has_value());
  EXPECT_NE(c->error->find("engine down"), std::string::npos);
  EXPECT_EQ(result.report.errored_count, 1);
  EXPECT_EQ(result.report.accepted_count, 1);
}

TEST(Query, OcrFailureOnTheSeedThrows) {
  World w;
  add_fraud_corpus(w);
  w.provider.failing = {"fraud_map.png"};
  EXPECT_THROW(w.pipeline().query(seed_from("seed", image("fraud_map.png"))), Error);
}

TEST(Query, LineOrderOfTheSidecarDoesNotMatter) {
  TempDir dir;
  World w;
  add_fraud_corpus(w);
  std::filesystem::copy_file(image("fraud_map.png"), dir / "a.png");
  std::filesystem::copy_file(image("fraud_map.png"), dir / "b.png");
  std::ofstream(dir / "a.png.ocr.txt") << "FRAUD.\nTHE BIGGEST DISGRACE";
  std::ofstream(dir / "b.png.ocr.txt") << "THE BIGGEST DISGRACE\nFRAUD.";
  const auto a = w.pipeline().query(seed_from("seed", dir / "a.png")).candidates;
  World w2;
  add_fraud_corpus(w2);
  const auto b = w2.pipeline().query(seed_from("seed", dir / "b.png")).candidates;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image_id, b[i].image_id);
    EXPECT_EQ(a[i].decision, b[i].decision);
  }
}

TEST(Pipeline, KindMismatchIsRejected) {
  World w;
  PipelineConfig config;
  config.hash_kind = HashKind::kPHash64;
  config.theta_visual = 10;
  EXPECT_THROW(w.pipeline(config), Error);
}

TEST(PipelineConfig, JsonRoundTripAndValidation) {
  PipelineConfig c;
  c.theta_textual = 0.25;
  c.text_metric = text::TextMetric::of(text::MetricKind::kJaroWinkler);
  c.empty_query_policy = EmptyQueryPolicy::kRejectAll;
  const auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(PipelineConfig::from_json(nlohmann::json::object()).theta_visual, 90);
  EXPECT_EQ(PipelineConfig::from_json({{"hash_kind", "phash64"}}).theta_visual, 10);
  EXPECT_THROW(PipelineConfig::from_json({{"bogus", 1}}), Error);
  EXPECT_THROW(PipelineConfig::from_json({{"theta_visual", 300}}), Error);
  EXPECT_THROW(PipelineConfig::from_json({{"theta_textual", 1.5}}), Error);
  EXPECT_THROW(PipelineConfig::from_json({{"theta_visual", "ninety"}}), Error);
}

TEST(CandidateExport, JsonLinesRoundTrip) {
  std::vector<ModerationCandidate> cs = {
      {"a", 3, 0.5, Decision::kAccepted, "s1", {"s1", "s2"}, std::nullopt},
      {"b", 9, std::nullopt, Decision::kAcceptedVisualOnly, "s1", {"s1"}, std::nullopt},
      {"c", 12, std::nullopt, Decision::kErrored, "s2", {"s2"}, "timeout"},
  };
  std::stringstream ss;
  write_candidates_jsonl(ss, cs);
  std::string line;
  std::stringstream copy(ss.str());
  int lines = 0;
  while (std::getline(copy, line)) {
    EXPECT_EQ(nlohmann::json::parse(line).at("schema_version"), kCandidateSchemaVersion);
    ++lines;
  }
  EXPECT_EQ(lines, 3);
  EXPECT_EQ(read_candidates_jsonl(ss), cs);

  std::stringstream future(R"({"schema_version":2,"image_id":"a"})");
  EXPECT_THROW(read_candidates_jsonl(future), Error);
}

// Planted corpus shared by the batch tests below.
class Planted : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    corpus_ = new synthetic::PlantedCorpus(synthetic::generate_planted_corpus(dir_->path()));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete dir_;
  }

  void SetUp() override {
    for (const auto& img : corpus_->corpus) w.add(img.id, img.path);
  }
  std::vector<Seed> seeds() const {
    std::vector<Seed> out;
    for (const auto& s : corpus_->seeds) out.push_back(seed_from(s.id, s.path));
    return out;
  }

  static TempDir* dir_;
  static synthetic::PlantedCorpus* corpus_;
  World w;
};

TempDir* Planted::dir_ = nullptr;
synthetic::PlantedCorpus* Planted::corpus_ = nullptr;

TEST_F(Planted, CompositionMatchesTheRecipe) {
  std::map<synthetic::Role, int> roles;
  for (const auto& img : corpus_->corpus) ++roles[img.role];
  EXPECT_EQ(corpus_->corpus.size(), 200u);
  EXPECT_EQ(corpus_->seeds.size(), 5u);
  EXPECT_EQ(roles[synthetic::Role::kVariant], 40);
  EXPECT_EQ(roles[synthetic::Role::kTwin], 10);
  EXPECT_EQ(roles[synthetic::Role::kDistractor], 150);
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "ground_truth.csv"));
}

TEST_F(Planted, BatchAcceptsExactlyTheVariants) {
  const auto batch = w.pipeline().batch_query(seeds());
  std::set<std::string> accepted, rejected;
  for (const auto& c : batch.candidates) {
    const auto& truth = corpus_->find(c.image_id);
    ASSERT_NE(truth.role, synthetic::Role::kDistractor) << c.image_id;
    if (c.decision == Decision::kAccepted) accepted.insert(c.image_id);
    if (c.decision == Decision::kRejectedText) rejected.insert(c.image_id);
    EXPECT_EQ(c.provenance, std::vector<std::string>{truth.seed_id});
  }
  std::set<std::string> variants, twins;
  for (const auto& img : corpus_->corpus) {
    if (img.role == synthetic::Role::kVariant) variants.insert(img.id);
    if (img.role == synthetic::Role::kTwin) twins.insert(img.id);
  }
  EXPECT_EQ(accepted, variants);
  EXPECT_EQ(rejected, twins);
  EXPECT_EQ(batch.candidates.size(), 50u);
}

TEST_F(Planted, BatchRunsOcrOncePerUniqueHash) {
  w.pipeline().batch_query(seeds());
  // 5 seeds + 50 retrieved images, all with distinct hashes.
  EXPECT_EQ(w.provider.calls, 55);
  EXPECT_EQ(w.cache.misses(), 55u);
}

TEST_F(Planted, SharedMatchCarriesBothSeedsInProvenance) {
  auto ss = seeds();
  Seed again = ss[0];
  again.id = "seed-0-copy";
  const auto batch = w.pipeline().batch_query({ss[0], again});
  ASSERT_FALSE(batch.candidates.empty());
  for (const auto& c : batch.candidates) {
    EXPECT_EQ(c.provenance, (std::vector<std::string>{"seed-0", "seed-0-copy"}));
  }
  const auto single = w.pipeline().query(ss[0]);
  EXPECT_EQ(batch.candidates.size(), single.candidates.size());
}

TEST_F(Planted, DisjointSeedsAddUp) {
  const auto ss = seeds();
  auto p = w.pipeline();
  const auto a = p.query(ss[0]).candidates.size();
  const auto b = p.query(ss[1]).candidates.size();
  EXPECT_EQ(p.batch_query({ss[0], ss[1]}).candidates.size(), a + b);
}

TEST_F(Planted, BatchIsFailSoftPerSeed) {
  auto ss = seeds();
  w.provider.failing = {ss[0].id + ".png"};
  const auto batch = w.pipeline().batch_query(ss);
  EXPECT_TRUE(batch.reports[0].error.has_value());
  EXPECT_FALSE(batch.reports[1].error.has_value());
  EXPECT_EQ(batch.candidates.size(), 40u);

  for (const auto& s : ss) w.provider.failing.insert(s.id + ".png");
  ocr::LabelCache fresh;
  Pipeline cold({}, w.index, w.catalog, w.provider, fresh);
  EXPECT_THROW(cold.batch_query(ss), Error);
}

TEST_F(Planted, OutputIsDeterministic) {
  std::stringstream a, b;
  write_candidates_jsonl(a, w.pipeline().batch_query(seeds()).candidates);
  World other;
  for (const auto& img : corpus_->corpus) other.add(img.id, img.path);
  write_candidates_jsonl(b, other.pipeline().batch_query(seeds()).candidates);
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(Planted, MonotoneInBothThresholds) {
  const auto ss = seeds();
  std::size_t previous_visual = 0;
  for (int radius : {0, 30, 60, 90, 110, 128}) {
    PipelineConfig c;
    c.theta_visual = radius;
    std::size_t visual = 0;
    for (const auto& s : ss) visual += w.pipeline(c).query(s).candidates.size();
    EXPECT_GE(visual, previous_visual) << radius;
    previous_visual = visual;
  }
  std::size_t previous_accepted = SIZE_MAX;
  for (double t : {0.0, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    PipelineConfig c;
    c.theta_textual = t;
    const auto batch = w.pipeline(c).batch_query(ss);
    const auto accepted = std::count_if(batch.candidates.begin(), batch.candidates.end(),
                                        [](const auto& x) { return x.decision == Decision::kAccepted; });
    EXPECT_LE(static_cast<std::size_t>(accepted), previous_accepted) << t;
    previous_accepted = static_cast<std::size_t>(accepted);
  }
}

}  // namespace
}  // namespace pixelmod::pipeline
