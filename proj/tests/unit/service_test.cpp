#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "httplib.h"
#include "pixelmod/corpus_store.hpp"
#include "pixelmod/service.hpp"
#include "pixelmod/synthetic.hpp"
#include "support/test_support.hpp"

namespace pixelmod::service {
namespace {

using nlohmann::json;
using pixelmod::testing::fixture_path;
using pixelmod::testing::read_bytes;
using pixelmod::testing::TempDir;

const synthetic::PlantedCorpus& planted() {
  static TempDir dir;
  static const auto corpus = synthetic::generate_planted_corpus(dir.path());
  return corpus;
}

std::string id_of(const std::filesystem::path& path) {
  return store::sha256_hex(read_bytes(path));
}

json entry_json(const std::filesystem::path& path) { return {{"path", path.string()}}; }

class ServiceTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::unique_ptr<Service> svc;

  void SetUp() override { open(); }

  void open(std::optional<std::string> token = std::nullopt) {
    svc.reset();
    ServiceConfig config;
    config.store_root = dir.path();
    config.api_token = std::move(token);
    svc = std::make_unique<Service>(config);
  }

  Response call(const std::string& method, const std::string& path, const json& body = nullptr,
                std::map<std::string, std::string> query = {},
                std::map<std::string, std::string> headers = {}) {
    Request req;
    req.method = method;
    req.path = path;
    req.query = std::move(query);
    req.headers = std::move(headers);
    if (!body.is_null()) req.body = body.dump();
    return svc->handle(req);
  }

  // Runs a job endpoint to completion and returns the job resource.
  json run_job(const std::string& path, const json& body) {
    const auto r = call("POST", path, body);
    EXPECT_EQ(r.status, 202) << r.body;
    svc->wait_idle();
    const auto job = call("GET", "/v1/jobs/" + r.json()["job_id"].get<std::string>()).json();
    EXPECT_EQ(job["status"], "succeeded") << job.dump();
    return job;
  }

  void ingest_fixtures() {
    run_job("/v1/ingest", {{"entries",
                            {entry_json(fixture_path("images/camera.png")),
                             entry_json(fixture_path("images/moon.png")),
                             entry_json(fixture_path("images/clock.png"))}},
                           {"seed_set", "fixtures"}});
  }
};

TEST_F(ServiceTest, UnknownImageIs404) {
  const auto r = call("POST", "/v1/query", {{"image_id", "deadbeef"}});
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(r.json()["code"], "unknown_image");
  EXPECT_TRUE(r.json().contains("message"));
  EXPECT_TRUE(r.json().contains("details"));
  EXPECT_EQ(call("GET", "/v1/images/deadbeef").status, 404);
  EXPECT_EQ(call("GET", "/v1/jobs/nope").json()["code"], "not_found");
}

TEST_F(ServiceTest, RoutingErrors) {
  EXPECT_EQ(call("GET", "/v2/query").status, 404);
  EXPECT_EQ(call("GET", "/v1/nothing").status, 404);
  const auto r = call("GET", "/v1/query");
  EXPECT_EQ(r.status, 405);
  EXPECT_EQ(r.json()["code"], "method_not_allowed");
}

TEST_F(ServiceTest, UnknownFieldsAndBadValuesAre400) {
  auto r = call("POST", "/v1/query", {{"image_id", "x"}, {"colour", "red"}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.json()["code"], "validation");
  EXPECT_EQ(r.json()["details"]["field"], "colour");

  Request raw{"POST", "/v1/query", {}, {}, "{not json"};
  EXPECT_EQ(svc->handle(raw).status, 400);
  EXPECT_EQ(call("POST", "/v1/query", {{"image_id", 7}}).status, 400);
  EXPECT_EQ(call("POST", "/v1/query", json::object()).status, 400);
  EXPECT_EQ(call("POST", "/v1/query", {{"image_id", "x"}, {"config", {{"theta_visual", -1}}}})
                .status,
            400);
  EXPECT_EQ(call("POST", "/v1/query", {{"image_id", "x"}, {"config", {{"bogus", 1}}}}).status,
            400);
  EXPECT_EQ(call("POST", "/v1/ingest", {{"entries", {{{"path", "a.png"}, {"extra", 1}}}}}).status,
            400);
  EXPECT_EQ(call("GET", "/v1/candidates", nullptr, {{"query", "x"}, {"sort", "asc"}}).status, 400);
  EXPECT_EQ(call("GET", "/v1/candidates", nullptr, {{"query", "x"}, {"page", "two"}}).status, 400);
  EXPECT_EQ(call("POST", "/v1/stories/rebuild", {{"eps", 999}}).status, 400);
  EXPECT_EQ(call("POST", "/v1/stories/rebuild", {{"categories", {{"a", "SPORTS"}}}}).status, 400);
}

TEST_F(ServiceTest, BearerToken) {
  open("s3cret");
  EXPECT_EQ(call("GET", "/v1/metrics").status, 401);
  EXPECT_EQ(call("GET", "/v1/metrics", nullptr, {}, {{"authorization", "Bearer wrong"}}).status,
            401);
  EXPECT_EQ(call("GET", "/v1/metrics").json()["code"], "unauthorized");
  EXPECT_EQ(call("GET", "/v1/metrics", nullptr, {}, {{"authorization", "Bearer s3cret"}}).status,
            200);
}

TEST_F(ServiceTest, IdempotencyKey) {
  const json body = {{"entries", {entry_json(fixture_path("images/camera.png"))}}};
  const std::map<std::string, std::string> key = {{"idempotency-key", "k1"}};
  const auto first = call("POST", "/v1/ingest", body, {}, key);
  const auto again = call("POST", "/v1/ingest", body, {}, key);
  EXPECT_EQ(first.status, 202);
  EXPECT_EQ(again.body, first.body);  // same job, not a second one
  svc->wait_idle();
  EXPECT_EQ(call("GET", "/v1/metrics").json()["jobs"]["succeeded"], 1);

  const json other = {{"entries", {entry_json(fixture_path("images/moon.png"))}}};
  const auto conflict = call("POST", "/v1/ingest", other, {}, key);
  EXPECT_EQ(conflict.status, 409);
  EXPECT_EQ(conflict.json()["code"], "conflict");
}

TEST_F(ServiceTest, IngestJobReportsSummaryAndFailures) {
  const auto job = run_job(
      "/v1/ingest", {{"entries",
                      {entry_json(fixture_path("images/camera.png")),
                       entry_json(dir.path() / "missing.png")}}});
  EXPECT_EQ(job["kind"], "ingest");
  EXPECT_EQ(job["result"]["summary"]["ingested"], 1);
  EXPECT_EQ(job["result"]["summary"]["failed"], 1);

  const auto bad = call("POST", "/v1/ingest", {{"manifest_path", (dir.path() / "none.jsonl").string()}});
  EXPECT_EQ(bad.status, 500);
  EXPECT_EQ(bad.json()["code"], "io_error");
}

TEST_F(ServiceTest, ImagesAndMeta) {
  ingest_fixtures();
  const auto cam = id_of(fixture_path("images/camera.png"));
  const auto bytes = call("GET", "/v1/images/" + cam);
  EXPECT_EQ(bytes.status, 200);
  EXPECT_EQ(bytes.content_type, "image/png");
  const auto want = read_bytes(fixture_path("images/camera.png"));
  EXPECT_EQ(bytes.body, std::string(want.begin(), want.end()));

  const auto meta = call("GET", "/v1/images/" + cam + "/meta").json();
  EXPECT_EQ(meta["image_id"], cam);
  EXPECT_EQ(meta["pdq256"].get<std::string>().size(), 64u);
  EXPECT_FALSE(meta.contains("storage_path"));
  EXPECT_EQ(meta["schema_version"], kApiSchemaVersion);
}

TEST_F(ServiceTest, QueryByUploadAndById) {
  ingest_fixtures();
  const auto bytes = read_bytes(fixture_path("images/camera.png"));
  const std::string b64 = httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
  const auto up = call("POST", "/v1/query", {{"image_base64", b64}});
  ASSERT_EQ(up.status, 200) << up.body;
  const auto j = up.json();
  EXPECT_EQ(j["query_id"], id_of(fixture_path("images/camera.png")));
  EXPECT_TRUE(j["candidates"].is_array());
  EXPECT_EQ(j["config"]["hash_kind"], "pdq256");

  const auto by_id = call("POST", "/v1/query",
                          {{"image_id", id_of(fixture_path("images/moon.png"))},
                           {"config", {{"hash_kind", "phash64"}}}});
  ASSERT_EQ(by_id.status, 200) << by_id.body;
  EXPECT_EQ(by_id.json()["config"]["hash_kind"], "phash64");
  EXPECT_EQ(by_id.json()["config"]["theta_visual"], 10);
  EXPECT_EQ(call("POST", "/v1/query", {{"image_base64", "@@@@"}}).status, 400);
  EXPECT_EQ(call("GET", "/v1/metrics").json()["queries"]["count"], 2);
}

// Seeds 0-3 form the seed set; seed 4 and the corpus are ingested after.
class PlantedService : public ServiceTest {
 protected:
  std::string result_id;

  void SetUp() override {
    ServiceTest::SetUp();
    const auto manifest = dir.path() / "seeds.jsonl";
    {
      std::ofstream out(manifest);
      for (int i = 0; i < 4; ++i) out << entry_json(planted().seeds[i].path).dump() << '\n';
    }
    const auto job = run_job("/v1/ingest", {{"manifest_path", manifest.string()}, {"seed_set", "seeds"}});
    ASSERT_EQ(job["result"]["seed_set"]["members"], 4);
    json entries = json::array({entry_json(planted().seeds[4].path)});
    for (const auto& c : planted().corpus) entries.push_back(entry_json(c.path));
    run_job("/v1/ingest", {{"entries", entries}});
    result_id = batch()["result"]["result_id"];
  }

  json batch() { return run_job("/v1/batch-query", {{"seed_set", "seeds"}}); }

  std::vector<json> all_candidates(const std::string& id, int page_size,
                                   std::map<std::string, std::string> extra = {}) {
    std::vector<json> out;
    for (int page = 1;; ++page) {
      auto q = extra;
      q["query"] = id;
      q["page"] = std::to_string(page);
      q["page_size"] = std::to_string(page_size);
      const auto j = call("GET", "/v1/candidates", nullptr, q).json();
      for (const auto& c : j["candidates"]) out.push_back(c);
      if (page >= j["total_pages"].get<int>()) break;
    }
    return out;
  }
};

TEST_F(PlantedService, BatchQueryAcceptsEveryVariantOfTheSeedSet) {
  const auto job = batch();
  EXPECT_EQ(job["result"]["decision_counts"]["ACCEPTED"], 32);
  EXPECT_EQ(job["result"]["decision_counts"]["REJECTED_TEXT"], 8);
  EXPECT_EQ(job["result"]["seed_set_version"], 1);
  EXPECT_EQ(job["result"]["reports"].size(), 4u);
}

TEST_F(PlantedService, PaginationIsStableAndCanonical) {
  const auto whole = all_candidates(result_id, 500);
  ASSERT_EQ(whole.size(), 40u);
  for (int size : {1, 3, 7, 40}) {
    const auto paged = all_candidates(result_id, size);
    ASSERT_EQ(paged.size(), whole.size());
    for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_EQ(paged[i], whole[i]);
  }
  for (std::size_t i = 1; i < whole.size(); ++i) {
    const auto a = pipeline::ModerationCandidate::from_json(whole[i - 1]);
    const auto b = pipeline::ModerationCandidate::from_json(whole[i]);
    EXPECT_FALSE(pipeline::candidate_before(b, a));
  }
  const auto accepted = all_candidates(result_id, 10, {{"tier", "ACCEPTED"}});
  EXPECT_EQ(accepted.size(), 32u);
  for (const auto& c : all_candidates(result_id, 10, {{"max_distance", "30"}})) {
    EXPECT_LE(c["distance"].get<int>(), 30);
  }
  const auto past_end = call("GET", "/v1/candidates", nullptr,
                             {{"query", result_id}, {"page", "99"}})
                            .json();
  EXPECT_TRUE(past_end["candidates"].empty());
  EXPECT_EQ(call("GET", "/v1/candidates", nullptr, {{"query", result_id}, {"page_size", "501"}})
                .status,
            400);
  EXPECT_EQ(call("GET", "/v1/candidates", nullptr, {{"query", "batch-none"}}).status, 404);
}

TEST_F(PlantedService, ApproveWithPromotionExtendsTheSeedSet) {
  const auto seed4 = id_of(planted().seeds[4].path);
  const auto first = all_candidates(result_id, 500).front();
  const auto r = call("POST", "/v1/review",
                      {{"query_id", "manual"},
                       {"image_id", seed4},
                       {"verdict", "APPROVE"},
                       {"reviewer", "rev-1"},
                       {"promote_to_seed", true},
                       {"seed_set", "seeds"},
                       {"expected_version", 1}});
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(r.json()["seed_set"]["version"], 2);

  // Stale version and repeated promotion are both conflicts.
  const json stale = {{"query_id", "manual"}, {"image_id", seed4}, {"verdict", "APPROVE"},
                      {"reviewer", "rev-1"},  {"promote_to_seed", true}, {"seed_set", "seeds"},
                      {"expected_version", 1}};
  EXPECT_EQ(call("POST", "/v1/review", stale).status, 409);
  auto again = stale;
  again.erase("expected_version");
  EXPECT_EQ(call("POST", "/v1/review", again).json()["code"], "already_member");

  const auto job = batch();
  EXPECT_EQ(job["result"]["decision_counts"]["ACCEPTED"], 40);
  EXPECT_EQ(job["result"]["seed_set_version"], 2);
  std::set<std::string> variants;
  for (const auto& c : planted().corpus) {
    if (c.role == synthetic::Role::kVariant && c.seed_id == planted().seeds[4].id) {
      variants.insert(id_of(c.path));
    }
  }
  int with_new_seed = 0;
  for (const auto& c : all_candidates(job["result"]["result_id"], 100)) {
    if (variants.contains(c["image_id"].get<std::string>())) {
      EXPECT_EQ(c["provenance"], json::array({seed4}));
      ++with_new_seed;
    }
  }
  EXPECT_EQ(with_new_seed, 8);

  // A plain review shows up on the candidate it is about.
  const json dismiss = {{"query_id", first["query_id"]}, {"image_id", first["image_id"]},
                        {"verdict", "DISMISS"},        {"reviewer", "rev-2"},
                        {"note", "satire"}};
  ASSERT_EQ(call("POST", "/v1/review", dismiss).status, 200);
  const auto reviewed = all_candidates(result_id, 500).front();
  EXPECT_EQ(reviewed["review"]["verdict"], "DISMISS");
  EXPECT_EQ(reviewed["review"]["note"], "satire");
}

TEST_F(PlantedService, ReviewValidation) {
  const auto seed4 = id_of(planted().seeds[4].path);
  const json base = {{"query_id", "q"}, {"image_id", seed4}, {"verdict", "APPROVE"},
                     {"reviewer", "r"}};
  auto bad = base;
  bad["verdict"] = "MAYBE";
  EXPECT_EQ(call("POST", "/v1/review", bad).status, 400);
  bad = base;
  bad["reviewer"] = "";
  EXPECT_EQ(call("POST", "/v1/review", bad).status, 400);
  bad = base;
  bad["promote_to_seed"] = true;  // no seed_set
  EXPECT_EQ(call("POST", "/v1/review", bad).status, 400);
  bad = base;
  bad["image_id"] = "nope";
  EXPECT_EQ(call("POST", "/v1/review", bad).status, 404);
}

TEST_F(PlantedService, StoriesRebuildGroupsAcceptedImages) {
  json categories = json::object();
  json flags = json::object();
  for (const auto& c : planted().corpus) {
    if (c.role != synthetic::Role::kVariant) continue;
    categories[id_of(c.path)] = "OUTCOMES";
    flags[id_of(c.path)] = c.id.back() % 2 == 0;
  }
  const auto job = run_job("/v1/stories/rebuild",
                           {{"eps", 90}, {"categories", categories}, {"flags", flags}});
  const auto stories = call("GET", "/v1/stories").json();
  std::size_t members = 0;
  for (const auto& s : stories["stories"]) {
    members += s["members"].size();
    EXPECT_EQ(s["category"], "OUTCOMES");
  }
  EXPECT_EQ(members, 32u);  // every accepted image, once
  EXPECT_EQ(job["result"]["story_count"], stories["stories"].size());
  ASSERT_FALSE(job["result"]["report"].is_null());

  // Story filter on candidates agrees with the stories resource.
  const int story = stories["stories"][0]["story_id"];
  for (const auto& c : all_candidates(result_id, 50, {{"story", std::to_string(story)}})) {
    EXPECT_EQ(c["story_id"], story);
  }

  // Persisted across a restart.
  open();
  EXPECT_EQ(call("GET", "/v1/stories").json()["stories"], stories["stories"]);
  EXPECT_EQ(all_candidates(result_id, 500).size(), 40u);
}

TEST_F(PlantedService, MetricsCountCacheAndJobs) {
  const auto m = call("GET", "/v1/metrics").json();
  EXPECT_EQ(m["images"], 205);
  EXPECT_EQ(m["jobs"]["succeeded"], 3);
  EXPECT_EQ(m["queries"]["count"], 4);
  EXPECT_GT(m["ocr_cache"]["size"].get<int>(), 0);
  EXPECT_GE(m["ocr_cache"]["hit_rate"].get<double>(), 0.0);
}

TEST_F(ServiceTest, ServesOverHttp) {
  ingest_fixtures();
  const int port = svc->serve_background("127.0.0.1");
  httplib::Client client("127.0.0.1", port);
  auto metrics = client.Get("/v1/metrics");
  ASSERT_TRUE(metrics);
  EXPECT_EQ(metrics->status, 200);
  EXPECT_EQ(json::parse(metrics->body)["images"], 3);

  auto missing = client.Post("/v1/query", R"({"image_id":"nope"})", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  const auto cam = id_of(fixture_path("images/camera.png"));
  auto page = client.Get("/v1/images/" + cam);
  ASSERT_TRUE(page);
  EXPECT_EQ(page->get_header_value("Content-Type"), "image/png");
  svc->stop();
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status_for(ErrorCode::kValidation), 400);
  EXPECT_EQ(http_status_for(ErrorCode::kUnknownImage), 404);
  EXPECT_EQ(http_status_for(ErrorCode::kAlreadyMember), 409);
  EXPECT_EQ(http_status_for(ErrorCode::kProviderUnavailable), 503);
  EXPECT_EQ(http_status_for(ErrorCode::kIoError), 500);
}

}  // namespace
}  // namespace pixelmod::service
