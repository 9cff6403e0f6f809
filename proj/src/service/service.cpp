#include "pixelmod/service.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "pixelmod/corpus_store.hpp"
#include "pixelmod/stories.hpp"

namespace pixelmod::service {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Errors that are not pipeline ErrorCodes.
struct ApiError {
  int status;
  std::string code;
  std::string message;
  json details = json::object();
};

Response json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

Response error_response(int status, const std::string& code, const std::string& message,
                        const json& details = json::object()) {
  return json_response(status, {{"code", code}, {"message", message}, {"details", details}});
}

json with_version(json body) {
  body["schema_version"] = kApiSchemaVersion;
  return body;
}

std::string random_id(const std::string& prefix) {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%012llx",
                static_cast<unsigned long long>(rng() & 0xFFFFFFFFFFFFULL));
  return prefix + buf;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json parse_body(const Request& req, std::initializer_list<const char*> allowed) {
  json body = json::object();
  if (req.body.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      throw ApiError{400, "validation", std::string("body is not JSON: ") + e.what()};
    }
  }
  if (!body.is_object()) throw ApiError{400, "validation", "body must be a JSON object"};
  for (const auto& [key, value] : body.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ApiError{400, "validation", "unknown field '" + key + "'", {{"field", key}}};
  }
  return body;
}

void check_query_params(const Request& req, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : req.query) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ApiError{400, "validation", "unknown parameter '" + key + "'", {{"parameter", key}}};
    }
  }
}

template <typename T>
std::optional<T> field(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  try {
    return body[key].get<T>();
  } catch (const json::exception&) {
    throw ApiError{400, "validation", std::string("field '") + key + "' has the wrong type",
                   {{"field", key}}};
  }
}

int int_param(const Request& req, const char* key, int fallback) {
  const auto it = req.query.find(key);
  if (it == req.query.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ApiError{400, "validation", std::string("parameter '") + key + "' must be an integer",
                   {{"parameter", key}}};
  }
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string clean;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean += c;
  }
  if (clean.empty() || clean.size() % 4 != 0) {
    throw ApiError{400, "validation", "image_base64 is not valid base64"};
  }
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw ApiError{400, "validation", "image_base64 is not valid base64"};
  std::size_t pad = 0;
  if (clean.ends_with("==")) {
    pad = 2;
  } else if (clean.ends_with("=")) {
    pad = 1;
  }
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream s(path);
  std::string part;
  while (std::getline(s, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

bool is_accepted(pipeline::Decision d) {
  return d == pipeline::Decision::kAccepted || d == pipeline::Decision::kAcceptedVisualOnly;
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDecodeError:
    case ErrorCode::kTooSmall:
    case ErrorCode::kKindMismatch:
    case ErrorCode::kValidation:
    case ErrorCode::kManifestParse:
    case ErrorCode::kTooFewRecords:
    case ErrorCode::kMissingFlag:
      return 400;
    case ErrorCode::kNotFound:
    case ErrorCode::kUnknownImage:
    case ErrorCode::kMissingImage:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kAlreadyMember:
    case ErrorCode::kDuplicateId:
    case ErrorCode::kVersionMismatch:
      return 409;
    case ErrorCode::kProviderUnavailable:
      return 503;
    case ErrorCode::kIoError:
    case ErrorCode::kChecksumMismatch:
      return 500;
  }
  return 500;
}

struct Service::Impl {
  struct Job {
    std::string id, kind, status = "queued", created_at;
    json result, error;
  };

  ServiceConfig config;
  std::unique_ptr<ocr::OcrProvider> provider;
  store::CorpusStore store;
  ocr::LabelCache cache;

  // Store, labels, results, reviews and stories.
  std::mutex state_mutex;
  std::map<std::string, std::vector<pipeline::ModerationCandidate>> results;
  std::map<std::string, json> latest_review;  // "query_id\nimage_id" -> review
  int review_count = 0;
  json stories_state;  // {params, stories, categories, flags}
  std::map<std::string, int> story_of;

  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::map<std::string, Job> jobs;
  std::deque<std::pair<std::string, std::function<json()>>> queue;
  bool worker_busy = false;
  bool stopping = false;
  std::thread worker;

  std::mutex idempotency_mutex;
  std::map<std::string, std::pair<std::string, Response>> idempotent;

  std::mutex metrics_mutex;
  long long query_count = 0;
  double query_total_ms = 0;
  json last_timings = nullptr;

  httplib::Server server;
  std::thread server_thread;

  Impl(ServiceConfig c, std::unique_ptr<ocr::OcrProvider> p)
      : config(std::move(c)),
        provider(p ? std::move(p) : ocr::make_provider(config.provider)),
        store(config.store_root) {
    config.pipeline.validate();
    fs::create_directories(config.store_root / "results");
    store.prewarm(cache);
    load_reviews();
    load_stories();
    worker = std::thread([this] { run_worker(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(jobs_mutex);
      stopping = true;
    }
    jobs_cv.notify_all();
    worker.join();
  }

  // ---- jobs ----

  std::string enqueue(const std::string& kind, std::function<json()> fn) {
    std::lock_guard lock(jobs_mutex);
    Job job;
    job.id = random_id("job-");
    job.kind = kind;
    job.created_at = now_iso8601();
    const auto id = job.id;
    jobs.emplace(id, std::move(job));
    queue.emplace_back(id, std::move(fn));
    jobs_cv.notify_all();
    return id;
  }

  void run_worker() {
    for (;;) {
      std::pair<std::string, std::function<json()>> next;
      {
        std::unique_lock lock(jobs_mutex);
        jobs_cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        next = std::move(queue.front());
        queue.pop_front();
        worker_busy = true;
        jobs[next.first].status = "running";
      }
      json result, error;
      try {
        result = next.second();
      } catch (const Error& e) {
        error = {{"code", error_code_name(e.code())}, {"message", e.what()}};
      } catch (const ApiError& e) {
        error = {{"code", e.code}, {"message", e.message}};
      } catch (const std::exception& e) {
        error = {{"code", "internal"}, {"message", e.what()}};
      }
      {
        std::lock_guard lock(jobs_mutex);
        auto& job = jobs[next.first];
        job.status = error.is_null() ? "succeeded" : "failed";
        job.result = std::move(result);
        job.error = std::move(error);
        worker_busy = false;
      }
      jobs_cv.notify_all();
    }
  }

  void wait_idle() {
    std::unique_lock lock(jobs_mutex);
    jobs_cv.wait(lock, [&] { return queue.empty() && !worker_busy; });
  }

  // ---- persistence ----

  fs::path results_path(const std::string& id) const {
    return config.store_root / "results" / (id + ".jsonl");
  }

  void save_results(const std::string& id,
                    std::vector<pipeline::ModerationCandidate> candidates) {
    std::sort(candidates.begin(), candidates.end(), pipeline::candidate_before);
    std::ofstream out(results_path(id));
    pipeline::write_candidates_jsonl(out, candidates);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write results " + id);
    results[id] = std::move(candidates);
  }

  const std::vector<pipeline::ModerationCandidate>* find_results(const std::string& id) {
    if (const auto it = results.find(id); it != results.end()) return &it->second;
    if (id.find('/') != std::string::npos || id.find("..") != std::string::npos) return nullptr;
    std::ifstream in(results_path(id));
    if (!in) return nullptr;
    return &(results[id] = pipeline::read_candidates_jsonl(in));
  }

  void load_reviews() {
    std::ifstream in(config.store_root / "reviews.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto r = json::parse(line);
      latest_review[r["query_id"].get<std::string>() + "\n" + r["image_id"].get<std::string>()] = r;
      ++review_count;
    }
  }

  void load_stories() {
    stories_state = {{"params", {{"eps", 90}, {"min_cluster_size", 1}, {"source", "accepted"}}},
                     {"stories", json::array()},
                     {"categories", json::object()},
                     {"flags", json::object()}};
    std::ifstream in(config.store_root / "stories.json");
    if (in) stories_state = json::parse(in);
    index_stories();
  }

  void index_stories() {
    story_of.clear();
    for (const auto& s : stories_state["stories"]) {
      for (const auto& m : s["members"]) story_of[m.get<std::string>()] = s["story_id"].get<int>();
    }
  }

  // ---- helpers ----

  pipeline::PipelineConfig config_with(const json& overrides) {
    json merged = config.pipeline.to_json();
    merged["ocr_workers"] = config.pipeline.ocr_workers;
    if (!overrides.is_null()) {
      if (!overrides.is_object()) throw ApiError{400, "validation", "config must be an object"};
      // A new hash kind without a radius gets that kind's default radius.
      if (overrides.contains("hash_kind") && !overrides.contains("theta_visual")) {
        merged.erase("theta_visual");
      }
      for (const auto& [k, v] : overrides.items()) merged[k] = v;
    }
    return pipeline::PipelineConfig::from_json(merged);
  }

  void record_query_metrics(const pipeline::QueryReport& r) {
    std::lock_guard lock(metrics_mutex);
    ++query_count;
    const auto& t = r.timings;
    query_total_ms += t.hash_ms + t.search_ms + t.ocr_ms + t.text_ms;
    last_timings = r.to_json()["timings"];
  }

  json candidate_item(const pipeline::ModerationCandidate& c) {
    json j = c.to_json();
    const auto s = story_of.find(c.image_id);
    j["story_id"] = s == story_of.end() ? json() : json(s->second);
    const auto r = latest_review.find(c.query_id + "\n" + c.image_id);
    j["review"] = r == latest_review.end() ? json() : r->second;
    return j;
  }

  // ---- endpoints ----

  Response ingest(const Request& req) {
    const auto body = parse_body(req, {"manifest_path", "entries", "job_id", "seed_set"});
    const auto manifest_path = field<std::string>(body, "manifest_path");
    const bool inline_entries = body.contains("entries");
    if (manifest_path.has_value() == inline_entries) {
      throw ApiError{400, "validation", "give exactly one of manifest_path or entries"};
    }
    std::vector<store::ManifestEntry> entries;
    if (manifest_path) {
      entries = store::read_manifest(*manifest_path);
    } else {
      if (!body["entries"].is_array()) {
        throw ApiError{400, "validation", "entries must be an array", {{"field", "entries"}}};
      }
      for (const auto& e : body["entries"]) {
        entries.push_back(store::ManifestEntry::from_json(e, {}));
      }
    }
    const auto job_id = field<std::string>(body, "job_id").value_or("");
    const auto seed_set = field<std::string>(body, "seed_set");
    const auto id = enqueue("ingest", [this, entries, job_id, seed_set] {
      std::lock_guard lock(state_mutex);
      const auto summary = store.ingest(entries, job_id);
      json result = {{"summary", summary.to_json()}, {"seed_set", nullptr}};
      if (seed_set) {
        std::vector<std::string> ids;
        for (const auto& i : summary.image_ids) {
          if (!i.empty()) ids.push_back(i);
        }
        const auto set = store.create_seed_set(*seed_set, ids);
        result["seed_set"] = {{"name", set.name}, {"version", set.version},
                              {"members", set.members.size()}};
      }
      return result;
    });
    return json_response(202, with_version({{"job_id", id}, {"status", "queued"}}));
  }

  Response job(const std::string& id) {
    std::lock_guard lock(jobs_mutex);
    const auto it = jobs.find(id);
    if (it == jobs.end()) throw Error(ErrorCode::kNotFound, "no job " + id);
    const auto& j = it->second;
    return json_response(200, with_version({{"job_id", j.id},
                                            {"kind", j.kind},
                                            {"status", j.status},
                                            {"created_at", j.created_at},
                                            {"result", j.result},
                                            {"error", j.error}}));
  }

  Response query(const Request& req) {
    const auto body = parse_body(req, {"image_id", "image_base64", "config"});
    const auto image_id = field<std::string>(body, "image_id");
    const auto upload = field<std::string>(body, "image_base64");
    if (image_id.has_value() == upload.has_value()) {
      throw ApiError{400, "validation", "give exactly one of image_id or image_base64"};
    }
    const auto cfg = config_with(body.contains("config") ? body["config"] : json());

    std::lock_guard lock(state_mutex);
    auto seed = [&]() -> pipeline::Seed {
      if (image_id) {
        const auto hash = store.hash_of(*image_id, cfg.hash_kind);
        if (!hash) throw Error(ErrorCode::kUnknownImage, "unknown image " + *image_id);
        return {*image_id, *hash, [this, id = *image_id] { return store.load(id); }};
      }
      auto bytes = base64_decode(*upload);
      const auto id = store::sha256_hex(bytes);
      return pipeline::make_seed(id, ocr::ImageSource{std::nullopt, std::move(bytes)},
                                 cfg.hash_kind);
    }();
    pipeline::Pipeline p(cfg, store.index(cfg.hash_kind), store, *provider, cache);
    auto result = p.query(seed);
    store.persist_labels(cache);
    record_query_metrics(result.report);
    const auto result_id = random_id("query-");
    save_results(result_id, result.candidates);
    json items = json::array();
    for (const auto& c : results[result_id]) items.push_back(candidate_item(c));
    return json_response(200, with_version({{"result_id", result_id},
                                            {"query_id", seed.id},
                                            {"config", cfg.to_json()},
                                            {"candidates", items},
                                            {"report", result.report.to_json()}}));
  }

  Response batch_query(const Request& req) {
    const auto body = parse_body(req, {"seed_set", "config"});
    const auto name = field<std::string>(body, "seed_set");
    if (!name) throw ApiError{400, "validation", "seed_set is required", {{"field", "seed_set"}}};
    const auto cfg = config_with(body.contains("config") ? body["config"] : json());
    {
      std::lock_guard lock(state_mutex);
      if (!store.seed_set(*name)) throw Error(ErrorCode::kNotFound, "no seed set '" + *name + "'");
    }
    const auto job_id =
        enqueue("batch-query", [this, name = *name, cfg] { return run_batch(name, cfg); });
    return json_response(202, with_version({{"job_id", job_id}, {"status", "queued"}}));
  }

  json run_batch(const std::string& name, const pipeline::PipelineConfig& cfg) {
    std::lock_guard lock(state_mutex);
    const auto set = store.seed_set(name);
    if (!set) throw Error(ErrorCode::kNotFound, "no seed set '" + name + "'");
    pipeline::Pipeline p(cfg, store.index(cfg.hash_kind), store, *provider, cache);
    const auto batch = p.batch_query(store.seeds_of(name, cfg.hash_kind));
    store.persist_labels(cache);
    json reports = json::array();
    for (const auto& r : batch.reports) {
      record_query_metrics(r);
      reports.push_back(r.to_json());
    }
    std::map<std::string, int> counts;
    for (const auto& c : batch.candidates) counts[std::string(pipeline::decision_name(c.decision))]++;
    const auto result_id = random_id("batch-");
    save_results(result_id, batch.candidates);
    return {{"result_id", result_id},
            {"seed_set", name},
            {"seed_set_version", set->version},
            {"config", cfg.to_json()},
            {"candidate_count", batch.candidates.size()},
            {"decision_counts", counts},
            {"reports", reports}};
  }

  Response candidates(const Request& req) {
    check_query_params(req, {"query", "page", "page_size", "tier", "story", "max_distance"});
    const auto q = req.query.find("query");
    if (q == req.query.end()) {
      throw ApiError{400, "validation", "parameter 'query' is required", {{"parameter", "query"}}};
    }
    const int page = int_param(req, "page", 1);
    const int page_size = int_param(req, "page_size", config.default_page_size);
    if (page < 1 || page_size < 1 || page_size > config.max_page_size) {
      throw ApiError{400, "validation",
                     "page must be >= 1 and page_size in [1, " +
                         std::to_string(config.max_page_size) + "]"};
    }
    std::optional<pipeline::Decision> tier;
    if (const auto t = req.query.find("tier"); t != req.query.end()) {
      tier = pipeline::parse_decision(t->second);
    }
    const bool by_story = req.query.contains("story");
    const int story = int_param(req, "story", 0);
    const int max_distance = int_param(req, "max_distance", 256);

    std::lock_guard lock(state_mutex);
    const auto* all = find_results(q->second);
    if (!all) throw Error(ErrorCode::kNotFound, "no results " + q->second);
    std::vector<const pipeline::ModerationCandidate*> kept;
    for (const auto& c : *all) {
      if (tier && c.decision != *tier) continue;
      if (c.distance > max_distance) continue;
      if (by_story) {
        const auto s = story_of.find(c.image_id);
        if (s == story_of.end() || s->second != story) continue;
      }
      kept.push_back(&c);
    }
    json items = json::array();
    const std::size_t begin = static_cast<std::size_t>(page - 1) * page_size;
    for (std::size_t i = begin; i < kept.size() && i < begin + page_size; ++i) {
      items.push_back(candidate_item(*kept[i]));
    }
    const int total = static_cast<int>(kept.size());
    return json_response(200, with_version({{"result_id", q->second},
                                            {"page", page},
                                            {"page_size", page_size},
                                            {"total", total},
                                            {"total_pages", (total + page_size - 1) / page_size},
                                            {"candidates", items}}));
  }

  json stories_body() {
    json out = stories_state;
    out.erase("categories");
    out.erase("flags");
    return with_version(out);
  }

  Response get_stories() {
    std::lock_guard lock(state_mutex);
    return json_response(200, stories_body());
  }

  Response rebuild_stories(const Request& req) {
    const auto body = parse_body(req, {"eps", "min_cluster_size", "source", "categories", "flags"});
    stories::ClusterParams params;
    params.eps = field<int>(body, "eps").value_or(90);
    params.min_cluster_size = field<int>(body, "min_cluster_size").value_or(1);
    params.validate(hashing::HashKind::kPdq256);
    const auto source = field<std::string>(body, "source").value_or("accepted");
    if (source != "accepted" && source != "corpus") {
      throw ApiError{400, "validation", "source must be 'accepted' or 'corpus'", {{"field", "source"}}};
    }
    const auto categories = field<std::map<std::string, std::string>>(body, "categories");
    if (categories) {
      for (const auto& [id, c] : *categories) stories::parse_category(c);
    }
    const auto flags = field<std::map<std::string, bool>>(body, "flags");
    const auto id = enqueue("stories-rebuild", [this, params, source, categories, flags] {
      return run_rebuild(params, source, categories.value_or(std::map<std::string, std::string>{}),
                         flags.value_or(std::map<std::string, bool>{}));
    });
    return json_response(202, with_version({{"job_id", id}, {"status", "queued"}}));
  }

  json run_rebuild(const stories::ClusterParams& params, const std::string& source,
                   const std::map<std::string, std::string>& new_categories,
                   const std::map<std::string, bool>& new_flags) {
    std::lock_guard lock(state_mutex);
    for (const auto& [id, c] : new_categories) stories_state["categories"][id] = c;
    for (const auto& [id, f] : new_flags) stories_state["flags"][id] = f;

    std::set<std::string> ids;
    if (source == "corpus") {
      for (const auto& i : store.image_ids()) ids.insert(i);
    } else {
      for (const auto& entry : fs::directory_iterator(config.store_root / "results")) {
        if (entry.path().extension() != ".jsonl") continue;
        for (const auto& c : *find_results(entry.path().stem().string())) {
          if (is_accepted(c.decision) && store.hash_of(c.image_id, hashing::HashKind::kPdq256)) {
            ids.insert(c.image_id);
          }
        }
      }
    }
    std::vector<stories::HashedImage> images;
    for (const auto& i : ids) images.emplace_back(i, *store.hash_of(i, hashing::HashKind::kPdq256));
    auto built = stories::cluster(images, params);

    const auto& cats = stories_state["categories"];
    const auto& flag_map = stories_state["flags"];
    std::map<std::string, bool> flags;
    bool all_flagged = true;
    for (auto& s : built) {
      std::vector<stories::PolicyCategory> applicable;
      for (const auto& m : s.members) {
        if (cats.contains(m)) applicable.push_back(stories::parse_category(cats[m].get<std::string>()));
        if (flag_map.contains(m)) {
          flags[m] = flag_map[m].get<bool>();
          s.moderated_count += flags[m] ? 1 : 0;
        } else {
          all_flagged = false;
        }
      }
      if (!applicable.empty()) s.category = stories::resolve_category(applicable);
    }
    stories_state["params"] = {{"eps", params.eps},
                               {"min_cluster_size", params.min_cluster_size},
                               {"source", source}};
    stories_state["stories"] = stories::stories_to_json(built);
    stories_state["report"] =
        all_flagged ? stories::moderation_report(built, flags).to_json() : json();
    stories_state["built_at"] = now_iso8601();
    std::ofstream out(config.store_root / "stories.json");
    out << stories_state.dump();
    index_stories();
    return {{"story_count", built.size()}, {"report", stories_state["report"]}};
  }

  Response review(const Request& req) {
    const auto body = parse_body(req, {"query_id", "image_id", "verdict", "reviewer", "note",
                                       "promote_to_seed", "seed_set", "expected_version"});
    const auto query_id = field<std::string>(body, "query_id");
    const auto image_id = field<std::string>(body, "image_id");
    const auto verdict = field<std::string>(body, "verdict");
    const auto reviewer = field<std::string>(body, "reviewer");
    if (!query_id || !image_id || !verdict || !reviewer) {
      throw ApiError{400, "validation", "query_id, image_id, verdict and reviewer are required"};
    }
    if (*verdict != "APPROVE" && *verdict != "DISMISS") {
      throw ApiError{400, "validation", "verdict must be APPROVE or DISMISS", {{"field", "verdict"}}};
    }
    if (reviewer->empty()) {
      throw ApiError{400, "validation", "reviewer must not be empty", {{"field", "reviewer"}}};
    }
    const bool promote = field<bool>(body, "promote_to_seed").value_or(false);
    const auto seed_set = field<std::string>(body, "seed_set");
    const auto expected = field<int>(body, "expected_version");
    if (promote && *verdict != "APPROVE") {
      throw ApiError{400, "validation", "only APPROVE can promote to a seed set"};
    }
    if (promote && !seed_set) {
      throw ApiError{400, "validation", "promote_to_seed needs seed_set", {{"field", "seed_set"}}};
    }

    std::lock_guard lock(state_mutex);
    if (!store.hash_of(*image_id, hashing::HashKind::kPdq256)) {
      throw Error(ErrorCode::kUnknownImage, "unknown image " + *image_id);
    }
    json set_info = nullptr;
    if (promote) {
      const auto set = store.promote_to_seed(*seed_set, *image_id, *reviewer,
                                             *query_id + "/" + *image_id, expected);
      set_info = {{"name", set.name}, {"version", set.version}};
    }
    json r = {{"seq", ++review_count},
              {"query_id", *query_id},
              {"image_id", *image_id},
              {"verdict", *verdict},
              {"reviewer", *reviewer},
              {"note", body.contains("note") ? body["note"] : json()},
              {"promoted_to", set_info},
              {"timestamp", now_iso8601()}};
    std::ofstream log(config.store_root / "reviews.jsonl", std::ios::app);
    log << r.dump() << '\n';
    if (!log) throw Error(ErrorCode::kIoError, "cannot append to the review log");
    latest_review[*query_id + "\n" + *image_id] = r;
    return json_response(200, with_version({{"review", r}, {"seed_set", set_info}}));
  }

  Response image_bytes(const std::string& id) {
    std::lock_guard lock(state_mutex);
    const auto record = store.record(id);
    if (!record) throw Error(ErrorCode::kUnknownImage, "unknown image " + id);
    const auto src = store.load(id);
    const auto ext = record->storage_path.extension();
    const std::string type = ext == ".png" ? "image/png"
                             : ext == ".jpg" ? "image/jpeg"
                                             : "application/octet-stream";
    return {200, type, std::string(src.bytes.begin(), src.bytes.end())};
  }

  Response image_meta(const std::string& id) {
    std::lock_guard lock(state_mutex);
    const auto record = store.record(id);
    if (!record) throw Error(ErrorCode::kUnknownImage, "unknown image " + id);
    json j = record->to_json();
    j.erase("storage_path");
    const auto label = store.label(id);
    j["label"] = label ? json{{"raw", label->raw},
                              {"normalized", label->normalized},
                              {"coverage", label->coverage ? json(*label->coverage) : json()}}
                       : json();
    const auto s = story_of.find(id);
    j["story_id"] = s == story_of.end() ? json() : json(s->second);
    return json_response(200, with_version(j));
  }

  Response metrics() {
    json jobs_json = {{"queued", 0}, {"running", 0}, {"succeeded", 0}, {"failed", 0}};
    {
      std::lock_guard lock(jobs_mutex);
      for (const auto& [id, j] : jobs) jobs_json[j.status] = jobs_json[j.status].get<int>() + 1;
    }
    const auto hits = cache.hits();
    const auto misses = cache.misses();
    json out = {{"ocr_cache",
                 {{"hits", hits},
                  {"misses", misses},
                  {"size", cache.size()},
                  {"hit_rate", hits + misses ? static_cast<double>(hits) / (hits + misses)
                                             : 0.0}}},
                {"jobs", jobs_json}};
    {
      std::lock_guard lock(metrics_mutex);
      out["queries"] = {{"count", query_count},
                        {"mean_ms", query_count ? query_total_ms / query_count : 0.0},
                        {"last_timings", last_timings}};
    }
    {
      std::lock_guard lock(state_mutex);
      out["images"] = store.size();
      out["reviews"] = review_count;
    }
    return json_response(200, with_version(out));
  }

  Response route(const Request& req) {
    const auto parts = split_path(req.path);
    if (parts.size() < 2 || parts[0] != "v1") throw ApiError{404, "not_found", "no route " + req.path};
    auto method_is = [&](const char* m) {
      if (req.method != m) {
        throw ApiError{405, "method_not_allowed", req.method + " not allowed on " + req.path};
      }
    };
    const auto& r = parts[1];
    if (parts.size() == 2) {
      if (r == "ingest") return method_is("POST"), ingest(req);
      if (r == "query") return method_is("POST"), query(req);
      if (r == "batch-query") return method_is("POST"), batch_query(req);
      if (r == "candidates") return method_is("GET"), candidates(req);
      if (r == "stories") return method_is("GET"), get_stories();
      if (r == "review") return method_is("POST"), review(req);
      if (r == "metrics") return method_is("GET"), metrics();
    }
    if (parts.size() == 3 && r == "jobs") return method_is("GET"), job(parts[2]);
    if (parts.size() == 3 && r == "stories" && parts[2] == "rebuild") {
      return method_is("POST"), rebuild_stories(req);
    }
    if (parts.size() == 3 && r == "images") return method_is("GET"), image_bytes(parts[2]);
    if (parts.size() == 4 && r == "images" && parts[3] == "meta") {
      return method_is("GET"), image_meta(parts[2]);
    }
    throw ApiError{404, "not_found", "no route " + req.path};
  }

  Response dispatch(const Request& req) {
    try {
      return route(req);
    } catch (const ApiError& e) {
      return error_response(e.status, e.code, e.message, e.details);
    } catch (const Error& e) {
      return error_response(http_status_for(e.code()), std::string(error_code_name(e.code())),
                            e.what());
    } catch (const json::exception& e) {
      return error_response(400, "validation", e.what());
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  Response handle(const Request& req) {
    if (config.api_token) {
      const auto it = req.headers.find("authorization");
      if (it == req.headers.end() || it->second != "Bearer " + *config.api_token) {
        return error_response(401, "unauthorized", "missing or wrong bearer token");
      }
    }
    const auto key = req.headers.find("idempotency-key");
    if (req.method != "POST" || key == req.headers.end()) return dispatch(req);

    std::lock_guard lock(idempotency_mutex);
    const auto fingerprint = req.method + " " + req.path + "\n" + req.body;
    if (const auto it = idempotent.find(key->second); it != idempotent.end()) {
      if (it->second.first != fingerprint) {
        return error_response(409, "conflict", "idempotency key reused with a different request",
                              {{"idempotency_key", key->second}});
      }
      return it->second.second;
    }
    auto response = dispatch(req);
    if (response.status < 500) idempotent[key->second] = {fingerprint, response};
    return response;
  }
};

Service::Service(ServiceConfig config, std::unique_ptr<ocr::OcrProvider> provider)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(provider))) {}

Service::~Service() { stop(); }

Response Service::handle(const Request& request) { return impl_->handle(request); }

void Service::wait_idle() { impl_->wait_idle(); }

namespace {

void bind_routes(httplib::Server& server, Service& service) {
  auto handler = [&service](const httplib::Request& in, httplib::Response& out) {
    Request req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query[k] = v;
    for (const auto& [k, v] : in.headers) {
      std::string name = k;
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      req.headers[name] = v;
    }
    req.body = in.body;
    const auto res = service.handle(req);
    out.status = res.status;
    out.set_content(res.body, res.content_type);
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
  server.Patch(".*", handler);
}

}  // namespace

bool Service::serve(const std::string& host, int port) {
  bind_routes(impl_->server, *this);
  return impl_->server.listen(host, port);
}

int Service::serve_background(const std::string& host) {
  bind_routes(impl_->server, *this);
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::kIoError, "cannot bind " + host);
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace pixelmod::service
