#include "pixelmod/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <istream>
#include <ostream>
#include <thread>

namespace pixelmod::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void reject_unknown_keys(const nlohmann::json& j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view what) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kValidation, std::string(what) + " must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::kValidation,
                  "unknown field '" + key + "' in " + std::string(what));
    }
  }
}

template <class T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kValidation, std::string("bad type for field '") + key + "'");
  }
}

}  // namespace

std::string_view decision_name(Decision d) {
  switch (d) {
    case Decision::kAccepted:
      return "ACCEPTED";
    case Decision::kAcceptedVisualOnly:
      return "ACCEPTED_VISUAL_ONLY";
    case Decision::kErrored:
      return "ERRORED";
    case Decision::kRejectedText:
      return "REJECTED_TEXT";
  }
  return "?";
}

Decision parse_decision(std::string_view name) {
  for (auto d : {Decision::kAccepted, Decision::kAcceptedVisualOnly, Decision::kErrored,
                 Decision::kRejectedText}) {
    if (decision_name(d) == name) return d;
  }
  throw Error(ErrorCode::kValidation, "unknown decision '" + std::string(name) + "'");
}

std::string_view policy_name(EmptyQueryPolicy p) {
  return p == EmptyQueryPolicy::kAcceptVisualOnly ? "ACCEPT_VISUAL_ONLY" : "REJECT_ALL";
}

EmptyQueryPolicy parse_policy(std::string_view name) {
  if (name == "ACCEPT_VISUAL_ONLY" || name == "accept_visual_only") {
    return EmptyQueryPolicy::kAcceptVisualOnly;
  }
  if (name == "REJECT_ALL" || name == "reject_all") return EmptyQueryPolicy::kRejectAll;
  throw Error(ErrorCode::kValidation, "unknown empty-query policy '" + std::string(name) + "'");
}

void PipelineConfig::validate() const {
  if (theta_visual < 0 || theta_visual > hashing::bit_width(hash_kind)) {
    throw Error(ErrorCode::kValidation,
                "theta_visual must be in [0, " +
                    std::to_string(hashing::bit_width(hash_kind)) + "]");
  }
  if (!(theta_textual >= 0.0 && theta_textual <= 1.0)) {
    throw Error(ErrorCode::kValidation, "theta_textual must be in [0,1]");
  }
  if (ocr_workers < 1) {
    throw Error(ErrorCode::kValidation, "ocr_workers must be >= 1");
  }
  text_metric.validate();
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"hash_kind", hashing::hash_kind_name(hash_kind)},
          {"theta_visual", theta_visual},
          {"text_metric", text_metric.name()},
          {"theta_textual", theta_textual},
          {"empty_query_policy", policy_name(empty_query_policy)},
          {"compare_raw_text", compare_raw_text}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"hash_kind", "theta_visual", "text_metric", "theta_textual",
                       "empty_query_policy", "compare_raw_text", "ocr_workers"},
                      "config");
  PipelineConfig c;
  c.hash_kind = hashing::parse_hash_kind(
      field<std::string>(j, "hash_kind", std::string(hashing::hash_kind_name(c.hash_kind))));
  c.theta_visual = field(j, "theta_visual", index::default_radius(c.hash_kind));
  c.text_metric = text::TextMetric::parse(field<std::string>(j, "text_metric", c.text_metric.name()));
  c.theta_textual = field(j, "theta_textual", c.theta_textual);
  c.empty_query_policy = parse_policy(
      field<std::string>(j, "empty_query_policy", std::string(policy_name(c.empty_query_policy))));
  c.compare_raw_text = field(j, "compare_raw_text", c.compare_raw_text);
  c.ocr_workers = field(j, "ocr_workers", c.ocr_workers);
  c.validate();
  return c;
}

nlohmann::json ModerationCandidate::to_json() const {
  nlohmann::json j = {{"schema_version", kCandidateSchemaVersion},
                      {"image_id", image_id},
                      {"query_id", query_id},
                      {"distance", distance},
                      {"text_similarity", nullptr},
                      {"decision", decision_name(decision)},
                      {"provenance", provenance}};
  if (text_similarity) j["text_similarity"] = *text_similarity;
  if (error) j["error"] = *error;
  return j;
}

ModerationCandidate ModerationCandidate::from_json(const nlohmann::json& j) {
  const int version = j.value("schema_version", 0);
  if (version != kCandidateSchemaVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "candidate schema_version " + std::to_string(version));
  }
  ModerationCandidate c;
  c.image_id = j.at("image_id").get<std::string>();
  c.query_id = j.at("query_id").get<std::string>();
  c.distance = j.at("distance").get<int>();
  if (!j.at("text_similarity").is_null()) c.text_similarity = j.at("text_similarity").get<double>();
  c.decision = parse_decision(j.at("decision").get<std::string>());
  c.provenance = j.at("provenance").get<std::vector<std::string>>();
  if (j.contains("error")) c.error = j.at("error").get<std::string>();
  return c;
}

bool candidate_before(const ModerationCandidate& a, const ModerationCandidate& b) {
  return std::tie(a.decision, a.distance, a.image_id) <
         std::tie(b.decision, b.distance, b.image_id);
}

nlohmann::json QueryReport::to_json() const {
  nlohmann::json j = {{"query_id", query_id},
                      {"visual_match_count", visual_match_count},
                      {"accepted_count", accepted_count},
                      {"rejected_count", rejected_count},
                      {"visual_only_count", visual_only_count},
                      {"errored_count", errored_count},
                      {"ocr_calls_made", ocr_calls_made},
                      {"timings_ms",
                       {{"hash", timings.hash_ms},
                        {"search", timings.search_ms},
                        {"ocr", timings.ocr_ms},
                        {"text", timings.text_ms}}}};
  if (error) {
    j["error"] = {{"code", error_code_name(error_code.value_or(ErrorCode::kValidation))},
                  {"message", *error}};
  }
  return j;
}

void MemoryCatalog::add(const std::string& id, std::optional<std::filesystem::path> path,
                        std::vector<PerceptualHash> hashes) {
  if (!items_.emplace(id, Item{std::move(path), std::move(hashes)}).second) {
    throw Error(ErrorCode::kDuplicateId, "duplicate image id: " + id);
  }
}

void MemoryCatalog::add_file(const std::string& id, const std::filesystem::path& path) {
  const auto image = ocr::ImageSource::from_file(path);
  const auto plane = hashing::decode_image(image.bytes);
  add(id, path, {hashing::phash64(plane), hashing::pdqhash256(plane)});
}

std::optional<PerceptualHash> MemoryCatalog::hash_of(const std::string& id,
                                                     HashKind kind) const {
  auto it = items_.find(id);
  if (it == items_.end()) return std::nullopt;
  for (const auto& h : it->second.hashes) {
    if (h.kind() == kind) return h;
  }
  return std::nullopt;
}

ocr::ImageSource MemoryCatalog::load(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end() || !it->second.path) {
    throw Error(ErrorCode::kMissingImage, "no image bytes for " + id);
  }
  return ocr::ImageSource::from_file(*it->second.path);
}

std::vector<std::string> MemoryCatalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, item] : items_) out.push_back(id);
  return out;
}

Seed make_seed(const std::string& id, ocr::ImageSource image, HashKind kind,
               double* hash_ms) {
  const auto start = Clock::now();
  const auto hash = hashing::compute_hash(kind, hashing::decode_image(image.bytes));
  if (hash_ms) *hash_ms = ms_since(start);
  auto shared = std::make_shared<ocr::ImageSource>(std::move(image));
  return {id, hash, [shared] { return *shared; }};
}

Pipeline::Pipeline(PipelineConfig config, const index::BinaryIndex& index,
                   const ImageCatalog& catalog, ocr::OcrProvider& provider,
                   ocr::LabelCache& cache)
    : config_(std::move(config)),
      index_(index),
      catalog_(catalog),
      provider_(provider),
      cache_(cache) {
  config_.validate();
  if (index_.hash_kind() != config_.hash_kind) {
    throw Error(ErrorCode::kKindMismatch, "index kind differs from pipeline hash kind");
  }
}

ocr::LabelCache::Lookup Pipeline::label_for(
    const PerceptualHash& hash, const std::function<ocr::ImageSource()>& load) const {
  return cache_.get_or_extract(hash,
                               [&] { return ocr::extract_label(load(), provider_); });
}

double Pipeline::score(const ocr::OcrLabel& query, const ocr::OcrLabel& match) const {
  if (config_.compare_raw_text) {
    return text::similarity(config_.text_metric, query.raw, match.raw);
  }
  return text::similarity(config_.text_metric, query.normalized, match.normalized);
}

QueryResult Pipeline::query(const Seed& seed) const {
  QueryResult result;
  QueryReport& report = result.report;
  report.query_id = seed.id;
  if (seed.hash.kind() != config_.hash_kind) {
    throw Error(ErrorCode::kKindMismatch, "seed hash kind differs from pipeline hash kind");
  }

  auto start = Clock::now();
  auto hits = index_.search_range(seed.hash, config_.theta_visual);
  std::erase_if(hits, [&](const index::SearchHit& h) { return h.image_id == seed.id; });
  report.timings.search_ms = ms_since(start);
  report.visual_match_count = static_cast<int>(hits.size());
  if (hits.empty()) {
    return result;  // OCR is only triggered by a visual match
  }

  start = Clock::now();
  const auto query_label = label_for(seed.hash, seed.load);
  report.ocr_calls_made += query_label.was_hit ? 0 : 1;
  report.timings.ocr_ms += ms_since(start);

  auto& out = result.candidates;
  out.resize(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    out[i].image_id = hits[i].image_id;
    out[i].distance = hits[i].distance;
    out[i].query_id = seed.id;
    out[i].provenance = {seed.id};
  }

  if (query_label.label.empty()) {
    const auto d = config_.empty_query_policy == EmptyQueryPolicy::kAcceptVisualOnly
                       ? Decision::kAcceptedVisualOnly
                       : Decision::kRejectedText;
    for (auto& c : out) c.decision = d;
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<int> provider_calls{0};
    std::vector<double> ocr_ms(hits.size(), 0.0), text_ms(hits.size(), 0.0);
    auto work = [&] {
      for (std::size_t i = next++; i < hits.size(); i = next++) {
        auto& c = out[i];
        const auto t0 = Clock::now();
        try {
          const auto hash = catalog_.hash_of(c.image_id, config_.hash_kind);
          if (!hash) {
            throw Error(ErrorCode::kUnknownImage, "no stored hash for " + c.image_id);
          }
          const auto match = label_for(*hash, [&] { return catalog_.load(c.image_id); });
          if (!match.was_hit) ++provider_calls;
          ocr_ms[i] = ms_since(t0);
          const auto t1 = Clock::now();
          c.text_similarity = score(query_label.label, match.label);
          c.decision = *c.text_similarity >= config_.theta_textual ? Decision::kAccepted
                                                                   : Decision::kRejectedText;
          text_ms[i] = ms_since(t1);
        } catch (const std::exception& e) {
          ocr_ms[i] = ms_since(t0);
          c.decision = Decision::kErrored;
          c.error = e.what();
        }
      }
    };
    const int workers =
        static_cast<int>(std::min<std::size_t>(config_.ocr_workers, hits.size()));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    report.ocr_calls_made += provider_calls.load();
    for (std::size_t i = 0; i < hits.size(); ++i) {
      report.timings.ocr_ms += ocr_ms[i];
      report.timings.text_ms += text_ms[i];
    }
  }

  for (const auto& c : out) {
    switch (c.decision) {
      case Decision::kAccepted:
        ++report.accepted_count;
        break;
      case Decision::kAcceptedVisualOnly:
        ++report.visual_only_count;
        break;
      case Decision::kErrored:
        ++report.errored_count;
        break;
      case Decision::kRejectedText:
        ++report.rejected_count;
        break;
    }
  }
  std::sort(out.begin(), out.end(), candidate_before);
  return result;
}

BatchResult Pipeline::batch_query(const std::vector<Seed>& seeds) const {
  if (seeds.empty()) {
    throw Error(ErrorCode::kValidation, "seed set is empty");
  }
  BatchResult batch;
  std::map<std::string, ModerationCandidate> merged;
  std::optional<Error> first_failure;
  for (const auto& seed : seeds) {
    QueryResult r;
    try {
      r = query(seed);
    } catch (const Error& e) {
      r.report.query_id = seed.id;
      r.report.error = e.what();
      r.report.error_code = e.code();
      if (!first_failure) first_failure = e;
    }
    batch.reports.push_back(r.report);
    for (auto& c : r.candidates) {
      auto [it, inserted] = merged.try_emplace(c.image_id, c);
      if (inserted) continue;
      auto& kept = it->second;
      auto provenance = std::move(kept.provenance);
      provenance.push_back(seed.id);
      if (std::tie(c.decision, c.distance, c.query_id) <
          std::tie(kept.decision, kept.distance, kept.query_id)) {
        kept = std::move(c);
      }
      kept.provenance = std::move(provenance);
    }
  }
  if (first_failure &&
      std::all_of(batch.reports.begin(), batch.reports.end(),
                  [](const QueryReport& r) { return r.error.has_value(); })) {
    throw Error(first_failure->code(),
                std::string("every seed failed; first: ") + first_failure->what());
  }
  for (auto& [id, c] : merged) {
    std::sort(c.provenance.begin(), c.provenance.end());
    c.provenance.erase(std::unique(c.provenance.begin(), c.provenance.end()),
                       c.provenance.end());
    batch.candidates.push_back(std::move(c));
  }
  std::sort(batch.candidates.begin(), batch.candidates.end(), candidate_before);
  return batch;
}

void write_candidates_jsonl(std::ostream& out,
                            const std::vector<ModerationCandidate>& candidates) {
  for (const auto& c : candidates) {
    out << c.to_json().dump() << '\n';
  }
}

std::vector<ModerationCandidate> read_candidates_jsonl(std::istream& in) {
  std::vector<ModerationCandidate> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(ModerationCandidate::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kValidation,
                  "candidate line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pixelmod::pipeline
