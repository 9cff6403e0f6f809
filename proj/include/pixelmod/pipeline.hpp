#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelmod/binary_index.hpp"
#include "pixelmod/error.hpp"
#include "pixelmod/hashing.hpp"
#include "pixelmod/ocr.hpp"
#include "pixelmod/text_similarity.hpp"

namespace pixelmod::pipeline {

using hashing::HashKind;
using hashing::PerceptualHash;

inline constexpr int kCandidateSchemaVersion = 1;

enum class EmptyQueryPolicy { kAcceptVisualOnly, kRejectAll };

/// Ordered by batch precedence: a lower value wins when seeds disagree.
enum class Decision { kAccepted = 0, kAcceptedVisualOnly = 1, kErrored = 2, kRejectedText = 3 };

std::string_view decision_name(Decision d);  // "ACCEPTED", ...
Decision parse_decision(std::string_view name);
std::string_view policy_name(EmptyQueryPolicy p);
EmptyQueryPolicy parse_policy(std::string_view name);

struct PipelineConfig {
  HashKind hash_kind = HashKind::kPdq256;
  int theta_visual = 90;
  text::TextMetric text_metric = text::TextMetric::jaccard(4);
  double theta_textual = 0.05;
  EmptyQueryPolicy empty_query_policy = EmptyQueryPolicy::kAcceptVisualOnly;
  bool compare_raw_text = false;  // compare provider text without normalization
  int ocr_workers = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

struct ModerationCandidate {
  std::string image_id;
  int distance = 0;
  std::optional<double> text_similarity;
  Decision decision = Decision::kRejectedText;
  std::string query_id;
  std::vector<std::string> provenance;  // every seed that matched, sorted
  std::optional<std::string> error;     // ERRORED only

  nlohmann::json to_json() const;
  static ModerationCandidate from_json(const nlohmann::json& j);
  friend bool operator==(const ModerationCandidate&, const ModerationCandidate&) = default;
};

/// Canonical order: decision (ACCEPTED first), distance, id.
bool candidate_before(const ModerationCandidate& a, const ModerationCandidate& b);

struct StageTimings {
  double hash_ms = 0, search_ms = 0, ocr_ms = 0, text_ms = 0;
};

struct QueryReport {
  std::string query_id;
  int visual_match_count = 0;
  int accepted_count = 0;
  int rejected_count = 0;
  int visual_only_count = 0;
  int errored_count = 0;
  int ocr_calls_made = 0;
  StageTimings timings;
  std::optional<std::string> error;  // set when the seed itself failed
  std::optional<ErrorCode> error_code;

  nlohmann::json to_json() const;
};

/// Where stage 2 finds stored images. Implemented by the corpus store and by
/// MemoryCatalog.
class ImageCatalog {
 public:
  virtual ~ImageCatalog() = default;
  virtual std::optional<PerceptualHash> hash_of(const std::string& id,
                                                HashKind kind) const = 0;
  /// Throws kMissingImage when the bytes are unavailable.
  virtual ocr::ImageSource load(const std::string& id) const = 0;
};

/// Catalog over files on disk or bare hashes (labels then come from a
/// prewarmed cache).
class MemoryCatalog : public ImageCatalog {
 public:
  void add(const std::string& id, std::optional<std::filesystem::path> path,
           std::vector<PerceptualHash> hashes);
  /// Hashes both kinds from the file.
  void add_file(const std::string& id, const std::filesystem::path& path);

  std::optional<PerceptualHash> hash_of(const std::string& id,
                                        HashKind kind) const override;
  ocr::ImageSource load(const std::string& id) const override;
  std::vector<std::string> ids() const;

 private:
  struct Item {
    std::optional<std::filesystem::path> path;
    std::vector<PerceptualHash> hashes;
  };
  std::map<std::string, Item> items_;
};

struct Seed {
  std::string id;
  PerceptualHash hash;
  std::function<ocr::ImageSource()> load;  // only called on a label cache miss
};

/// Hashes the image under `kind`. Throws kDecodeError / kTooSmall.
Seed make_seed(const std::string& id, ocr::ImageSource image, HashKind kind,
               double* hash_ms = nullptr);

struct QueryResult {
  std::vector<ModerationCandidate> candidates;
  QueryReport report;
};

struct BatchResult {
  std::vector<ModerationCandidate> candidates;
  std::vector<QueryReport> reports;
};

class Pipeline {
 public:
  /// Throws kKindMismatch when the index kind differs from the config.
  Pipeline(PipelineConfig config, const index::BinaryIndex& index,
           const ImageCatalog& catalog, ocr::OcrProvider& provider,
           ocr::LabelCache& cache);

  const PipelineConfig& config() const { return config_; }

  /// Stage 1 range search (seed id excluded), stage 2 text refinement.
  /// OCR failure on a match yields an ERRORED candidate; failure on the seed
  /// label throws.
  QueryResult query(const Seed& seed) const;

  /// Union over seeds; per-seed failures are reported, and the call throws
  /// only when every seed failed.
  BatchResult batch_query(const std::vector<Seed>& seeds) const;

 private:
  ocr::LabelCache::Lookup label_for(const PerceptualHash& hash,
                                    const std::function<ocr::ImageSource()>& load) const;
  double score(const ocr::OcrLabel& query, const ocr::OcrLabel& match) const;

  PipelineConfig config_;
  const index::BinaryIndex& index_;
  const ImageCatalog& catalog_;
  ocr::OcrProvider& provider_;
  ocr::LabelCache& cache_;
};

/// One JSON object per line, each carrying schema_version.
void write_candidates_jsonl(std::ostream& out,
                            const std::vector<ModerationCandidate>& candidates);
std::vector<ModerationCandidate> read_candidates_jsonl(std::istream& in);

}  // namespace pixelmod::pipeline
