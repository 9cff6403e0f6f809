#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelmod/binary_index.hpp"
#include "pixelmod/error.hpp"
#include "pixelmod/ocr.hpp"
#include "pixelmod/pipeline.hpp"

namespace pixelmod::store {

using hashing::HashKind;
using hashing::PerceptualHash;

struct ManifestEntry {
  std::filesystem::path path;
  std::optional<std::string> post_id;
  std::optional<std::string> post_text;
  std::optional<std::filesystem::path> ocr_sidecar;
  std::size_t line = 0;  // 1-based, 0 for inline entries

  /// Relative paths resolve against `base_dir`. Unknown keys and a missing
  /// or non-string `path` throw kManifestParse.
  static ManifestEntry from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  nlohmann::json to_json() const;
};

/// JSON lines; blank lines are skipped. Any bad line aborts the whole
/// manifest with kManifestParse before anything is ingested.
std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct SourceRef {
  std::optional<std::string> post_id;
  std::optional<std::string> post_text;

  friend bool operator==(const SourceRef&, const SourceRef&) = default;
};

struct ImageRecord {
  std::string image_id;                 // SHA-256 hex of the bytes
  std::filesystem::path storage_path;
  std::vector<SourceRef> sources;
  PerceptualHash phash64{HashKind::kPHash64};
  PerceptualHash pdq256{HashKind::kPdq256};
  bool has_label = false;
  std::string ingested_at;              // ISO-8601 UTC

  const PerceptualHash& hash(HashKind kind) const {
    return kind == HashKind::kPHash64 ? phash64 : pdq256;
  }
  nlohmann::json to_json() const;
};

struct IngestError {
  std::size_t entry = 0;  // position in the manifest
  std::string path;
  ErrorCode code = ErrorCode::kIoError;
  std::string message;
};

struct IngestSummary {
  std::string job_id;
  int total = 0;
  int ingested = 0;
  int duplicates = 0;
  int failed = 0;
  int resumed = 0;  // entries already journaled by an earlier run of this job
  std::vector<IngestError> errors;
  std::vector<std::string> image_ids;  // per entry, empty when it failed

  nlohmann::json to_json() const;
};

/// Test seams around each entry's commit.
struct IngestHooks {
  std::function<void(std::size_t entry)> before_commit;
  std::function<void(std::size_t entry)> after_commit;
};

enum class Provenance { kImported, kPromoted };

struct SeedMember {
  std::string image_id;
  Provenance provenance = Provenance::kImported;
  std::optional<std::string> from_candidate;  // "<query_id>/<image_id>" when promoted
  std::optional<std::string> reviewer;
};

struct SeedSet {
  std::string name;
  std::vector<SeedMember> members;  // insertion order
  int version = 0;

  bool contains(const std::string& image_id) const;
  nlohmann::json to_json() const;
};

/// Single-directory store: `meta.sqlite` plus `images/ab/<sha256>.<ext>`,
/// with a copied OCR sidecar next to each image that had one. Both hash
/// indexes are in memory and rebuilt on open. Not thread-safe; callers
/// serialize access.
class CorpusStore : public pipeline::ImageCatalog {
 public:
  explicit CorpusStore(const std::filesystem::path& root);
  ~CorpusStore() override;
  CorpusStore(const CorpusStore&) = delete;
  CorpusStore& operator=(const CorpusStore&) = delete;

  const std::filesystem::path& root() const;

  /// Journaled per entry: each entry commits atomically with its journal
  /// row, and rerunning the same job id skips entries already journaled.
  /// The default job id is derived from the manifest contents, so
  /// re-ingesting an interrupted manifest resumes it.
  IngestSummary ingest(const std::vector<ManifestEntry>& entries, std::string job_id = {},
                       const IngestHooks& hooks = {});

  std::size_t size() const;
  std::vector<std::string> image_ids() const;  // sorted
  std::optional<ImageRecord> record(const std::string& image_id) const;
  const index::BinaryIndex& index(HashKind kind) const;
  /// True when the database and both indexes hold the same id set.
  bool reconcile() const;

  std::optional<PerceptualHash> hash_of(const std::string& id, HashKind kind) const override;
  ocr::ImageSource load(const std::string& id) const override;

  void save_label(const std::string& image_id, const ocr::OcrLabel& label);
  std::optional<ocr::OcrLabel> label(const std::string& image_id) const;
  /// Puts every stored label into the cache under both hash kinds.
  void prewarm(ocr::LabelCache& cache) const;
  /// Stores every label the cache holds for images of this store.
  void persist_labels(const ocr::LabelCache& cache);

  /// kConflict when the name exists, kUnknownImage for ids not in the store.
  SeedSet create_seed_set(const std::string& name, const std::vector<std::string>& image_ids);
  std::optional<SeedSet> seed_set(const std::string& name) const;
  std::vector<std::string> seed_set_names() const;
  /// Adds the candidate with PROMOTED provenance and bumps the version.
  /// kAlreadyMember, kUnknownImage, kNotFound for the set, kValidation for
  /// an empty reviewer, kConflict when `expected_version` is stale.
  SeedSet promote_to_seed(const std::string& name, const std::string& candidate_id,
                          const std::string& reviewer,
                          const std::optional<std::string>& from_candidate = std::nullopt,
                          std::optional<int> expected_version = std::nullopt);

  /// Portable form with both hashes (and the OCR label when known) inline.
  nlohmann::json export_seed_set(const std::string& name) const;
  /// Members missing locally stay hash-only seed members (not corpus
  /// images); their exported label is stored. kConflict when the name exists.
  SeedSet import_seed_set(const nlohmann::json& exported);

  std::vector<pipeline::Seed> seeds_of(const std::string& name, HashKind kind) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string_view provenance_name(Provenance p);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace pixelmod::store
