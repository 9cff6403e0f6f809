#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelmod/binary_index.hpp"
#include "pixelmod/ocr.hpp"
#include "pixelmod/pipeline.hpp"

namespace pixelmod::calibration {

using pipeline::PipelineConfig;

struct GroundTruthEntry {
  std::string query_id;
  std::string candidate_id;
  bool relevant = false;
};

struct GroundTruthSet {
  std::vector<GroundTruthEntry> entries;
  std::string provenance;

  /// Unique pairs, at least one positive and one negative.
  void validate() const;
  std::vector<std::string> query_ids() const;  // sorted, unique

  /// CSV with header `query_id,candidate_id,is_relevant` (1/0 or true/false).
  static GroundTruthSet read_csv(std::istream& in);
  static GroundTruthSet read_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;
};

struct EvalScores {
  double precision = 0, recall = 0, f1 = 0;
  int tp = 0, fp = 0, fn = 0;

  static EvalScores from_counts(int tp, int fp, int fn);
  nlohmann::json to_json() const;
  friend bool operator==(const EvalScores&, const EvalScores&) = default;
};

/// Everything a pipeline run needs, with one index per hash kind. Query ids
/// are looked up in the catalog like any other image.
struct EvalContext {
  const pipeline::ImageCatalog& catalog;
  const index::BinaryIndex* phash_index = nullptr;
  const index::BinaryIndex* pdq_index = nullptr;
  ocr::OcrProvider& provider;
  ocr::LabelCache& cache;

  const index::BinaryIndex& index_for(hashing::HashKind kind) const;
};

/// Runs the pipeline per GT query. An accepted candidate (ACCEPTED or
/// ACCEPTED_VISUAL_ONLY) is a TP when labelled relevant and an FP otherwise,
/// including candidates absent from the GT. A relevant pair that is not
/// accepted is an FN. Throws kMissingImage for GT ids missing from the catalog.
EvalScores evaluate(const PipelineConfig& config, const GroundTruthSet& gt,
                    const EvalContext& ctx);

struct GridSpec {
  std::vector<int> phash_radii;
  std::vector<int> pdq_radii;
  std::vector<double> thresholds;
  std::vector<text::TextMetric> metrics;
  PipelineConfig base;  // supplies the empty-query policy and raw-text flag

  /// pHash 4..10, PDQ {32,48,64,80,90}, 0.00..0.80 step 0.05, all metrics.
  static GridSpec standard();
  std::vector<PipelineConfig> configs() const;  // enumeration order
};

struct GridRow {
  PipelineConfig config;
  EvalScores scores;
};

/// Every grid cell, sorted by F1 then precision (both descending); remaining
/// ties keep enumeration order. Stage 1 runs once per (kind, query) at the
/// largest radius and text scores once per (metric, pair).
std::vector<GridRow> grid_search(const GridSpec& spec, const GroundTruthSet& gt,
                                 const EvalContext& ctx);

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows);
nlohmann::json grid_to_json(const std::vector<GridRow>& rows);

/// Hash-only ground truth whose best cell under GridSpec::standard() is
/// (PDQ, 90, jaccard_4, 0.05) with F1 = 1, while every other cell misses at
/// least one pair. Labels live in `labels` and must be put into the cache.
struct PlantedGrid {
  pipeline::MemoryCatalog catalog;
  index::BinaryIndex phash_index{hashing::HashKind::kPHash64};
  index::BinaryIndex pdq_index{hashing::HashKind::kPdq256};
  std::map<std::string, ocr::OcrLabel> labels;
  GroundTruthSet gt;

  void prewarm(ocr::LabelCache& cache) const;
};

struct PlantedGridOptions {
  int queries = 10;
  int close_positives = 10;     // high text overlap, PDQ 1..90 (one in 81..90)
  int faint_positives = 3;      // jaccard_4 in [0.05, 0.10), no shared 5-gram
  int plain_twins = 2;          // unrelated text
  int decoy_twins = 2;          // shares 1..3-grams with the query, no 4-gram
  int distractors = 5;          // PDQ 91..110
  std::uint64_t rng_seed = 4242;
};

PlantedGrid make_planted_grid(const PlantedGridOptions& options = {});

struct BenchReport {
  int images = 0;
  int runs = 0;
  double mean_hash_index_ms = 0;  // decode + hash + index insert
  double mean_ocr_ms = 0;
  double p50_ocr_ms = 0, p95_ocr_ms = 0, max_ocr_ms = 0;
  std::optional<double> pearson_r;  // OCR time vs text coverage

  nlohmann::json to_json() const;
  /// Human-readable table including the fixed reference row.
  std::string table() const;
};

/// Reference per-image runtimes used only for the comparison table.
inline constexpr double kReferenceOcrSeconds = 0.223;
inline constexpr double kReferenceHashSeconds = 0.020;

/// Pearson correlation; nullopt when either side has zero variance or fewer
/// than two points.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Averages per-image timings over `runs` passes. Needs at least 30 images.
BenchReport bench(const PipelineConfig& config,
                  const std::vector<std::filesystem::path>& images,
                  ocr::OcrProvider& provider, int runs = 5);

}  // namespace pixelmod::calibration
