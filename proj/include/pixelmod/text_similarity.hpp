#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pixelmod::text {

enum class MetricKind { kNormLevenshtein, kJaroWinkler, kMetricLcs, kJaccardNgram };

struct TextMetric {
  MetricKind kind = MetricKind::kJaccardNgram;
  int n = 4;  // JACCARD_NGRAM only, 1..5

  static TextMetric jaccard(int n) { return {MetricKind::kJaccardNgram, n}; }
  static TextMetric of(MetricKind kind) { return {kind, 0}; }

  /// Throws kValidation when n is out of range for the kind.
  void validate() const;
  /// "norm_levenshtein", "jaro_winkler", "metric_lcs", "jaccard_4", ...
  std::string name() const;
  static TextMetric parse(std::string_view name);

  friend bool operator==(const TextMetric&, const TextMetric&) = default;
};

/// Decodes UTF-8 into code points. Invalid sequences become U+FFFD.
std::u32string to_code_points(std::string_view utf8);

int levenshtein_distance(const std::u32string& a, const std::u32string& b);
int lcs_length(const std::u32string& a, const std::u32string& b);
double jaro(const std::u32string& a, const std::u32string& b);

/// Similarity in [0,1] over code points. Both empty gives 1, exactly one
/// empty gives 0, for every metric.
double similarity(const TextMetric& metric, std::string_view a,
                  std::string_view b);
double similarity(const TextMetric& metric, const std::u32string& a,
                  const std::u32string& b);

/// All grid metrics: the three edit-style metrics plus Jaccard n = 1..5.
std::vector<TextMetric> all_metrics();

}  // namespace pixelmod::text
