#include "pixelmod/text_similarity.hpp"

#include <algorithm>
#include <unordered_set>

#include <unicode/utf8.h>

#include "pixelmod/error.hpp"

namespace pixelmod::text {
namespace {

double empty_rule(std::size_t la, std::size_t lb) {
  return la == 0 && lb == 0 ? 1.0 : 0.0;
}

double jaccard_ngram(const std::u32string& a, const std::u32string& b, int n) {
  auto grams = [n](const std::u32string& s) {
    std::unordered_set<std::u32string> out;
    if (s.size() < static_cast<std::size_t>(n)) {
      out.insert(s);
      return out;
    }
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      out.insert(s.substr(i, n));
    }
    return out;
  };
  const auto ga = grams(a);
  const auto gb = grams(b);
  const auto& small = ga.size() <= gb.size() ? ga : gb;
  const auto& large = ga.size() <= gb.size() ? gb : ga;
  std::size_t common = 0;
  for (const auto& g : small) {
    common += large.count(g);
  }
  return static_cast<double>(common) /
         static_cast<double>(ga.size() + gb.size() - common);
}

}  // namespace

void TextMetric::validate() const {
  if (kind == MetricKind::kJaccardNgram) {
    if (n < 1 || n > 5) {
      throw Error(ErrorCode::kValidation, "jaccard n must be in [1,5]");
    }
  } else if (n != 0) {
    throw Error(ErrorCode::kValidation, "n is only meaningful for jaccard");
  }
}

std::string TextMetric::name() const {
  switch (kind) {
    case MetricKind::kNormLevenshtein:
      return "norm_levenshtein";
    case MetricKind::kJaroWinkler:
      return "jaro_winkler";
    case MetricKind::kMetricLcs:
      return "metric_lcs";
    case MetricKind::kJaccardNgram:
      return "jaccard_" + std::to_string(n);
  }
  return "unknown";
}

TextMetric TextMetric::parse(std::string_view name) {
  if (name == "norm_levenshtein") return of(MetricKind::kNormLevenshtein);
  if (name == "jaro_winkler") return of(MetricKind::kJaroWinkler);
  if (name == "metric_lcs") return of(MetricKind::kMetricLcs);
  if (name.size() == 9 && name.starts_with("jaccard_") && name[8] >= '1' &&
      name[8] <= '5') {
    return jaccard(name[8] - '0');
  }
  throw Error(ErrorCode::kValidation,
              "unknown text metric: " + std::string(name));
}

std::u32string to_code_points(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* s = reinterpret_cast<const std::uint8_t*>(utf8.data());
  const auto length = static_cast<std::int32_t>(utf8.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? U'\uFFFD' : static_cast<char32_t>(c));
  }
  return out;
}

int levenshtein_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) {
    row[j] = static_cast<int>(j);
  }
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

int lcs_length(const std::u32string& a, const std::u32string& b) {
  std::vector<int> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double jaro(const std::u32string& a, const std::u32string& b) {
  if (a.empty() || b.empty()) {
    return empty_rule(a.size(), b.size());
  }
  const int la = static_cast<int>(a.size());
  const int lb = static_cast<int>(b.size());
  const int window = std::max(0, std::max(la, lb) / 2 - 1);
  std::vector<bool> used_a(la, false);
  std::vector<bool> used_b(lb, false);
  int matches = 0;
  for (int i = 0; i < la; ++i) {
    const int lo = std::max(0, i - window);
    const int hi = std::min(lb - 1, i + window);
    for (int j = lo; j <= hi; ++j) {
      if (!used_b[j] && a[i] == b[j]) {
        used_a[i] = used_b[j] = true;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) {
    return 0.0;
  }
  int half_transpositions = 0;
  for (int i = 0, j = 0; i < la; ++i) {
    if (!used_a[i]) continue;
    while (!used_b[j]) ++j;
    if (a[i] != b[j]) ++half_transpositions;
    ++j;
  }
  const double m = matches;
  return (m / la + m / lb + (m - half_transpositions / 2.0) / m) / 3.0;
}

double similarity(const TextMetric& metric, const std::u32string& a,
                  const std::u32string& b) {
  if (a.empty() || b.empty()) {
    return empty_rule(a.size(), b.size());
  }
  const double longest = static_cast<double>(std::max(a.size(), b.size()));
  switch (metric.kind) {
    case MetricKind::kNormLevenshtein:
      return (longest - levenshtein_distance(a, b)) / longest;
    case MetricKind::kMetricLcs:
      return (longest - lcs_length(a, b)) / longest;
    case MetricKind::kJaroWinkler: {
      const double j = jaro(a, b);
      std::size_t prefix = 0;
      const std::size_t cap = std::min<std::size_t>({4, a.size(), b.size()});
      while (prefix < cap && a[prefix] == b[prefix]) ++prefix;
      return j + static_cast<double>(prefix) * 0.1 * (1.0 - j);
    }
    case MetricKind::kJaccardNgram:
      return jaccard_ngram(a, b, metric.n);
  }
  return 0.0;
}

double similarity(const TextMetric& metric, std::string_view a,
                  std::string_view b) {
  return similarity(metric, to_code_points(a), to_code_points(b));
}

std::vector<TextMetric> all_metrics() {
  std::vector<TextMetric> out = {TextMetric::of(MetricKind::kNormLevenshtein),
                                 TextMetric::of(MetricKind::kJaroWinkler),
                                 TextMetric::of(MetricKind::kMetricLcs)};
  for (int n = 1; n <= 5; ++n) {
    out.push_back(TextMetric::jaccard(n));
  }
  return out;
}

}  // namespace pixelmod::text
