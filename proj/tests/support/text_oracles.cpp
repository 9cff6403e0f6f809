#include "support/text_oracles.hpp"

#include <algorithm>
#include <set>
#include <vector>

namespace pixelmod::testing {

std::string random_text(std::mt19937_64& rng, int max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e",
                                                    " ", "é", "ß"};
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string out;
  for (int i = len(rng); i > 0; --i) {
    out += alphabet[pick(rng)];
  }
  return out;
}

int oracle_levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + sub});
    }
  }
  return d[a.size()][b.size()];
}

int oracle_lcs(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<int>> t(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1
                                     : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

double oracle_jaro_winkler(const std::u32string& a, const std::u32string& b) {
  const long window =
      std::max<long>(0, static_cast<long>(std::max(a.size(), b.size())) / 2 - 1);
  std::vector<bool> taken(b.size(), false);
  std::u32string matched_a;
  std::vector<std::size_t> positions_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const long gap = static_cast<long>(i) - static_cast<long>(j);
      if (!taken[j] && std::abs(gap) <= window && a[i] == b[j]) {
        taken[j] = true;
        matched_a.push_back(a[i]);
        positions_b.push_back(j);
        break;
      }
    }
  }
  if (matched_a.empty()) return 0.0;
  std::sort(positions_b.begin(), positions_b.end());
  std::u32string matched_b;
  for (auto j : positions_b) matched_b.push_back(b[j]);
  double mismatches = 0;
  for (std::size_t k = 0; k < matched_a.size(); ++k) {
    mismatches += matched_a[k] != matched_b[k] ? 1 : 0;
  }
  const double m = static_cast<double>(matched_a.size());
  const double jaro = (m / static_cast<double>(a.size()) +
                       m / static_cast<double>(b.size()) + (m - mismatches / 2) / m) /
                      3;
  int prefix = 0;
  while (prefix < 4 && prefix < static_cast<int>(std::min(a.size(), b.size())) &&
         a[prefix] == b[prefix]) {
    ++prefix;
  }
  return jaro + prefix * 0.1 * (1 - jaro);
}

double oracle_jaccard(const std::u32string& a, const std::u32string& b, int n) {
  auto grams = [n](const std::u32string& s) {
    std::set<std::u32string> g;
    if (static_cast<int>(s.size()) < n) {
      g.insert(s);
    } else {
      for (std::size_t i = 0; i + n <= s.size(); ++i) g.insert(s.substr(i, n));
    }
    return g;
  };
  const auto ga = grams(a);
  const auto gb = grams(b);
  std::set<std::u32string> inter;
  std::set<std::u32string> uni = ga;
  std::set_intersection(ga.begin(), ga.end(), gb.begin(), gb.end(),
                        std::inserter(inter, inter.begin()));
  uni.insert(gb.begin(), gb.end());
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

double oracle_similarity(const text::TextMetric& m, const std::u32string& a,
                         const std::u32string& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const double longest = static_cast<double>(std::max(a.size(), b.size()));
  switch (m.kind) {
    case text::MetricKind::kNormLevenshtein:
      return (longest - oracle_levenshtein(a, b)) / longest;
    case text::MetricKind::kMetricLcs:
      return (longest - oracle_lcs(a, b)) / longest;
    case text::MetricKind::kJaroWinkler:
      return oracle_jaro_winkler(a, b);
    case text::MetricKind::kJaccardNgram:
      return oracle_jaccard(a, b, m.n);
  }
  return -1.0;
}

}  // namespace pixelmod::testing
