#include "pixelmod/binary_index.hpp"

#include <algorithm>
#include <bit>
#include <mutex>
#include <limits>
#include <random>

#include "pixelmod/error.hpp"

namespace pixelmod::index {

void IndexConfig::validate() const {
  if (kind != IndexKind::kIvf) {
    return;
  }
  if (nlist < 1) {
    throw Error(ErrorCode::kValidation, "IVF nlist must be >= 1");
  }
  if (nprobe < 1 || nprobe > nlist) {
    throw Error(ErrorCode::kValidation, "IVF nprobe must be in [1, nlist]");
  }
}

bool hit_before(const SearchHit& a, const SearchHit& b) {
  if (a.distance != b.distance) {
    return a.distance < b.distance;
  }
  return a.image_id < b.image_id;
}

int default_radius(HashKind kind) {
  return kind == HashKind::kPHash64 ? 10 : 90;
}

BinaryIndex::BinaryIndex(HashKind kind, IndexConfig config)
    : kind_(kind),
      word_count_(hashing::word_count(kind)),
      config_(config),
      mutex_(std::make_unique<std::shared_mutex>()) {
  config_.validate();
}

BinaryIndex::BinaryIndex(BinaryIndex&& other) noexcept
    : kind_(other.kind_),
      word_count_(other.word_count_),
      config_(other.config_),
      words_(std::move(other.words_)),
      records_(std::move(other.records_)),
      rows_by_id_(std::move(other.rows_by_id_)),
      live_count_(other.live_count_),
      centroid_words_(std::move(other.centroid_words_)),
      lists_(std::move(other.lists_)),
      mutex_(std::move(other.mutex_)) {
  other.mutex_ = std::make_unique<std::shared_mutex>();
  other.live_count_ = 0;
}

BinaryIndex& BinaryIndex::operator=(BinaryIndex&& other) noexcept {
  if (this != &other) {
    kind_ = other.kind_;
    word_count_ = other.word_count_;
    config_ = other.config_;
    words_ = std::move(other.words_);
    records_ = std::move(other.records_);
    rows_by_id_ = std::move(other.rows_by_id_);
    live_count_ = other.live_count_;
    centroid_words_ = std::move(other.centroid_words_);
    lists_ = std::move(other.lists_);
    mutex_ = std::move(other.mutex_);
    other.mutex_ = std::make_unique<std::shared_mutex>();
    other.live_count_ = 0;
  }
  return *this;
}

IndexConfig BinaryIndex::config() const {
  std::shared_lock lock(*mutex_);
  return config_;
}

void BinaryIndex::check_kind(const PerceptualHash& hash) const {
  if (hash.kind() != kind_) {
    throw Error(ErrorCode::kKindMismatch,
                "index holds " + std::string(hashing::hash_kind_name(kind_)) +
                    " hashes, got " +
                    std::string(hashing::hash_kind_name(hash.kind())));
  }
}

int BinaryIndex::distance_to(std::size_t row,
                             const std::uint64_t* query) const {
  const std::uint64_t* w = words_of(row);
  int d = 0;
  for (int i = 0; i < word_count_; ++i) {
    d += std::popcount(w[i] ^ query[i]);
  }
  return d;
}

int BinaryIndex::nearest_centroid(const std::uint64_t* query) const {
  const int nlist = static_cast<int>(lists_.size());
  int best = 0;
  int best_d = std::numeric_limits<int>::max();
  for (int c = 0; c < nlist; ++c) {
    int d = 0;
    for (int i = 0; i < word_count_; ++i) {
      d += std::popcount(centroid_words_[c * word_count_ + i] ^ query[i]);
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void BinaryIndex::append(const std::string& id, const std::uint64_t* words,
                         int cluster) {
  const std::size_t row = records_.size();
  words_.insert(words_.end(), words, words + word_count_);
  records_.push_back(Record{id, true, cluster});
  rows_by_id_.emplace(id, row);
  ++live_count_;
  if (cluster >= 0) {
    lists_[cluster].push_back(row);
  }
}

void BinaryIndex::insert(const std::string& id, const PerceptualHash& hash) {
  check_kind(hash);
  std::unique_lock lock(*mutex_);
  if (rows_by_id_.contains(id)) {
    throw Error(ErrorCode::kDuplicateId, "id already indexed: " + id);
  }
  const std::uint64_t* w = hash.raw_words().data();
  const int cluster = lists_.empty() ? -1 : nearest_centroid(w);
  append(id, w, cluster);
}

bool BinaryIndex::remove(const std::string& id) {
  std::unique_lock lock(*mutex_);
  auto it = rows_by_id_.find(id);
  if (it == rows_by_id_.end()) {
    return false;
  }
  records_[it->second].live = false;
  rows_by_id_.erase(it);
  --live_count_;
  return true;
}

std::size_t BinaryIndex::size() const {
  std::shared_lock lock(*mutex_);
  return live_count_;
}

bool BinaryIndex::contains(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  return rows_by_id_.contains(id);
}

std::optional<PerceptualHash> BinaryIndex::get(const std::string& id) const {
  std::shared_lock lock(*mutex_);
  auto it = rows_by_id_.find(id);
  if (it == rows_by_id_.end()) {
    return std::nullopt;
  }
  PerceptualHash::Words w{};
  std::copy_n(words_of(it->second), word_count_, w.begin());
  return PerceptualHash(kind_, w);
}

template <class Fn>
void BinaryIndex::visit_candidates(const std::uint64_t* query, Fn&& fn) const {
  if (config_.kind == IndexKind::kFlat || lists_.empty()) {
    for (std::size_t row = 0; row < records_.size(); ++row) {
      fn(row);
    }
    return;
  }
  const int nlist = static_cast<int>(lists_.size());
  std::vector<std::pair<int, int>> order(nlist);
  for (int c = 0; c < nlist; ++c) {
    int d = 0;
    for (int i = 0; i < word_count_; ++i) {
      d += std::popcount(centroid_words_[c * word_count_ + i] ^ query[i]);
    }
    order[c] = {d, c};
  }
  const int probes = std::min(config_.nprobe, nlist);
  std::partial_sort(order.begin(), order.begin() + probes, order.end());
  for (int p = 0; p < probes; ++p) {
    for (std::size_t row : lists_[order[p].second]) {
      fn(row);
    }
  }
}

std::vector<SearchHit> BinaryIndex::search_range(const PerceptualHash& query,
                                                 int radius) const {
  check_kind(query);
  if (radius < 0 || radius > hashing::bit_width(kind_)) {
    throw Error(ErrorCode::kValidation,
                "radius must be in [0, " +
                    std::to_string(hashing::bit_width(kind_)) + "]");
  }
  std::shared_lock lock(*mutex_);
  const std::uint64_t* q = query.raw_words().data();
  std::vector<SearchHit> hits;
  visit_candidates(q, [&](std::size_t row) {
    const Record& rec = records_[row];
    if (!rec.live) {
      return;
    }
    const int d = distance_to(row, q);
    if (d <= radius) {
      hits.push_back(SearchHit{rec.id, d});
    }
  });
  std::sort(hits.begin(), hits.end(), hit_before);
  return hits;
}

std::vector<SearchHit> BinaryIndex::search_topk(const PerceptualHash& query,
                                                std::size_t k) const {
  check_kind(query);
  if (k == 0) {
    throw Error(ErrorCode::kValidation, "k must be >= 1");
  }
  std::shared_lock lock(*mutex_);
  const std::uint64_t* q = query.raw_words().data();
  std::vector<SearchHit> hits;
  visit_candidates(q, [&](std::size_t row) {
    const Record& rec = records_[row];
    if (rec.live) {
      hits.push_back(SearchHit{rec.id, distance_to(row, q)});
    }
  });
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + keep, hits.end(), hit_before);
  hits.resize(keep);
  return hits;
}

std::vector<PerceptualHash> BinaryIndex::build_ivf(int nlist, int max_iters,
                                                   std::uint64_t seed) {
  if (nlist < 1 || max_iters < 1) {
    throw Error(ErrorCode::kValidation, "nlist and max_iters must be >= 1");
  }
  std::unique_lock lock(*mutex_);
  std::vector<std::size_t> rows;
  rows.reserve(live_count_);
  for (std::size_t r = 0; r < records_.size(); ++r) {
    if (records_[r].live) {
      rows.push_back(r);
    }
  }
  const std::size_t n = rows.size();
  if (n < static_cast<std::size_t>(nlist)) {
    throw Error(ErrorCode::kTooFewRecords,
                "build_ivf needs at least " + std::to_string(nlist) +
                    " records, index has " + std::to_string(n));
  }

  const int wc = word_count_;
  const int bits = hashing::bit_width(kind_);
  std::vector<std::uint64_t> centroids;
  centroids.reserve(static_cast<std::size_t>(nlist) * wc);

  // Seeded farthest-point initialization under Hamming distance.
  std::mt19937_64 rng(seed);
  const std::size_t first = rows[rng() % n];
  centroids.insert(centroids.end(), words_of(first), words_of(first) + wc);
  std::vector<int> min_dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    min_dist[i] = distance_to(rows[i], &centroids[0]);
  }
  while (centroids.size() < static_cast<std::size_t>(nlist) * wc) {
    const std::size_t pick = static_cast<std::size_t>(
        std::max_element(min_dist.begin(), min_dist.end()) - min_dist.begin());
    const std::size_t offset = centroids.size();
    centroids.insert(centroids.end(), words_of(rows[pick]),
                     words_of(rows[pick]) + wc);
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], distance_to(rows[i], &centroids[offset]));
    }
  }

  auto nearest = [&](std::size_t row) {
    const std::uint64_t* w = words_of(row);
    int best = 0;
    int best_d = std::numeric_limits<int>::max();
    for (int c = 0; c < nlist; ++c) {
      int d = 0;
      for (int i = 0; i < wc; ++i) {
        d += std::popcount(centroids[c * wc + i] ^ w[i]);
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  };

  std::vector<int> assign(n, -1);
  std::vector<int> counts(static_cast<std::size_t>(nlist) * bits);
  std::vector<int> sizes(nlist);
  bool stable = false;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(rows[i]);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) {
      stable = true;
      break;
    }
    // Majority vote per bit; ties set the bit; empty cells keep their centroid.
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = assign[i];
      ++sizes[c];
      const std::uint64_t* w = words_of(rows[i]);
      for (int wi = 0; wi < wc; ++wi) {
        for (std::uint64_t v = w[wi]; v != 0; v &= v - 1) {
          ++counts[static_cast<std::size_t>(c) * bits + wi * 64 +
                   std::countr_zero(v)];
        }
      }
    }
    for (int c = 0; c < nlist; ++c) {
      if (sizes[c] == 0) {
        continue;
      }
      for (int wi = 0; wi < wc; ++wi) {
        std::uint64_t v = 0;
        for (int b = 0; b < 64; ++b) {
          if (2 * counts[static_cast<std::size_t>(c) * bits + wi * 64 + b] >=
              sizes[c]) {
            v |= std::uint64_t{1} << b;
          }
        }
        centroids[c * wc + wi] = v;
      }
    }
  }
  if (!stable) {
    // Out of iterations: align assignments with the final centroids.
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest(rows[i]);
    }
  }

  centroid_words_ = std::move(centroids);
  lists_.assign(nlist, {});
  for (auto& rec : records_) {
    rec.cluster = -1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    records_[rows[i]].cluster = assign[i];
    lists_[assign[i]].push_back(rows[i]);
  }
  config_.kind = IndexKind::kIvf;
  config_.nlist = nlist;
  config_.nprobe = std::clamp(config_.nprobe, 1, nlist);

  std::vector<PerceptualHash> table;
  for (int c = 0; c < nlist; ++c) {
    PerceptualHash::Words w{};
    std::copy_n(&centroid_words_[c * wc], wc, w.begin());
    table.emplace_back(kind_, w);
  }
  return table;
}

void BinaryIndex::set_nprobe(int nprobe) {
  std::unique_lock lock(*mutex_);
  IndexConfig next = config_;
  next.nprobe = nprobe;
  next.validate();
  config_ = next;
}

std::vector<PerceptualHash> BinaryIndex::centroids() const {
  std::shared_lock lock(*mutex_);
  std::vector<PerceptualHash> table;
  for (std::size_t c = 0; c < lists_.size(); ++c) {
    PerceptualHash::Words w{};
    std::copy_n(&centroid_words_[c * word_count_], word_count_, w.begin());
    table.emplace_back(kind_, w);
  }
  return table;
}

std::unordered_map<std::string, int> BinaryIndex::assignments() const {
  std::shared_lock lock(*mutex_);
  std::unordered_map<std::string, int> out;
  if (lists_.empty()) {
    return out;
  }
  for (const auto& rec : records_) {
    if (rec.live) {
      out.emplace(rec.id, rec.cluster);
    }
  }
  return out;
}

}  // namespace pixelmod::index
