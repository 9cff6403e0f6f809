#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixelmod/hashing.hpp"

namespace pixelmod::index {

using hashing::HashKind;
using hashing::PerceptualHash;

enum class IndexKind : std::uint8_t { kFlat = 0, kIvf = 1 };

struct IndexConfig {
  IndexKind kind = IndexKind::kFlat;
  int nlist = 1;   // IVF only
  int nprobe = 1;  // IVF only; 1 <= nprobe <= nlist

  void validate() const;
};

struct SearchHit {
  std::string image_id;
  int distance = 0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Canonical hit order: ascending distance, then id.
bool hit_before(const SearchHit& a, const SearchHit& b);

/// Default range radius per hash kind: 10 for pHash, 90 for PDQ.
int default_radius(HashKind kind);

inline constexpr std::uint16_t kSnapshotVersion = 1;
inline constexpr std::uint64_t kDefaultClusterSeed = 0x5eed;

/// In-memory Hamming index over packed 64-bit words.
///
/// FLAT scans every record. IVF partitions records with k-majority clustering
/// (build_ivf) and scans the nprobe clusters whose centroids are nearest to
/// the query. Before build_ivf has run an IVF index scans everything.
///
/// Thread safety: any number of concurrent searches, or one mutation
/// (insert/remove/build_ivf/set_nprobe).
class BinaryIndex {
 public:
  explicit BinaryIndex(HashKind kind, IndexConfig config = {});

  BinaryIndex(BinaryIndex&& other) noexcept;
  BinaryIndex& operator=(BinaryIndex&& other) noexcept;
  BinaryIndex(const BinaryIndex&) = delete;
  BinaryIndex& operator=(const BinaryIndex&) = delete;

  HashKind hash_kind() const noexcept { return kind_; }
  IndexConfig config() const;

  /// Throws kKindMismatch or kDuplicateId.
  void insert(const std::string& id, const PerceptualHash& hash);
  /// Tombstones the record; returns false when the id is unknown.
  bool remove(const std::string& id);

  std::size_t size() const;
  bool contains(const std::string& id) const;
  std::optional<PerceptualHash> get(const std::string& id) const;

  /// Every live record within `radius` (subject to IVF probing), in
  /// canonical order. Throws kKindMismatch, kValidation on a bad radius.
  std::vector<SearchHit> search_range(const PerceptualHash& query,
                                      int radius) const;

  /// The k nearest live records (subject to IVF probing), canonical order.
  std::vector<SearchHit> search_topk(const PerceptualHash& query,
                                     std::size_t k) const;

  /// k-majority clustering of the live records into `nlist` cells. Sets the
  /// index kind to IVF and keeps the configured nprobe (clamped to nlist).
  /// Returns the centroid table. Throws kTooFewRecords.
  std::vector<PerceptualHash> build_ivf(int nlist, int max_iters,
                                        std::uint64_t seed = kDefaultClusterSeed);

  void set_nprobe(int nprobe);
  std::vector<PerceptualHash> centroids() const;
  /// Cluster of each live record id, empty when no clustering exists.
  std::unordered_map<std::string, int> assignments() const;

  /// Binary snapshot: "PXMODIDX", u16 version, u8 hash kind, u64 count,
  /// centroid block, record block, CRC-32. Little-endian.
  void save(const std::filesystem::path& path) const;
  /// Throws kIoError, kChecksumMismatch, kVersionMismatch, and kKindMismatch
  /// when `expected_kind` is given and differs.
  static BinaryIndex load(const std::filesystem::path& path,
                          std::optional<HashKind> expected_kind = std::nullopt);

 private:
  struct Record {
    std::string id;
    bool live = true;
    int cluster = -1;
  };

  const std::uint64_t* words_of(std::size_t row) const {
    return &words_[row * word_count_];
  }
  int distance_to(std::size_t row, const std::uint64_t* query) const;
  template <class Fn>
  void visit_candidates(const std::uint64_t* query, Fn&& fn) const;
  void check_kind(const PerceptualHash& hash) const;
  int nearest_centroid(const std::uint64_t* query) const;
  void append(const std::string& id, const std::uint64_t* words, int cluster);

  HashKind kind_;
  int word_count_;
  IndexConfig config_;
  std::vector<std::uint64_t> words_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> rows_by_id_;
  std::size_t live_count_ = 0;
  std::vector<std::uint64_t> centroid_words_;
  std::vector<std::vector<std::size_t>> lists_;
  std::unique_ptr<std::shared_mutex> mutex_;
};

}  // namespace pixelmod::index
