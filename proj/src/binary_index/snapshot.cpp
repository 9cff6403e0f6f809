// Snapshot layout (all integers little-endian):
//
//   magic        8 bytes  "PXMODIDX"
//   version      u16
//   hash kind    u8       1 = phash64, 2 = pdq256
//   count        u64      live records
//   centroid block:
//     index kind u8, nlist u32, nprobe u32, centroid count u32,
//     centroid count x words
//   record block, per record:
//     id length u16, id bytes, cluster i32 (-1 when unclustered), words
//   crc32        u32      over every preceding byte
//
// Tombstoned records are dropped on save.

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "pixelmod/binary_index.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::index {
namespace {

constexpr char kMagic[8] = {'P', 'X', 'M', 'O', 'D', 'I', 'D', 'X'};

static_assert(std::endian::native == std::endian::little,
              "snapshot I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw Error(ErrorCode::kChecksumMismatch, "snapshot truncated");
    }
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data),
            static_cast<uInt>(n)));
}

}  // namespace

void BinaryIndex::save(const std::filesystem::path& path) const {
  std::shared_lock lock(*mutex_);
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint16_t>(kSnapshotVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind_));
  w.put<std::uint64_t>(live_count_);

  w.put<std::uint8_t>(static_cast<std::uint8_t>(config_.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config_.nlist));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config_.nprobe));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(lists_.size()));
  w.bytes(centroid_words_.data(), centroid_words_.size() * sizeof(std::uint64_t));

  for (std::size_t row = 0; row < records_.size(); ++row) {
    const Record& rec = records_[row];
    if (!rec.live) {
      continue;
    }
    if (rec.id.size() > 0xFFFF) {
      throw Error(ErrorCode::kValidation, "id too long for snapshot: " + rec.id);
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(rec.id.size()));
    w.bytes(rec.id.data(), rec.id.size());
    w.put<std::int32_t>(rec.cluster);
    w.bytes(words_of(row), word_count_ * sizeof(std::uint64_t));
  }
  auto& buf = w.buffer();
  const std::uint32_t crc = crc_of(buf.data(), buf.size());
  w.put<std::uint32_t>(crc);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
      throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError,
                "cannot move snapshot into place: " + ec.message());
  }
}

BinaryIndex BinaryIndex::load(const std::filesystem::path& path,
                              std::optional<HashKind> expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), {});
  constexpr std::size_t kHeader = sizeof(kMagic) + 2 + 1 + 8;
  if (buf.size() < kHeader + 4) {
    throw Error(ErrorCode::kChecksumMismatch, "snapshot truncated");
  }
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + body, 4);
  if (crc_of(buf.data(), body) != stored_crc) {
    throw Error(ErrorCode::kChecksumMismatch,
                "snapshot checksum mismatch: " + path.string());
  }

  Reader r(buf.data(), body);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kVersionMismatch, "not an index snapshot");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "snapshot version " + std::to_string(version) +
                    ", expected " + std::to_string(kSnapshotVersion));
  }
  const auto raw_kind = r.get<std::uint8_t>();
  if (raw_kind != static_cast<std::uint8_t>(HashKind::kPHash64) &&
      raw_kind != static_cast<std::uint8_t>(HashKind::kPdq256)) {
    throw Error(ErrorCode::kVersionMismatch, "unknown hash kind in snapshot");
  }
  const auto kind = static_cast<HashKind>(raw_kind);
  if (expected_kind && *expected_kind != kind) {
    throw Error(ErrorCode::kKindMismatch,
                "snapshot holds " + std::string(hashing::hash_kind_name(kind)) +
                    ", expected " +
                    std::string(hashing::hash_kind_name(*expected_kind)));
  }
  const auto count = r.get<std::uint64_t>();

  IndexConfig config;
  config.kind = static_cast<IndexKind>(r.get<std::uint8_t>());
  config.nlist = static_cast<int>(r.get<std::uint32_t>());
  config.nprobe = static_cast<int>(r.get<std::uint32_t>());
  const auto centroid_count = r.get<std::uint32_t>();

  BinaryIndex index(kind, config);
  const int wc = index.word_count_;
  const std::size_t centroid_bytes =
      static_cast<std::size_t>(centroid_count) * wc * sizeof(std::uint64_t);
  index.centroid_words_.resize(static_cast<std::size_t>(centroid_count) * wc);
  std::memcpy(index.centroid_words_.data(), r.take(centroid_bytes),
              centroid_bytes);
  index.lists_.assign(centroid_count, {});

  std::vector<std::uint64_t> words(wc);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string id(r.take(len), len);
    const auto cluster = r.get<std::int32_t>();
    if (cluster >= static_cast<std::int64_t>(centroid_count)) {
      throw Error(ErrorCode::kVersionMismatch, "record cluster out of range");
    }
    std::memcpy(words.data(), r.take(wc * sizeof(std::uint64_t)),
                wc * sizeof(std::uint64_t));
    if (index.rows_by_id_.contains(id)) {
      throw Error(ErrorCode::kDuplicateId, "duplicate id in snapshot: " + id);
    }
    index.append(id, words.data(), cluster);
  }
  if (!r.done()) {
    throw Error(ErrorCode::kChecksumMismatch, "trailing bytes in snapshot");
  }
  return index;
}

}  // namespace pixelmod::index
