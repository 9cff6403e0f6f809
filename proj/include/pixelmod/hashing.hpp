#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pixelmod::hashing {

enum class HashKind : std::uint8_t {
  kPHash64 = 1,
  kPdq256 = 2,
};

constexpr int bit_width(HashKind kind) {
  return kind == HashKind::kPHash64 ? 64 : 256;
}

constexpr int word_count(HashKind kind) { return bit_width(kind) / 64; }

/// "phash64" / "pdq256".
std::string_view hash_kind_name(HashKind kind);
/// Accepts the names above plus the upper-case spellings "PHASH64"/"PDQ256".
HashKind parse_hash_kind(std::string_view name);

inline constexpr int kMinImageDimension = 16;

/// Row-major 8-bit luminance. Produced by decode_image(); both hash functions
/// consume it.
struct LuminancePlane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;

  std::uint8_t at(int x, int y) const {
    return samples[static_cast<std::size_t>(y) * width + x];
  }
};

/// Fixed-width binary fingerprint. Bit k is coefficient k of the hashed
/// block in row-major order; the hex form prints the value most significant
/// bit first (bit 255 or bit 63 leads).
class PerceptualHash {
 public:
  using Words = std::array<std::uint64_t, 4>;

  explicit PerceptualHash(HashKind kind = HashKind::kPdq256) : kind_(kind) {}
  PerceptualHash(HashKind kind, const Words& words,
                 std::optional<int> quality = std::nullopt);

  static PerceptualHash from_hex(HashKind kind, std::string_view hex,
                                 std::optional<int> quality = std::nullopt);

  HashKind kind() const noexcept { return kind_; }
  int bits() const noexcept { return bit_width(kind_); }

  /// PDQ quality in [0,100]. Never set on pHash values; set on PDQ values
  /// computed from pixels, and on parsed PDQ values only when supplied.
  std::optional<int> quality() const noexcept { return quality_; }

  bool bit(int k) const;
  void set_bit(int k, bool value = true);
  void flip_bit(int k);

  /// Only the first word_count(kind()) words are meaningful; the rest are 0.
  std::span<const std::uint64_t> words() const {
    return {words_.data(), static_cast<std::size_t>(word_count(kind_))};
  }
  const Words& raw_words() const noexcept { return words_; }

  std::string hex() const;

  /// Equality ignores quality.
  friend bool operator==(const PerceptualHash& a, const PerceptualHash& b) {
    return a.kind_ == b.kind_ && a.words_ == b.words_;
  }

 private:
  HashKind kind_;
  Words words_{};
  std::optional<int> quality_;
};

/// Popcount of XOR. Throws Error(kKindMismatch) on differing kinds.
int hamming(const PerceptualHash& a, const PerceptualHash& b);

/// JPEG or PNG to luminance: alpha composited over white, then
/// round(0.299 R + 0.587 G + 0.114 B). Throws kDecodeError / kTooSmall.
LuminancePlane decode_image(std::span<const std::uint8_t> bytes);

/// 64-bit DCT hash: 32x32 box resize, orthonormal DCT-II, 8x8 low-frequency
/// block with the DC term zeroed, bit set iff coefficient > median of the 63
/// AC terms.
PerceptualHash phash64(const LuminancePlane& plane);

/// 256-bit PDQ hash with quality score, following the published reference.
PerceptualHash pdqhash256(const LuminancePlane& plane);

PerceptualHash compute_hash(HashKind kind, const LuminancePlane& plane);

/// Encodes 8-bit RGB (row-major, 3 bytes per pixel) as PNG.
std::vector<std::uint8_t> encode_png_rgb(int width, int height,
                                         std::span<const std::uint8_t> rgb);

/// Encodes 8-bit RGB as baseline JPEG at the given quality (1..100).
std::vector<std::uint8_t> encode_jpeg_rgb(int width, int height,
                                          std::span<const std::uint8_t> rgb,
                                          int quality);

}  // namespace pixelmod::hashing

template <>
struct std::hash<pixelmod::hashing::PerceptualHash> {
  std::size_t operator()(
      const pixelmod::hashing::PerceptualHash& h) const noexcept {
    std::size_t seed = static_cast<std::size_t>(h.kind());
    for (auto w : h.raw_words()) {
      seed ^= std::hash<std::uint64_t>{}(w) + 0x9e3779b97f4a7c15ULL +
              (seed << 6) + (seed >> 2);
    }
    return seed;
  }
};
