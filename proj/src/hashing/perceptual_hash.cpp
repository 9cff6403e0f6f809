#include <bit>
#include <cctype>

#include "pixelmod/error.hpp"
#include "pixelmod/hashing.hpp"

namespace pixelmod::hashing {

std::string_view hash_kind_name(HashKind kind) {
  return kind == HashKind::kPHash64 ? "phash64" : "pdq256";
}

HashKind parse_hash_kind(std::string_view name) {
  if (name == "phash64" || name == "PHASH64" || name == "phash") {
    return HashKind::kPHash64;
  }
  if (name == "pdq256" || name == "PDQ256" || name == "pdq") {
    return HashKind::kPdq256;
  }
  throw Error(ErrorCode::kValidation,
              "unknown hash kind '" + std::string(name) + "'");
}

PerceptualHash::PerceptualHash(HashKind kind, const Words& words,
                               std::optional<int> quality)
    : kind_(kind), words_(words), quality_(quality) {
  for (int w = word_count(kind); w < 4; ++w) {
    if (words_[w] != 0) {
      throw Error(ErrorCode::kValidation,
                  "hash words beyond the kind's bit width must be zero");
    }
  }
  if (kind == HashKind::kPHash64 && quality_) {
    throw Error(ErrorCode::kValidation, "pHash values carry no quality");
  }
  if (quality_ && (*quality_ < 0 || *quality_ > 100)) {
    throw Error(ErrorCode::kValidation, "quality outside [0,100]");
  }
}

PerceptualHash PerceptualHash::from_hex(HashKind kind, std::string_view hex,
                                        std::optional<int> quality) {
  const auto digits = static_cast<std::size_t>(bit_width(kind) / 4);
  if (hex.size() != digits) {
    throw Error(ErrorCode::kValidation,
                "expected " + std::to_string(digits) + " hex digits for " +
                    std::string(hash_kind_name(kind)) + ", got " +
                    std::to_string(hex.size()));
  }
  Words words{};
  const int nwords = word_count(kind);
  for (std::size_t i = 0; i < digits; ++i) {
    const char c = hex[i];
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      v = c - 'A' + 10;
    } else {
      throw Error(ErrorCode::kValidation,
                  "invalid hex digit in hash: '" + std::string(1, c) + "'");
    }
    // Leading digits belong to the most significant word.
    const int word = nwords - 1 - static_cast<int>(i / 16);
    const int shift = 60 - 4 * static_cast<int>(i % 16);
    words[word] |= static_cast<std::uint64_t>(v) << shift;
  }
  return PerceptualHash(kind, words, quality);
}

bool PerceptualHash::bit(int k) const {
  return (words_[k >> 6] >> (k & 63)) & 1U;
}

void PerceptualHash::set_bit(int k, bool value) {
  const std::uint64_t mask = std::uint64_t{1} << (k & 63);
  if (value) {
    words_[k >> 6] |= mask;
  } else {
    words_[k >> 6] &= ~mask;
  }
}

void PerceptualHash::flip_bit(int k) {
  words_[k >> 6] ^= std::uint64_t{1} << (k & 63);
}

std::string PerceptualHash::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bit_width(kind_) / 4);
  for (int w = word_count(kind_) - 1; w >= 0; --w) {
    for (int shift = 60; shift >= 0; shift -= 4) {
      out.push_back(kDigits[(words_[w] >> shift) & 0xF]);
    }
  }
  return out;
}

int hamming(const PerceptualHash& a, const PerceptualHash& b) {
  if (a.kind() != b.kind()) {
    throw Error(ErrorCode::kKindMismatch,
                "cannot compare " + std::string(hash_kind_name(a.kind())) +
                    " with " + std::string(hash_kind_name(b.kind())));
  }
  int d = 0;
  const auto& wa = a.raw_words();
  const auto& wb = b.raw_words();
  for (int w = 0; w < word_count(a.kind()); ++w) {
    d += std::popcount(wa[w] ^ wb[w]);
  }
  return d;
}

PerceptualHash compute_hash(HashKind kind, const LuminancePlane& plane) {
  return kind == HashKind::kPHash64 ? phash64(plane) : pdqhash256(plane);
}

}  // namespace pixelmod::hashing
