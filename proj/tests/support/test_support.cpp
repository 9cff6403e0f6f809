#include "support/test_support.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pixelmod::testing {

std::filesystem::path fixture_path(const std::string& relative) {
  return std::filesystem::path(PIXELMOD_FIXTURE_DIR) / relative;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

hashing::PerceptualHash random_hash(hashing::HashKind kind,
                                    std::mt19937_64& rng) {
  hashing::PerceptualHash::Words w{};
  for (int i = 0; i < hashing::word_count(kind); ++i) {
    w[i] = rng();
  }
  return hashing::PerceptualHash(kind, w);
}

hashing::PerceptualHash perturb(const hashing::PerceptualHash& base, int flips,
                                std::mt19937_64& rng) {
  std::vector<int> positions(base.bits());
  for (int i = 0; i < base.bits(); ++i) {
    positions[i] = i;
  }
  std::shuffle(positions.begin(), positions.end(), rng);
  hashing::PerceptualHash out = base;
  for (int i = 0; i < flips; ++i) {
    out.flip_bit(positions[i]);
  }
  return out;
}

int naive_hamming(const hashing::PerceptualHash& a,
                  const hashing::PerceptualHash& b) {
  int d = 0;
  for (int k = 0; k < a.bits(); ++k) {
    d += a.bit(k) != b.bit(k) ? 1 : 0;
  }
  return d;
}

TempDir::TempDir() {
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("pixelmod-test-" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace pixelmod::testing
