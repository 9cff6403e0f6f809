#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "pixelmod/hashing.hpp"

namespace pixelmod::hashing {
namespace {

constexpr int kResize = 32;
constexpr int kBlock = 8;
// Median over the AC terms only; the DC slot is zeroed before thresholding so
// flat images produce an all-zero hash.
constexpr int kAcTerms = kBlock * kBlock - 1;
// Coefficients below this magnitude are resize/DCT rounding residue (a flat
// image yields ~1e-13) and are snapped to zero.
constexpr double kZeroSnap = 1e-6;

// Area-weighted box filter: output cell o covers [o*s, (o+1)*s) of the input
// axis with s = src/dst, fractional pixel coverage included.
std::vector<std::vector<std::pair<int, double>>> box_weights(int src,
                                                             int dst) {
  std::vector<std::vector<std::pair<int, double>>> w(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int o = 0; o < dst; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src, static_cast<int>(std::ceil(hi)));
    for (int i = first; i < last; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, double(i));
      if (overlap > 0) {
        w[o].emplace_back(i, overlap / scale);
      }
    }
  }
  return w;
}

const std::array<std::array<double, kResize>, kBlock>& dct_rows() {
  static const auto table = [] {
    std::array<std::array<double, kResize>, kBlock> t{};
    for (int k = 0; k < kBlock; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / kResize)
                              : std::sqrt(2.0 / kResize);
      for (int n = 0; n < kResize; ++n) {
        t[k][n] = s * std::cos(std::numbers::pi * (2 * n + 1) * k /
                               (2.0 * kResize));
      }
    }
    return t;
  }();
  return table;
}

}  // namespace

PerceptualHash phash64(const LuminancePlane& plane) {
  const auto wx = box_weights(plane.width, kResize);
  const auto wy = box_weights(plane.height, kResize);

  // Horizontal pass: height x 32.
  std::vector<double> rows(static_cast<std::size_t>(plane.height) * kResize);
  for (int y = 0; y < plane.height; ++y) {
    for (int ox = 0; ox < kResize; ++ox) {
      double acc = 0;
      for (const auto& [x, w] : wx[ox]) {
        acc += w * plane.at(x, y);
      }
      rows[static_cast<std::size_t>(y) * kResize + ox] = acc;
    }
  }
  std::array<std::array<double, kResize>, kResize> small{};
  for (int oy = 0; oy < kResize; ++oy) {
    for (int ox = 0; ox < kResize; ++ox) {
      double acc = 0;
      for (const auto& [y, w] : wy[oy]) {
        acc += w * rows[static_cast<std::size_t>(y) * kResize + ox];
      }
      small[oy][ox] = acc;
    }
  }

  // Low-frequency 8x8 corner of C * small * C^T.
  const auto& c = dct_rows();
  std::array<std::array<double, kResize>, kBlock> partial{};
  for (int u = 0; u < kBlock; ++u) {
    for (int x = 0; x < kResize; ++x) {
      double acc = 0;
      for (int y = 0; y < kResize; ++y) {
        acc += c[u][y] * small[y][x];
      }
      partial[u][x] = acc;
    }
  }
  std::array<double, kBlock * kBlock> coeffs{};
  for (int u = 0; u < kBlock; ++u) {
    for (int v = 0; v < kBlock; ++v) {
      double acc = 0;
      for (int x = 0; x < kResize; ++x) {
        acc += partial[u][x] * c[v][x];
      }
      coeffs[u * kBlock + v] = std::abs(acc) < kZeroSnap ? 0.0 : acc;
    }
  }
  coeffs[0] = 0.0;

  std::array<double, kAcTerms> ac{};
  std::copy(coeffs.begin() + 1, coeffs.end(), ac.begin());
  std::nth_element(ac.begin(), ac.begin() + kAcTerms / 2, ac.end());
  const double median = ac[kAcTerms / 2];

  PerceptualHash hash(HashKind::kPHash64);
  for (int k = 0; k < kBlock * kBlock; ++k) {
    if (coeffs[k] > median) {
      hash.set_bit(k);
    }
  }
  return hash;
}

}  // namespace pixelmod::hashing
