// PDQ: tent-filter downsample to 64x64, 16x16 DCT, median threshold.
//
// Arithmetic is single precision and the accumulation order mirrors the
// ThreatExchange reference so that bits match it exactly, including on
// near-flat images whose DCT terms are rounding noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "pixelmod/hashing.hpp"

namespace pixelmod::hashing {
namespace {

constexpr int kDownsample = 64;
constexpr int kDct = 16;
constexpr int kTentPasses = 2;

using Buffer64 = std::array<std::array<float, kDownsample>, kDownsample>;
using Buffer16x64 = std::array<std::array<float, kDownsample>, kDct>;
using Buffer16 = std::array<std::array<float, kDct>, kDct>;

int jarosz_window_size(int old_dimension, int new_dimension) {
  return (old_dimension + 2 * new_dimension - 1) / (2 * new_dimension);
}

// Running box mean with shrinking windows at both ends.
void box_1d(const float* in, float* out, int length, int stride,
            int full_window) {
  const int half_window = (full_window + 2) / 2;
  const int phase1 = half_window - 1;
  const int phase2 = full_window - half_window + 1;
  const int phase3 = length - full_window;
  const int phase4 = half_window - 1;

  int li = 0;
  int ri = 0;
  int oi = 0;
  float sum = 0.0f;
  int window = 0;
  for (int i = 0; i < phase1; ++i) {
    sum += in[ri];
    ++window;
    ri += stride;
  }
  for (int i = 0; i < phase2; ++i) {
    sum += in[ri];
    ++window;
    out[oi] = sum / window;
    ri += stride;
    oi += stride;
  }
  for (int i = 0; i < phase3; ++i) {
    sum += in[ri];
    sum -= in[li];
    out[oi] = sum / window;
    li += stride;
    ri += stride;
    oi += stride;
  }
  for (int i = 0; i < phase4; ++i) {
    sum -= in[li];
    --window;
    out[oi] = sum / window;
    li += stride;
    oi += stride;
  }
}

void tent_filter(std::vector<float>& a, std::vector<float>& b, int rows,
                 int cols, int window_along_rows, int window_along_cols) {
  for (int pass = 0; pass < kTentPasses; ++pass) {
    for (int i = 0; i < rows; ++i) {
      box_1d(&a[static_cast<std::size_t>(i) * cols],
             &b[static_cast<std::size_t>(i) * cols], cols, 1,
             window_along_rows);
    }
    for (int j = 0; j < cols; ++j) {
      box_1d(&b[j], &a[j], rows, cols, window_along_cols);
    }
  }
}

void decimate(const std::vector<float>& in, int rows, int cols, Buffer64& out) {
  for (int i = 0; i < kDownsample; ++i) {
    const int ini = static_cast<int>(((i + 0.5) * rows) / kDownsample);
    for (int j = 0; j < kDownsample; ++j) {
      const int inj = static_cast<int>(((j + 0.5) * cols) / kDownsample);
      out[i][j] = in[static_cast<std::size_t>(ini) * cols + inj];
    }
  }
}

// Counts significant gradients on the 64x64 downsample.
int quality_metric(const Buffer64& a) {
  int gradient_sum = 0;
  for (int i = 0; i < kDownsample - 1; ++i) {
    for (int j = 0; j < kDownsample; ++j) {
      const float u = a[i][j];
      const float v = a[i + 1][j];
      const int d = static_cast<int>(((u - v) * 100) / 255);
      gradient_sum += std::abs(d);
    }
  }
  for (int i = 0; i < kDownsample; ++i) {
    for (int j = 0; j < kDownsample - 1; ++j) {
      const float u = a[i][j];
      const float v = a[i][j + 1];
      const int d = static_cast<int>(((u - v) * 100) / 255);
      gradient_sum += std::abs(d);
    }
  }
  return std::min(100, gradient_sum / 90);
}

// Rows 1..16 of the 64-point DCT-II basis.
const std::array<float, kDct * kDownsample>& dct_matrix() {
  static const auto table = [] {
    std::array<float, kDct * kDownsample> t{};
    const float scale = static_cast<float>(std::sqrt(2.0 / 64.0));
    for (int i = 0; i < kDct; ++i) {
      for (int j = 0; j < kDownsample; ++j) {
        t[i * kDownsample + j] = static_cast<float>(
            scale * std::cos((std::numbers::pi / 2 / 64.0) * (i + 1) *
                             (2 * j + 1)));
      }
    }
    return t;
  }();
  return table;
}

void dct_64_to_16(const Buffer64& a, Buffer16x64& t, Buffer16& b) {
  const auto& d = dct_matrix();
  for (int i = 0; i < kDct; ++i) {
    for (int j = 0; j < kDownsample; ++j) {
      float sum = 0.0f;
      for (int k = 0; k < kDownsample; ++k) {
        sum += d[i * kDownsample + k] * a[k][j];
      }
      t[i][j] = sum;
    }
  }
  for (int i = 0; i < kDct; ++i) {
    for (int j = 0; j < kDct; ++j) {
      float sum = 0.0f;
      for (int k = 0; k < kDownsample; ++k) {
        sum += t[i][k] * d[j * kDownsample + k];
      }
      b[i][j] = sum;
    }
  }
}

// Lower median (rank (n+1)/2), the value Torben's method returns.
float lower_median(const Buffer16& b) {
  std::array<float, kDct * kDct> flat{};
  for (int i = 0; i < kDct; ++i) {
    std::copy(b[i].begin(), b[i].end(), flat.begin() + i * kDct);
  }
  const auto mid = flat.begin() + (flat.size() + 1) / 2 - 1;
  std::nth_element(flat.begin(), mid, flat.end());
  return *mid;
}

}  // namespace

PerceptualHash pdqhash256(const LuminancePlane& plane) {
  const int rows = plane.height;
  const int cols = plane.width;
  std::vector<float> buffer1(plane.samples.begin(), plane.samples.end());

  Buffer64 downsampled{};
  if (rows == kDownsample && cols == kDownsample) {
    for (int i = 0; i < kDownsample; ++i) {
      for (int j = 0; j < kDownsample; ++j) {
        downsampled[i][j] = buffer1[static_cast<std::size_t>(i) * cols + j];
      }
    }
  } else {
    std::vector<float> buffer2(buffer1.size());
    tent_filter(buffer1, buffer2, rows, cols,
                jarosz_window_size(cols, kDownsample),
                jarosz_window_size(rows, kDownsample));
    decimate(buffer1, rows, cols, downsampled);
  }

  const int quality = quality_metric(downsampled);

  Buffer16x64 intermediate{};
  Buffer16 coeffs{};
  dct_64_to_16(downsampled, intermediate, coeffs);
  const float median = lower_median(coeffs);

  PerceptualHash hash(HashKind::kPdq256, {}, quality);
  for (int i = 0; i < kDct; ++i) {
    for (int j = 0; j < kDct; ++j) {
      if (coeffs[i][j] > median) {
        hash.set_bit(i * kDct + j);
      }
    }
  }
  return hash;
}

}  // namespace pixelmod::hashing
