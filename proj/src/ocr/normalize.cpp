#include <algorithm>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "pixelmod/error.hpp"
#include "pixelmod/ocr.hpp"

namespace pixelmod::ocr {

std::string normalize(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kValidation, "ICU NFC normalizer unavailable");
  }
  icu::UnicodeString text = nfc->normalize(
      icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(),
                                                    static_cast<int32_t>(raw.size()))),
      status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kValidation, "NFC normalization failed");
  }
  text.toLower(icu::Locale::getRoot());

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < text.length();) {
    const UChar32 c = text.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(UChar32{' '});
      pending_space = false;
    }
    collapsed.append(c);
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

double coverage_of(const std::vector<Box>& boxes, int width, int height) {
  if (width <= 0 || height <= 0) {
    return 0.0;
  }
  struct Clipped {
    double x0, y0, x1, y1;
  };
  std::vector<Clipped> rects;
  std::vector<double> xs = {0.0, static_cast<double>(width)};
  for (const auto& b : boxes) {
    Clipped c{std::clamp(b.x, 0.0, double(width)), std::clamp(b.y, 0.0, double(height)),
              std::clamp(b.x + b.w, 0.0, double(width)),
              std::clamp(b.y + b.h, 0.0, double(height))};
    if (c.x1 > c.x0 && c.y1 > c.y0) {
      rects.push_back(c);
      xs.push_back(c.x0);
      xs.push_back(c.x1);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  // Sweep vertical strips; in each strip merge the covered y-intervals.
  double area = 0.0;
  for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
    const double left = xs[s];
    const double right = xs[s + 1];
    std::vector<std::pair<double, double>> spans;
    for (const auto& r : rects) {
      if (r.x0 <= left && r.x1 >= right) {
        spans.emplace_back(r.y0, r.y1);
      }
    }
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double lo = 0.0, hi = -1.0;
    for (const auto& [y0, y1] : spans) {
      if (y0 > hi) {
        if (hi > lo) covered += hi - lo;
        lo = y0;
        hi = y1;
      } else {
        hi = std::max(hi, y1);
      }
    }
    if (hi > lo) covered += hi - lo;
    area += covered * (right - left);
  }
  return std::clamp(area / (double(width) * double(height)), 0.0, 1.0);
}

}  // namespace pixelmod::ocr
