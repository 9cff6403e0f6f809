#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pixelmod/calibration.hpp"
#include "pixelmod/error.hpp"

namespace pixelmod::calibration {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

BenchReport bench(const PipelineConfig& config, const std::vector<std::filesystem::path>& images,
                  ocr::OcrProvider& provider, int runs) {
  if (images.size() < 30) {
    throw Error(ErrorCode::kValidation,
                "bench needs at least 30 images, got " + std::to_string(images.size()));
  }
  if (runs < 1) throw Error(ErrorCode::kValidation, "runs must be >= 1");

  const std::size_t n = images.size();
  std::vector<double> hash_ms(n, 0.0), ocr_ms(n, 0.0), coverage(n, 0.0);
  bool have_coverage = true;
  for (int run = 0; run < runs; ++run) {
    index::BinaryIndex idx(config.hash_kind);
    for (std::size_t i = 0; i < n; ++i) {
      const auto source = ocr::ImageSource::from_file(images[i]);
      auto start = Clock::now();
      const auto plane = hashing::decode_image(source.bytes);
      idx.insert(std::to_string(i), hashing::compute_hash(config.hash_kind, plane));
      hash_ms[i] += ms_since(start);

      start = Clock::now();
      const auto label = ocr::extract_label(source, provider);
      ocr_ms[i] += ms_since(start);
      if (label.coverage) {
        coverage[i] = *label.coverage;
      } else {
        have_coverage = false;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    hash_ms[i] /= runs;
    ocr_ms[i] /= runs;
  }

  BenchReport r;
  r.images = static_cast<int>(n);
  r.runs = runs;
  r.mean_hash_index_ms = std::accumulate(hash_ms.begin(), hash_ms.end(), 0.0) / n;
  r.mean_ocr_ms = std::accumulate(ocr_ms.begin(), ocr_ms.end(), 0.0) / n;
  r.p50_ocr_ms = percentile(ocr_ms, 0.50);
  r.p95_ocr_ms = percentile(ocr_ms, 0.95);
  r.max_ocr_ms = *std::max_element(ocr_ms.begin(), ocr_ms.end());
  if (have_coverage) r.pearson_r = pearson(ocr_ms, coverage);
  return r;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json j = {{"images", images},
                      {"runs", runs},
                      {"mean_hash_index_ms", mean_hash_index_ms},
                      {"mean_ocr_ms", mean_ocr_ms},
                      {"p50_ocr_ms", p50_ocr_ms},
                      {"p95_ocr_ms", p95_ocr_ms},
                      {"max_ocr_ms", max_ocr_ms},
                      {"pearson_r", nullptr}};
  if (pearson_r) j["pearson_r"] = *pearson_r;
  return j;
}

std::string BenchReport::table() const {
  auto ratio = [](double ocr, double hash) {
    return hash > 0 ? fmt("%.1fx", ocr / hash) : std::string("n/a");
  };
  std::string out;
  out += "source      ocr_s/img  hash_s/img  ocr/hash\n";
  out += "measured    " + fmt("%9.4f", mean_ocr_ms / 1000) + "  " +
         fmt("%10.4f", mean_hash_index_ms / 1000) + "  " +
         ratio(mean_ocr_ms, mean_hash_index_ms) + "\n";
  out += "reference   " + fmt("%9.4f", kReferenceOcrSeconds) + "  " +
         fmt("%10.4f", kReferenceHashSeconds) + "  " +
         ratio(kReferenceOcrSeconds, kReferenceHashSeconds) + "\n";
  out += "ocr p50/p95/max ms: " + fmt("%.3f", p50_ocr_ms) + " / " + fmt("%.3f", p95_ocr_ms) +
         " / " + fmt("%.3f", max_ocr_ms) + "\n";
  out += "pearson r (ocr time vs coverage): " +
         (pearson_r ? fmt("%.3f", *pearson_r) : std::string("n/a")) + "\n";
  out += "images: " + std::to_string(images) + ", runs: " + std::to_string(runs) + "\n";
  return out;
}

}  // namespace pixelmod::calibration
