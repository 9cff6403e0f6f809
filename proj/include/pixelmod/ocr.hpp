#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixelmod/hashing.hpp"

namespace pixelmod::ocr {

/// Text region in pixel coordinates.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;
};

struct OcrLabel {
  std::string raw;
  std::string normalized;
  std::optional<double> coverage;  // fraction of the image covered by boxes

  bool empty() const { return normalized.empty(); }
  friend bool operator==(const OcrLabel&, const OcrLabel&) = default;
};

/// NFC, lowercase, collapse whitespace runs to one space, trim.
std::string normalize(std::string_view raw);

/// Area of the union of `boxes` clipped to the image, divided by image area.
double coverage_of(const std::vector<Box>& boxes, int width, int height);

/// What a provider is handed. `path` is set when the image lives on disk;
/// providers that need a file write `bytes` to a temporary one otherwise.
struct ImageSource {
  std::optional<std::filesystem::path> path;
  std::vector<std::uint8_t> bytes;

  static ImageSource from_file(const std::filesystem::path& path);
};

struct ProviderOutput {
  std::string text;
  std::optional<std::vector<Box>> boxes;
};

struct Capabilities {
  bool reports_boxes = false;
  bool deterministic = true;
};

class OcrProvider {
 public:
  virtual ~OcrProvider() = default;
  virtual std::string name() const = 0;
  virtual Capabilities capabilities() const = 0;
  /// Throws kProviderUnavailable on transient failure.
  virtual ProviderOutput run(const ImageSource& image) = 0;
};

/// Reads `<image>.ocr.txt` next to the image. No sidecar means no text.
class SidecarProvider : public OcrProvider {
 public:
  std::string name() const override { return "sidecar"; }
  Capabilities capabilities() const override { return {false, true}; }
  ProviderOutput run(const ImageSource& image) override;

  static std::filesystem::path sidecar_for(const std::filesystem::path& image);
};

/// Runs `argv... <image path>` and takes stdout as the text. A non-zero exit
/// status or a run longer than `timeout` is a provider failure.
class ProcessProvider : public OcrProvider {
 public:
  explicit ProcessProvider(std::vector<std::string> argv,
                           std::chrono::milliseconds timeout = std::chrono::seconds(30));
  std::string name() const override { return "process"; }
  Capabilities capabilities() const override { return {false, true}; }
  ProviderOutput run(const ImageSource& image) override;

 private:
  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
};

struct HttpProviderOptions {
  std::string endpoint;  // http://host[:port]/path
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::milliseconds timeout = std::chrono::seconds(10);
  int max_attempts = 3;

  /// Reads PIXELMOD_OCR_ENDPOINT and PIXELMOD_OCR_KEY.
  static HttpProviderOptions from_env();
};

/// POST {"image": <base64>} and expect {"text": ..., "boxes": [{x,y,w,h}]}.
/// Connection errors and 5xx responses are retried up to max_attempts.
class HttpProvider : public OcrProvider {
 public:
  explicit HttpProvider(HttpProviderOptions options);
  std::string name() const override { return "http"; }
  Capabilities capabilities() const override { return {true, false}; }
  ProviderOutput run(const ImageSource& image) override;

 private:
  HttpProviderOptions options_;
  std::string base_;
  std::string path_;
};

struct ProviderConfig {
  std::string kind = "sidecar";  // sidecar | process | http
  std::vector<std::string> command;  // process only
};

std::unique_ptr<OcrProvider> make_provider(const ProviderConfig& config);

/// Decodes the image (kDecodeError / kTooSmall), runs the provider and builds
/// the normalized label. Coverage is filled when the provider reports boxes.
OcrLabel extract_label(const ImageSource& image, OcrProvider& provider);

/// Labels keyed by (hash kind, hash bits). Concurrent misses on the same key
/// share one extraction; at most `max_in_flight` extractions run at once.
class LabelCache {
 public:
  explicit LabelCache(int max_in_flight = 4);

  struct Lookup {
    OcrLabel label;
    bool was_hit = false;
  };

  Lookup get_or_extract(const hashing::PerceptualHash& hash,
                        const std::function<OcrLabel()>& extract);
  std::optional<OcrLabel> peek(const hashing::PerceptualHash& hash) const;
  /// Prewarm; overwrites any existing entry.
  void put(const hashing::PerceptualHash& hash, OcrLabel label);

  std::uint64_t hits() const;
  std::uint64_t misses() const;
  std::size_t size() const;
  void reset_counters();

 private:
  struct Entry {
    std::optional<OcrLabel> label;
    std::shared_future<OcrLabel> pending;
  };

  mutable std::mutex mutex_;
  std::unordered_map<hashing::PerceptualHash, Entry> entries_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int free_slots_;
};

LabelCache::Lookup cache_get_or_extract(LabelCache& cache,
                                        const hashing::PerceptualHash& hash,
                                        const ImageSource& image,
                                        OcrProvider& provider);

}  // namespace pixelmod::ocr
