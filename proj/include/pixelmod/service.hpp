#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "pixelmod/ocr.hpp"
#include "pixelmod/pipeline.hpp"

namespace pixelmod::service {

inline constexpr int kApiSchemaVersion = 1;

struct Request {
  std::string method;  // upper case
  std::string path;    // without query string
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ServiceConfig {
  std::filesystem::path store_root;
  pipeline::PipelineConfig pipeline;
  ocr::ProviderConfig provider;
  std::optional<std::string> api_token;  // bearer token; no auth when unset
  int default_page_size = 50;
  int max_page_size = 500;
};

/// HTTP status for an error code: 400 validation-type, 404 unknown ids,
/// 409 conflicts, 503 provider unavailable, 500 otherwise.
int http_status_for(ErrorCode code);

/// The /v1 API. `handle` is transport-independent; `serve` binds it to an
/// HTTP listener. Ingest, batch query and story rebuilds run as jobs on one
/// worker thread; everything touching the store is serialized.
class Service {
 public:
  /// `provider` overrides config.provider when given.
  explicit Service(ServiceConfig config, std::unique_ptr<ocr::OcrProvider> provider = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& request);

  /// Blocks until the job queue is empty and the worker is idle.
  void wait_idle();

  /// Blocks serving HTTP until stop() is called. Returns false when the
  /// address cannot be bound.
  bool serve(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; serving continues on a
  /// background thread until stop().
  int serve_background(const std::string& host);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pixelmod::service
