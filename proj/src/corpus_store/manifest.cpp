#include <fstream>

#include "pixelmod/corpus_store.hpp"

namespace pixelmod::store {
namespace {

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) {
    throw Error(ErrorCode::kManifestParse, std::string("'") + key + "' must be a string");
  }
  return j[key].get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

ManifestEntry ManifestEntry::from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kManifestParse, "entry must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "path" && key != "post_id" && key != "post_text" && key != "ocr_sidecar") {
      throw Error(ErrorCode::kManifestParse, "unknown field '" + key + "'");
    }
  }
  const auto path = optional_string(j, "path");
  if (!path || path->empty()) throw Error(ErrorCode::kManifestParse, "'path' is required");
  ManifestEntry e;
  e.path = resolve(base_dir, *path);
  e.post_id = optional_string(j, "post_id");
  e.post_text = optional_string(j, "post_text");
  if (auto sidecar = optional_string(j, "ocr_sidecar")) e.ocr_sidecar = resolve(base_dir, *sidecar);
  return e;
}

nlohmann::json ManifestEntry::to_json() const {
  nlohmann::json j = {{"path", path.string()}};
  if (post_id) j["post_id"] = *post_id;
  if (post_text) j["post_text"] = *post_text;
  if (ocr_sidecar) j["ocr_sidecar"] = ocr_sidecar->string();
  return j;
}

std::vector<ManifestEntry> parse_manifest(std::istream& in,
                                          const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto e = ManifestEntry::from_json(nlohmann::json::parse(line), base_dir);
      e.line = number;
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kManifestParse,
                  "manifest line " + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kManifestParse,
                  "manifest line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

}  // namespace pixelmod::store
