#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <thread>

#include <openssl/evp.h>

#include "httplib.h"
#include "json.hpp"
#include "pixelmod/error.hpp"
#include "pixelmod/ocr.hpp"

namespace pixelmod::ocr {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Temporary copy of the image for providers that need a file path.
class ScratchFile {
 public:
  explicit ScratchFile(const std::vector<std::uint8_t>& bytes) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pixelmod-ocr-" + std::to_string(rd()) + std::to_string(rd()));
    std::ofstream out(path_, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw Error(ErrorCode::kIoError, "cannot write " + path_.string());
    }
  }
  ~ScratchFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string base64(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace

ImageSource ImageSource::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingImage, "cannot open " + path.string());
  }
  return {path, {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}};
}

std::filesystem::path SidecarProvider::sidecar_for(const std::filesystem::path& image) {
  auto p = image;
  p += ".ocr.txt";
  return p;
}

ProviderOutput SidecarProvider::run(const ImageSource& image) {
  if (!image.path) {
    return {};
  }
  const auto sidecar = sidecar_for(*image.path);
  if (!std::filesystem::exists(sidecar)) {
    return {};
  }
  return {read_file(sidecar), std::nullopt};
}

ProcessProvider::ProcessProvider(std::vector<std::string> argv,
                                 std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) {
    throw Error(ErrorCode::kValidation, "process OCR provider needs a command");
  }
}

ProviderOutput ProcessProvider::run(const ImageSource& image) {
  std::optional<ScratchFile> scratch;
  std::filesystem::path path;
  if (image.path) {
    path = *image.path;
  } else {
    scratch.emplace(image.bytes);
    path = scratch->path();
  }

  std::vector<std::string> args = argv_;
  args.push_back(path.string());
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  cargs.push_back(nullptr);

  int fds[2];
  if (pipe(fds) != 0) {
    throw Error(ErrorCode::kProviderUnavailable, "pipe failed");
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw Error(ErrorCode::kProviderUnavailable, "fork failed");
  }
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    const int devnull = open("/dev/null", O_WRONLY);
    if (devnull >= 0) dup2(devnull, STDERR_FILENO);
    execvp(cargs[0], cargs.data());
    _exit(127);
  }
  close(fds[1]);

  std::string out;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) {
      timed_out = true;
      break;
    }
    const ssize_t n = read(fds[0], buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  if (timed_out) {
    kill(pid, SIGKILL);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw Error(ErrorCode::kProviderUnavailable, "OCR command timed out");
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kProviderUnavailable,
                "OCR command failed: " + argv_.front());
  }
  return {out, std::nullopt};
}

HttpProviderOptions HttpProviderOptions::from_env() {
  HttpProviderOptions o;
  if (const char* e = std::getenv("PIXELMOD_OCR_ENDPOINT")) o.endpoint = e;
  if (const char* k = std::getenv("PIXELMOD_OCR_KEY")) o.api_key = k;
  return o;
}

HttpProvider::HttpProvider(HttpProviderOptions options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  if (!url.starts_with("http://")) {
    throw Error(ErrorCode::kValidation,
                "OCR endpoint must be an http:// URL: '" + url + "'");
  }
  const auto slash = url.find('/', 7);
  base_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  if (options_.max_attempts < 1) {
    throw Error(ErrorCode::kValidation, "max_attempts must be >= 1");
  }
}

ProviderOutput HttpProvider::run(const ImageSource& image) {
  httplib::Client client(base_);
  const auto secs = options_.timeout.count() / 1000;
  const auto usecs = (options_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }
  const std::string body = nlohmann::json{{"image", base64(image.bytes)}}.dump();

  std::string last_error;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kProviderUnavailable,
                  "OCR endpoint answered HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      ProviderOutput out;
      out.text = j.at("text").get<std::string>();
      if (j.contains("boxes")) {
        std::vector<Box> boxes;
        for (const auto& b : j.at("boxes")) {
          boxes.push_back({b.at("x").get<double>(), b.at("y").get<double>(),
                           b.at("w").get<double>(), b.at("h").get<double>()});
        }
        out.boxes = std::move(boxes);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kProviderUnavailable,
                  std::string("malformed OCR response: ") + e.what());
    }
  }
  throw Error(ErrorCode::kProviderUnavailable,
              "OCR endpoint unreachable after " +
                  std::to_string(options_.max_attempts) + " attempts: " + last_error);
}

std::unique_ptr<OcrProvider> make_provider(const ProviderConfig& config) {
  if (config.kind == "sidecar") {
    return std::make_unique<SidecarProvider>();
  }
  if (config.kind == "process") {
    return std::make_unique<ProcessProvider>(config.command);
  }
  if (config.kind == "http") {
    return std::make_unique<HttpProvider>(HttpProviderOptions::from_env());
  }
  throw Error(ErrorCode::kValidation, "unknown OCR provider: " + config.kind);
}

OcrLabel extract_label(const ImageSource& image, OcrProvider& provider) {
  const auto plane = hashing::decode_image(image.bytes);
  auto out = provider.run(image);
  OcrLabel label;
  label.normalized = normalize(out.text);
  label.raw = std::move(out.text);
  if (out.boxes) {
    label.coverage = coverage_of(*out.boxes, plane.width, plane.height);
  }
  return label;
}

}  // namespace pixelmod::ocr
