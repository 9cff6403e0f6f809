#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "pixelmod/error.hpp"
#include "pixelmod/hashing.hpp"

namespace pixelmod::hashing {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kSig[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A,
                                          0x1A, 0x0A};
  return b.size() >= sizeof(kSig) && std::memcmp(b.data(), kSig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

void check_dimensions(int width, int height) {
  if (width < kMinImageDimension || height < kMinImageDimension) {
    throw Error(ErrorCode::kTooSmall,
                "image is " + std::to_string(width) + "x" +
                    std::to_string(height) + ", minimum is " +
                    std::to_string(kMinImageDimension) + "x" +
                    std::to_string(kMinImageDimension));
  }
}

std::uint8_t luma(double r, double g, double b) {
  const double y = kLumaR * r + kLumaG * g + kLumaB * b;
  return static_cast<std::uint8_t>(std::floor(y + 0.5));
}

LuminancePlane decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kDecodeError,
                std::string("png: ") + image.message);
  }
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  if (width < kMinImageDimension || height < kMinImageDimension) {
    png_image_free(&image);
    check_dimensions(width, height);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kDecodeError, "png: " + msg);
  }

  LuminancePlane plane{width, height, {}};
  plane.samples.resize(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    const std::uint8_t* p = &rgba[i * 4];
    const double a = p[3];
    if (p[3] == 255) {
      plane.samples[i] = luma(p[0], p[1], p[2]);
    } else {
      // Composite over white.
      const double r = (p[0] * a + 255.0 * (255.0 - a)) / 255.0;
      const double g = (p[1] * a + 255.0 * (255.0 - a)) / 255.0;
      const double b = (p[2] * a + 255.0 * (255.0 - a)) / 255.0;
      plane.samples[i] = luma(r, g, b);
    }
  }
  return plane;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

extern "C" void jpeg_silent(j_common_ptr, int) {}

// Kept free of non-trivially destructible locals: longjmp must not skip
// destructors.
bool decode_jpeg_rgb(std::span<const std::uint8_t> bytes,
                     std::vector<std::uint8_t>& rgb, int& width, int& height,
                     JpegErrorManager& err) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  width = static_cast<int>(cinfo.image_width);
  height = static_cast<int>(cinfo.image_height);
  if (width < kMinImageDimension || height < kMinImageDimension) {
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  rgb.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = &rgb[static_cast<std::size_t>(cinfo.output_scanline) *
                        width * 3];
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

LuminancePlane decode_jpeg(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> rgb;
  int width = 0;
  int height = 0;
  JpegErrorManager err{};
  if (!decode_jpeg_rgb(bytes, rgb, width, height, err)) {
    throw Error(ErrorCode::kDecodeError, std::string("jpeg: ") + err.message);
  }
  check_dimensions(width, height);
  LuminancePlane plane{width, height, {}};
  plane.samples.resize(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    plane.samples[i] = luma(rgb[i * 3], rgb[i * 3 + 1], rgb[i * 3 + 2]);
  }
  return plane;
}

}  // namespace

LuminancePlane decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    return decode_png(bytes);
  }
  if (is_jpeg(bytes)) {
    return decode_jpeg(bytes);
  }
  throw Error(ErrorCode::kDecodeError, "unsupported image format");
}

std::vector<std::uint8_t> encode_png_rgb(int width, int height,
                                         std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::kValidation, "rgb buffer size does not match");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0,
                                 nullptr)) {
    throw Error(ErrorCode::kIoError, std::string("png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0,
                                 nullptr)) {
    throw Error(ErrorCode::kIoError, std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

namespace {

bool encode_jpeg_impl(int width, int height, const std::uint8_t* rgb,
                      int quality, unsigned char** out,
                      unsigned long* out_size, JpegErrorManager& err) {
  jpeg_compress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, out, out_size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto row = const_cast<JSAMPROW>(
        &rgb[static_cast<std::size_t>(cinfo.next_scanline) * width * 3]);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg_rgb(int width, int height,
                                          std::span<const std::uint8_t> rgb,
                                          int quality) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::kValidation, "rgb buffer size does not match");
  }
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  JpegErrorManager err{};
  const bool ok =
      encode_jpeg_impl(width, height, rgb.data(), quality, &buffer, &size, err);
  std::vector<std::uint8_t> out;
  if (ok) {
    out.assign(buffer, buffer + size);
  }
  std::free(buffer);
  if (!ok) {
    throw Error(ErrorCode::kIoError, std::string("jpeg: ") + err.message);
  }
  return out;
}

}  // namespace pixelmod::hashing
