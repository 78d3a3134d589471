#include "advface/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "advface/errors.hpp"

namespace advface {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<png_byte> to_bytes(const FaceImage& image) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(image.pixels.size()));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) bytes[i] = to_byte(image.pixels[i]);
  return bytes;
}

png_image rgb_header(const FaceImage& image) {
  png_image header;
  std::memset(&header, 0, sizeof(header));
  header.version = PNG_IMAGE_VERSION;
  header.width = static_cast<png_uint_32>(image.width);
  header.height = static_cast<png_uint_32>(image.height);
  header.format = PNG_FORMAT_RGB;
  return header;
}

}  // namespace

FaceImage load_png(const std::filesystem::path& path) {
  png_image header;
  std::memset(&header, 0, sizeof(header));
  header.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&header, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + header.message);
  }
  header.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(header));
  if (!png_image_finish_read(&header, nullptr, buffer.data(), 0, nullptr)) {
    std::string message = header.message;
    png_image_free(&header);
    throw IoError("malformed PNG " + path.string() + ": " + message);
  }
  FaceImage image(static_cast<int>(header.height), static_cast<int>(header.width));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) image.pixels[i] = buffer[i] / 255.0;
  return image;
}

void save_png(const std::filesystem::path& path, const FaceImage& image) {
  png_image header = rgb_header(image);
  const auto bytes = to_bytes(image);
  if (!png_image_write_to_file(&header, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + header.message);
  }
}

std::string encode_png(const FaceImage& image) {
  png_image header = rgb_header(image);
  const auto bytes = to_bytes(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&header, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encoding failed: ") + header.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&header, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encoding failed: ") + header.message);
  }
  out.resize(size);
  return out;
}

FaceImage quantize8(const FaceImage& image) {
  FaceImage out = image;
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) out.pixels[i] = to_byte(out.pixels[i]) / 255.0;
  return out;
}

}  // namespace advface
