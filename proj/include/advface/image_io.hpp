#pragma once

#include <filesystem>
#include <string>

#include "advface/image.hpp"

namespace advface {

// 8-bit RGB PNG. Pixel values map linearly: byte / 255 on load,
// round(value * 255) on store.
FaceImage load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const FaceImage& image);

// PNG bytes in memory, used for request bodies.
std::string encode_png(const FaceImage& image);

// Nearest 8-bit representable image; what a PNG round trip yields.
FaceImage quantize8(const FaceImage& image);

}  // namespace advface
