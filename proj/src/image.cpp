#include "advface/image.hpp"

#include <algorithm>
#include <cmath>

#include "advface/errors.hpp"

namespace advface {

std::string to_string(const Resolution& r) {
  return std::to_string(r.height) + "x" + std::to_string(r.width);
}

void validate_face_image(const FaceImage& image) {
  if (image.height < 8 || image.width < 8) {
    throw DimensionError("image must be at least 8x8, got " + to_string(image.resolution()));
  }
  if (image.pixels.size() != static_cast<Eigen::Index>(image.height) * image.width * kChannels) {
    throw DimensionError("pixel buffer does not match " + to_string(image.resolution()) + "x3");
  }
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    const double v = image.pixels[i];
    if (!std::isfinite(v)) throw ValidationError("image contains a non-finite value");
    if (v < 0.0 || v > 1.0) throw ValidationError("image value outside [0, 1]");
  }
}

FaceImage constant_image(Resolution r, double value) {
  FaceImage out(r.height, r.width);
  out.pixels.setConstant(value);
  return out;
}

FaceImage resize_bilinear(const FaceImage& image, Resolution target) {
  if (target.height < 1 || target.width < 1) {
    throw ValidationError("resize target must be at least 1x1");
  }
  if (image.resolution() == target) return image;
  FaceImage out(target.height, target.width);
  const double sy = static_cast<double>(image.height) / target.height;
  const double sx = static_cast<double>(image.width) / target.width;
  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < kChannels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = (1 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

FaceImage to_double(const Image<Dual>& image) {
  FaceImage out(image.height, image.width);
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) out.pixels[i] = image.pixels[i].a;
  return out;
}

}  // namespace advface
