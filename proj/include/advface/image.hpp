#pragma once

#include <Eigen/Core>
#include <string>

#include "advface/dual.hpp"

namespace advface {

struct Resolution {
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  bool operator==(const Resolution&) const = default;
};

std::string to_string(const Resolution& r);

inline constexpr int kChannels = 3;

// Interleaved RGB image (row-major, HWC). Values are nominally in [0, 1]; the
// template parameter lets the same code run on dual numbers.
template <class T>
struct Image {
  int height = 0;
  int width = 0;
  ArrayX<T> pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(ArrayX<T>::Zero(h * w * kChannels)) {}
  Image(int h, int w, ArrayX<T> data) : height(h), width(w), pixels(std::move(data)) {}

  Resolution resolution() const { return {height, width}; }
  Eigen::Index size() const { return pixels.size(); }

  T& at(int y, int x, int c) { return pixels[(static_cast<Eigen::Index>(y) * width + x) * kChannels + c]; }
  const T& at(int y, int x, int c) const {
    return pixels[(static_cast<Eigen::Index>(y) * width + x) * kChannels + c];
  }
};

// A validated image: finite, every value in [0, 1], both sides at least 8.
using FaceImage = Image<double>;

void validate_face_image(const FaceImage& image);

FaceImage constant_image(Resolution r, double value);

// Bilinear resampling with half-pixel centres and edge clamping. Returns an
// exact copy when the resolution is unchanged.
FaceImage resize_bilinear(const FaceImage& image, Resolution target);

// Mean over non-overlapping factor x factor blocks; both sides must divide.
template <class T>
Image<T> average_pool(const Image<T>& image, int factor);

// Adjoint of average_pool: spreads each pooled gradient evenly over its block.
template <class T>
Image<T> average_pool_adjoint(const Image<T>& grad, int factor);

FaceImage to_double(const Image<Dual>& image);

}  // namespace advface

#include "advface/image_inl.hpp"
