#pragma once

#include "advface/errors.hpp"

namespace advface {

template <class T>
Image<T> average_pool(const Image<T>& image, int factor) {
  if (factor == 1) return image;
  if (factor < 1 || image.height % factor != 0 || image.width % factor != 0) {
    throw DimensionError("average_pool: factor " + std::to_string(factor) +
                         " does not divide " + std::to_string(image.height) + "x" +
                         std::to_string(image.width));
  }
  Image<T> out(image.height / factor, image.width / factor);
  const double scale = 1.0 / (factor * factor);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < kChannels; ++c) {
        out.at(y / factor, x / factor, c) += image.at(y, x, c) * scale;
      }
    }
  }
  return out;
}

template <class T>
Image<T> average_pool_adjoint(const Image<T>& grad, int factor) {
  if (factor == 1) return grad;
  Image<T> out(grad.height * factor, grad.width * factor);
  const double scale = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < kChannels; ++c) {
        out.at(y, x, c) = grad.at(y / factor, x / factor, c) * scale;
      }
    }
  }
  return out;
}

}  // namespace advface
