#pragma once

#include <advface/generator.hpp>
#include <advface/image.hpp>
#include <advface/pipeline.hpp>
#include <advface/rng.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <random>
#include <string>

namespace testing {

inline const nlohmann::json& oracle() {
  static const nlohmann::json j = [] {
    std::ifstream in(ADVFACE_TEST_FIXTURES "/oracle_values.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("advface_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Same formula as the Python oracle's pattern_image.
inline advface::FaceImage pattern_image(int h, int w, double a, double b) {
  advface::FaceImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = 0.5 + 0.4 * std::sin(a * y + b * x + 0.9 * c) * std::cos(0.3 * y - 0.2 * x);
  return img;
}

inline advface::FaceImage random_image(int h, int w, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
  advface::Rng rng(seed);
  advface::FaceImage img(h, w);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rng.uniform(lo, hi);
  return img;
}

inline advface::StyleLatent random_latent(int layers, advface::Rng& rng, double scale = 1.0) {
  advface::StyleLatent w(layers, advface::kStyleDim);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
  return w;
}

// A face the toy generator can represent: G(random latent, zero noise).
inline advface::FaceImage toy_face(const advface::GeneratorHandle& g, std::uint64_t seed) {
  advface::Rng rng(seed);
  return advface::synthesize(g, random_latent(g.layer_count(), rng), g.zero_noise());
}

// One generator per process: its direct inverter caches a factorisation.
inline const advface::ToyEnvironment& shared_env() {
  static const advface::ToyEnvironment env;
  return env;
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

// Central difference of f along direction d at step h.
inline double directional_fd(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& d, double h) {
  return (f(x + h * d) - f(x - h * d)) / (2.0 * h);
}

inline Eigen::VectorXd random_direction(Eigen::Index n, std::uint64_t seed) {
  advface::Rng rng(seed);
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = rng.normal();
  return d / d.norm();
}

}  // namespace testing
