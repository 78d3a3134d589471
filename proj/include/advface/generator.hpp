#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "advface/dual.hpp"
#include "advface/image.hpp"

namespace advface {

inline constexpr int kStyleDim = 512;

// One style row per synthesis layer; shallow rows drive coarse structure,
// deep rows fine detail.
template <class T>
using LatentCodes = Eigen::Matrix<T, Eigen::Dynamic, kStyleDim, Eigen::RowMajor>;

using StyleLatent = LatentCodes<double>;

// Per-layer stochastic inputs. Held fixed while an attack runs.
struct NoiseStack {
  std::vector<Eigen::ArrayXd> layers;
};

struct Inversion {
  StyleLatent latent;
  NoiseStack noise;
  // Least-squares residual norm in pre-activation space before it is folded
  // into the noise stack.
  double residual = 0.0;
};

// Style-based generator. synthesize must be deterministic in (latent, noise)
// and differentiable in the latent; the Dual overloads are optional and only
// needed for second-order meta-gradients.
class GeneratorHandle {
 public:
  virtual ~GeneratorHandle() = default;

  virtual std::string name() const = 0;
  virtual int layer_count() const = 0;
  virtual Resolution output_resolution() const = 0;
  virtual std::vector<Eigen::Index> noise_sizes() const = 0;

  virtual Image<double> synthesize(const LatentCodes<double>& latent,
                                   const NoiseStack& noise) const = 0;
  // Pullback of an image-space gradient to the latent.
  virtual LatentCodes<double> synthesize_vjp(const LatentCodes<double>& latent,
                                             const NoiseStack& noise,
                                             const Image<double>& grad) const = 0;

  virtual Image<Dual> synthesize(const LatentCodes<Dual>& latent, const NoiseStack& noise) const;
  virtual LatentCodes<Dual> synthesize_vjp(const LatentCodes<Dual>& latent,
                                           const NoiseStack& noise,
                                           const Image<Dual>& grad) const;

  virtual Inversion invert(const FaceImage& image) const = 0;

  NoiseStack zero_noise() const;
};

// Checked entry points: shapes against the generator, finiteness of inputs.
FaceImage synthesize(const GeneratorHandle& g, const StyleLatent& latent, const NoiseStack& noise);
Inversion invert(const GeneratorHandle& g, const FaceImage& image);

void check_latent(const GeneratorHandle& g, const StyleLatent& latent);
void check_noise(const GeneratorHandle& g, const NoiseStack& noise);

struct ToyGeneratorConfig {
  // Side length of each layer's RGB grid; each must divide the next and the
  // last is the output side.
  std::vector<int> layer_sides{16, 32, 32, 32};
  std::uint64_t seed = 1;
  double latent_gain = 1.0;
  double bias_scale = 0.5;
  // Pixels are clamped to [clamp, 1 - clamp] before the logit in inversion.
  double pixel_clamp = 1e-6;
  enum class Inverter { Direct, Iterative } inverter = Inverter::Direct;
  int max_iterations = 1000;
  double tolerance = 1e-12;
};

// Desk-scale generator: h_1 = c_1 + A_1 w_1 + n_1,
// h_m = upsample(h_{m-1}) + c_m + A_m w_m + n_m, image = sigmoid(h_L).
// Linear before the sigmoid, so inversion is a least-squares problem; the
// residual is folded into the last noise layer so reconstruction is exact up
// to the pixel clamp.
class ToyGenerator final : public GeneratorHandle {
 public:
  explicit ToyGenerator(ToyGeneratorConfig config = {});
  ~ToyGenerator() override;

  std::string name() const override { return "toy-generator"; }
  int layer_count() const override { return static_cast<int>(sides_.size()); }
  Resolution output_resolution() const override { return {sides_.back(), sides_.back()}; }
  std::vector<Eigen::Index> noise_sizes() const override;

  Image<double> synthesize(const LatentCodes<double>& latent, const NoiseStack& noise) const override;
  LatentCodes<double> synthesize_vjp(const LatentCodes<double>& latent, const NoiseStack& noise,
                                     const Image<double>& grad) const override;
  Image<Dual> synthesize(const LatentCodes<Dual>& latent, const NoiseStack& noise) const override;
  LatentCodes<Dual> synthesize_vjp(const LatentCodes<Dual>& latent, const NoiseStack& noise,
                                   const Image<Dual>& grad) const override;

  Inversion invert(const FaceImage& image) const override;

  const ToyGeneratorConfig& config() const { return config_; }

 private:
  template <class T>
  ArrayX<T> preactivation(const LatentCodes<T>& latent, const NoiseStack& noise) const;
  template <class T>
  LatentCodes<T> preactivation_adjoint(const ArrayX<T>& grad) const;

  Eigen::VectorXd apply_linear(const StyleLatent& latent) const;
  StyleLatent apply_linear_adjoint(const Eigen::VectorXd& r) const;
  StyleLatent solve_direct(const Eigen::VectorXd& rhs) const;
  StyleLatent solve_iterative(const Eigen::VectorXd& rhs) const;

  struct DirectSolver;

  ToyGeneratorConfig config_;
  std::vector<int> sides_;
  std::vector<Eigen::ArrayXd> biases_;
  std::vector<Eigen::MatrixXd> maps_;
  mutable std::once_flag solver_once_;
  mutable std::unique_ptr<DirectSolver> solver_;
};

}  // namespace advface
