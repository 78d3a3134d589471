#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "advface/dual.hpp"
#include "advface/fusion.hpp"
#include "advface/image.hpp"
#include "advface/recognition.hpp"

namespace advface {

struct LossWeights {
  double guide = 0.5;
  double perc = 0.05;
  void validate() const;
};

// Impersonation minimises 1 - cos for both the text and identity terms.
// Literal minimises the bare cosine, which pushes similarity down; it exists
// for experiments only.
enum class SignConvention { Impersonation, Literal };

class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double distance(const FaceImage& x, const FaceImage& y) const = 0;
  // Gradient of distance(x, y) with respect to x.
  virtual FaceImage distance_grad(const FaceImage& x, const FaceImage& y) const = 0;
};

struct FeaturePyramidConfig {
  std::uint64_t seed = 11;
  int scales = 3;
  int filters = 8;
};

// LPIPS-shaped distance over a fixed random convolutional pyramid. At each
// scale: 3x3 convolution + tanh, features unit-normalised per position, mean
// squared difference over positions, plus the mean squared pixel difference
// at that scale. Averaged over scales.
class FeaturePyramidMetric final : public PerceptualMetric {
 public:
  explicit FeaturePyramidMetric(FeaturePyramidConfig config = {});
  std::string name() const override { return "feature-pyramid"; }
  double distance(const FaceImage& x, const FaceImage& y) const override;
  FaceImage distance_grad(const FaceImage& x, const FaceImage& y) const override;

  // Per scale and filter: mean and standard deviation over positions of the
  // normalised features. Fixed length 2 * filters * scales.
  Eigen::VectorXd pooled_features(const FaceImage& x) const;

 private:
  struct Features {
    std::vector<double> act;   // tanh activations, HWK
    std::vector<double> norm;  // per-position feature norm
    std::vector<double> unit;  // normalised activations
    int height = 0;
    int width = 0;
  };
  Features compute(const FaceImage& pooled) const;
  FaceImage conv_adjoint(const std::vector<double>& grad_pre, int height, int width) const;
  int usable_scales(const FaceImage& x) const;

  FeaturePyramidConfig config_;
  std::vector<double> weights_;  // [k][dy][dx][c]
  std::vector<double> bias_;
};

// Image tower of a vision-language model: maps an image into the text
// embedding space.
class ImageTextScorer {
 public:
  virtual ~ImageTextScorer() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd embed(const FaceImage& x) const = 0;
  virtual FaceImage embed_vjp(const FaceImage& x, const Eigen::VectorXd& grad) const = 0;
};

// Pooled pixels -> random projection -> tanh.
class ProjectionImageScorer final : public ImageTextScorer {
 public:
  explicit ProjectionImageScorer(int dim = 64, std::uint64_t seed = 13, Resolution input = {32, 32},
                                 int pool = 4);
  int dim() const override { return dim_; }
  Eigen::VectorXd embed(const FaceImage& x) const override;
  FaceImage embed_vjp(const FaceImage& x, const Eigen::VectorXd& grad) const override;

 private:
  void check_input(const FaceImage& x) const;
  int dim_;
  Resolution input_;
  int pool_;
  Eigen::MatrixXd projection_;
};

struct LossGrad {
  double value = 0.0;
  FaceImage grad;
};

// Cosine-based loss and its gradient with respect to the first vector.
// Impersonation: 1 - cos(a, b); Literal: cos(a, b).
template <class T>
T similarity_loss(const VectorX<T>& a, const Eigen::VectorXd& b, SignConvention sign);
template <class T>
VectorX<T> similarity_loss_grad(const VectorX<T>& a, const Eigen::VectorXd& b, SignConvention sign);

double guide_loss(const FaceImage& x, const TextEmbedding& text, const ImageTextScorer& scorer,
                  SignConvention sign = SignConvention::Impersonation);
LossGrad guide_loss_grad(const FaceImage& x, const TextEmbedding& text, const ImageTextScorer& scorer,
                         SignConvention sign = SignConvention::Impersonation);

double perceptual_loss(const FaceImage& x, const FaceImage& source, const PerceptualMetric& metric);
LossGrad perceptual_loss_grad(const FaceImage& x, const FaceImage& source, const PerceptualMetric& metric);

double adversarial_loss(const FaceImage& x, const FaceImage& target, const FrModel& model,
                        SignConvention sign = SignConvention::Impersonation);
double adversarial_loss(const FaceImage& x, const EmbeddingVector& target, const FrModel& model,
                        SignConvention sign = SignConvention::Impersonation);
LossGrad adversarial_loss_grad(const FaceImage& x, const EmbeddingVector& target, const FrModel& model,
                               SignConvention sign = SignConvention::Impersonation);

double total_loss(double guide, double perc, double adv, const LossWeights& weights);

}  // namespace advface
