#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/image.hpp"
#include "advface/objectives.hpp"

namespace advface {

// Percentage of similarities strictly above the threshold.
double asr(std::span<const double> similarities, double threshold);

struct PsnrResult {
  double db = 0.0;
  bool identical = false;
};

inline constexpr double kPsnrCapDb = 100.0;

// 10 log10(1 / MSE) on [0, 1] images; identical images report the cap.
PsnrResult psnr(const FaceImage& x, const FaceImage& y);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean local SSIM over every fully contained Gaussian window, averaged over
// channels.
double ssim(const FaceImage& x, const FaceImage& y, const SsimConfig& cfg = {});

// Frechet distance between Gaussian fits of two feature sets (rows are samples).
double fid(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b);

// Closed-form Frechet distance between N(mu_a, cov_a) and N(mu_b, cov_b).
double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                        const Eigen::MatrixXd& cov_b);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual Eigen::VectorXd extract(const FaceImage& x) const = 0;
};

// Desk-scale default: statistics of a seeded random convolutional pyramid.
// Absolute values are not comparable with Inception-based FID.
class RandomConvFeatureExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvFeatureExtractor(std::uint64_t seed = 17);
  std::string name() const override { return "random-conv"; }
  Eigen::VectorXd extract(const FaceImage& x) const override;

 private:
  FeaturePyramidMetric pyramid_;
};

Eigen::MatrixXd extract_features(const FeatureExtractor& extractor, std::span<const FaceImage> images);

struct EvaluationReport {
  std::map<std::string, double> asr;  // percent, per model
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> fid;  // needs at least two samples per side
  int samples = 0;
};

// Aggregates per-pair similarities and image pairs (adversarial, source).
EvaluationReport evaluate(const std::map<std::string, std::vector<double>>& similarities,
                          const std::map<std::string, double>& thresholds,
                          std::span<const FaceImage> adversarial, std::span<const FaceImage> sources,
                          const FeatureExtractor* extractor);

}  // namespace advface
