#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "advface/dual.hpp"
#include "advface/image.hpp"

namespace advface {

// Unit-norm face embedding.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(Eigen::VectorXd values);
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::Index dim() const { return values_.size(); }

 private:
  Eigen::VectorXd values_;
};

// Identity-class probabilities; non-negative and summing to one.
class SoftmaxVector {
 public:
  explicit SoftmaxVector(Eigen::VectorXd probs);
  const Eigen::VectorXd& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }

 private:
  Eigen::VectorXd probs_;
};

class FrModel {
 public:
  virtual ~FrModel() = default;

  virtual std::string name() const = 0;
  virtual Resolution input_resolution() const = 0;
  virtual int embedding_dim() const = 0;
  virtual int class_count() const = 0;

  // Unit-norm embedding and its pullback to pixels.
  virtual VectorX<double> embed(const Image<double>& x) const = 0;
  virtual Image<double> embed_vjp(const Image<double>& x, const VectorX<double>& grad) const = 0;
  virtual VectorX<Dual> embed(const Image<Dual>& x) const;
  virtual Image<Dual> embed_vjp(const Image<Dual>& x, const VectorX<Dual>& grad) const;

  virtual Eigen::VectorXd classify(const Image<double>& x) const = 0;
  virtual Image<double> classify_vjp(const Image<double>& x, const Eigen::VectorXd& grad) const = 0;
};

void check_model_input(const FrModel& model, const FaceImage& x);

// Checked wrappers returning validated value types.
EmbeddingVector embed(const FrModel& model, const FaceImage& x);
SoftmaxVector classify(const FrModel& model, const FaceImage& x);

struct ToyFrConfig {
  std::string name = "toy";
  std::uint64_t seed = 1;
  // Weights are sqrt(s) * shared + sqrt(1 - s) * own, so models built from the
  // same shared_seed agree partially, as independently trained recognisers do.
  std::uint64_t shared_seed = 0x5eed;
  double shared_fraction = 0.6;
  Resolution input{32, 32};
  int pool = 2;
  int hidden = 128;
  int dim = 64;
  int classes = 16;
  double logit_scale = 10.0;
};

// Pool -> affine -> tanh -> linear -> L2 normalise; softmax head is a scaled
// cosine against unit class prototypes.
class ToyFrModel final : public FrModel {
 public:
  explicit ToyFrModel(ToyFrConfig config);

  std::string name() const override { return config_.name; }
  Resolution input_resolution() const override { return config_.input; }
  int embedding_dim() const override { return config_.dim; }
  int class_count() const override { return config_.classes; }

  VectorX<double> embed(const Image<double>& x) const override;
  Image<double> embed_vjp(const Image<double>& x, const VectorX<double>& grad) const override;
  VectorX<Dual> embed(const Image<Dual>& x) const override;
  Image<Dual> embed_vjp(const Image<Dual>& x, const VectorX<Dual>& grad) const override;

  Eigen::VectorXd classify(const Image<double>& x) const override;
  Image<double> classify_vjp(const Image<double>& x, const Eigen::VectorXd& grad) const override;

  const ToyFrConfig& config() const { return config_; }

 private:
  template <class T>
  VectorX<T> embed_impl(const Image<T>& x) const;
  template <class T>
  Image<T> embed_vjp_impl(const Image<T>& x, const VectorX<T>& grad) const;

  ToyFrConfig config_;
  Eigen::MatrixXd w1_;
  Eigen::VectorXd b1_;
  Eigen::MatrixXd w2_;
  Eigen::MatrixXd prototypes_;
};

// The four stand-ins for the recognisers the threshold table names.
std::vector<ToyFrConfig> default_toy_fr_configs();

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Smallest observed score s with (#scores > s) / n <= far.
double calibrate_threshold(std::span<const double> impostor_scores, double far = 0.01);

// Accept iff cos(embed(a), embed(b)) > threshold.
bool verify(const FrModel& model, const FaceImage& a, const FaceImage& b, double threshold);

class ThresholdTable {
 public:
  ThresholdTable() = default;
  explicit ThresholdTable(std::map<std::string, double> values);

  // Thresholds at FAR 0.01 for MobileFace, IRSE50, IR152 and FaceNet.
  static ThresholdTable defaults();

  double at(const std::string& model) const;
  bool contains(const std::string& model) const { return values_.contains(model); }
  void set(const std::string& model, double threshold);
  const std::map<std::string, double>& values() const { return values_; }

  static ThresholdTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, double> values_;
};

}  // namespace advface
