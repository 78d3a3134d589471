#include "advface/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

void LossWeights::validate() const {
  if (!(guide >= 0.0) || !(perc >= 0.0) || !std::isfinite(guide) || !std::isfinite(perc)) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
}

namespace {

constexpr double kFeatureEps = 1e-8;

void check_same_resolution(const FaceImage& a, const FaceImage& b, const char* what) {
  if (a.resolution() != b.resolution()) {
    throw DimensionError(std::string(what) + ": resolutions " + to_string(a.resolution()) + " and " +
                         to_string(b.resolution()) + " differ");
  }
}

}  // namespace

FeaturePyramidMetric::FeaturePyramidMetric(FeaturePyramidConfig config) : config_(config) {
  if (config_.scales < 1 || config_.filters < 1) throw ValidationError("pyramid needs scales and filters");
  Rng rng(config_.seed);
  const double stddev = 2.0 / std::sqrt(9.0 * kChannels);
  weights_.resize(static_cast<std::size_t>(config_.filters) * 9 * kChannels);
  for (double& w : weights_) w = rng.normal(0.0, stddev);
  bias_.resize(config_.filters);
  for (double& b : bias_) b = rng.normal(0.0, 0.1);
}

int FeaturePyramidMetric::usable_scales(const FaceImage& x) const {
  int count = 0;
  for (int s = 0; s < config_.scales; ++s) {
    const int f = 1 << s;
    if (x.height % f != 0 || x.width % f != 0 || x.height / f < 3 || x.width / f < 3) break;
    ++count;
  }
  return count;
}

FeaturePyramidMetric::Features FeaturePyramidMetric::compute(const FaceImage& p) const {
  const int k_count = config_.filters;
  Features f;
  f.height = p.height;
  f.width = p.width;
  const std::size_t positions = static_cast<std::size_t>(p.height) * p.width;
  f.act.assign(positions * k_count, 0.0);
  f.norm.assign(positions, 0.0);
  f.unit.assign(positions * k_count, 0.0);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const std::size_t pos = static_cast<std::size_t>(y) * p.width + x;
      double sq = 0.0;
      for (int k = 0; k < k_count; ++k) {
        double pre = bias_[k];
        for (int dy = 0; dy < 3; ++dy) {
          const int yy = y + dy - 1;
          if (yy < 0 || yy >= p.height) continue;
          for (int dx = 0; dx < 3; ++dx) {
            const int xx = x + dx - 1;
            if (xx < 0 || xx >= p.width) continue;
            const double* w = &weights_[((k * 3 + dy) * 3 + dx) * kChannels];
            for (int c = 0; c < kChannels; ++c) pre += w[c] * (p.at(yy, xx, c) - 0.5);
          }
        }
        const double a = std::tanh(pre);
        f.act[pos * k_count + k] = a;
        sq += a * a;
      }
      const double n = std::sqrt(sq + kFeatureEps);
      f.norm[pos] = n;
      for (int k = 0; k < k_count; ++k) f.unit[pos * k_count + k] = f.act[pos * k_count + k] / n;
    }
  }
  return f;
}

FaceImage FeaturePyramidMetric::conv_adjoint(const std::vector<double>& grad_pre, int height, int width) const {
  const int k_count = config_.filters;
  FaceImage g(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t pos = static_cast<std::size_t>(y) * width + x;
      for (int k = 0; k < k_count; ++k) {
        const double gp = grad_pre[pos * k_count + k];
        if (gp == 0.0) continue;
        for (int dy = 0; dy < 3; ++dy) {
          const int yy = y + dy - 1;
          if (yy < 0 || yy >= height) continue;
          for (int dx = 0; dx < 3; ++dx) {
            const int xx = x + dx - 1;
            if (xx < 0 || xx >= width) continue;
            const double* w = &weights_[((k * 3 + dy) * 3 + dx) * kChannels];
            for (int c = 0; c < kChannels; ++c) g.at(yy, xx, c) += w[c] * gp;
          }
        }
      }
    }
  }
  return g;
}

double FeaturePyramidMetric::distance(const FaceImage& x, const FaceImage& y) const {
  check_same_resolution(x, y, "perceptual distance");
  const int scales = usable_scales(x);
  if (scales == 0) throw DimensionError("image too small for the perceptual pyramid");
  double total = 0.0;
  for (int s = 0; s < scales; ++s) {
    const FaceImage px = average_pool(x, 1 << s);
    const FaceImage py = average_pool(y, 1 << s);
    const Features fx = compute(px);
    const Features fy = compute(py);
    const double positions = static_cast<double>(px.height) * px.width;
    double feat = 0.0;
    for (std::size_t i = 0; i < fx.unit.size(); ++i) {
      const double d = fx.unit[i] - fy.unit[i];
      feat += d * d;
    }
    const double raw = (px.pixels - py.pixels).square().mean();
    total += feat / positions + raw;
  }
  return total / scales;
}

FaceImage FeaturePyramidMetric::distance_grad(const FaceImage& x, const FaceImage& y) const {
  check_same_resolution(x, y, "perceptual distance");
  const int scales = usable_scales(x);
  if (scales == 0) throw DimensionError("image too small for the perceptual pyramid");
  const int k_count = config_.filters;
  FaceImage grad(x.height, x.width);
  for (int s = 0; s < scales; ++s) {
    const int factor = 1 << s;
    const FaceImage px = average_pool(x, factor);
    const FaceImage py = average_pool(y, factor);
    const Features fx = compute(px);
    const Features fy = compute(py);
    const double positions = static_cast<double>(px.height) * px.width;
    std::vector<double> grad_pre(fx.act.size());
    for (std::size_t pos = 0; pos < fx.norm.size(); ++pos) {
      double dot = 0.0;
      const double n = fx.norm[pos];
      for (int k = 0; k < k_count; ++k) {
        const std::size_t i = pos * k_count + k;
        dot += 2.0 * (fx.unit[i] - fy.unit[i]) / positions * fx.act[i];
      }
      for (int k = 0; k < k_count; ++k) {
        const std::size_t i = pos * k_count + k;
        const double g_unit = 2.0 * (fx.unit[i] - fy.unit[i]) / positions;
        const double g_act = g_unit / n - fx.act[i] * dot / (n * n * n);
        grad_pre[i] = g_act * (1.0 - fx.act[i] * fx.act[i]);
      }
    }
    FaceImage g_pooled = conv_adjoint(grad_pre, px.height, px.width);
    g_pooled.pixels += 2.0 * (px.pixels - py.pixels) / static_cast<double>(px.pixels.size());
    grad.pixels += average_pool_adjoint(g_pooled, factor).pixels;
  }
  grad.pixels /= scales;
  return grad;
}

Eigen::VectorXd FeaturePyramidMetric::pooled_features(const FaceImage& x) const {
  const int scales = usable_scales(x);
  const int k_count = config_.filters;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * k_count * config_.scales);
  for (int s = 0; s < scales; ++s) {
    const Features f = compute(average_pool(x, 1 << s));
    const double positions = static_cast<double>(f.norm.size());
    for (int k = 0; k < k_count; ++k) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t pos = 0; pos < f.norm.size(); ++pos) {
        const double u = f.unit[pos * k_count + k];
        sum += u;
        sq += u * u;
      }
      const double mean = sum / positions;
      out[(s * k_count + k) * 2] = mean;
      out[(s * k_count + k) * 2 + 1] = std::sqrt(std::max(0.0, sq / positions - mean * mean));
    }
  }
  return out;
}

ProjectionImageScorer::ProjectionImageScorer(int dim, std::uint64_t seed, Resolution input, int pool)
    : dim_(dim), input_(input), pool_(pool) {
  if (dim < 1 || pool < 1 || input.height % pool != 0 || input.width % pool != 0) {
    throw ValidationError("invalid image-text scorer configuration");
  }
  const Eigen::Index in = static_cast<Eigen::Index>(input.pixels() / (pool * pool)) * kChannels;
  Rng rng(seed);
  projection_.resize(dim, in);
  const double stddev = 2.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = rng.normal(0.0, stddev);
}

void ProjectionImageScorer::check_input(const FaceImage& x) const {
  if (x.resolution() != input_) {
    throw DimensionError("image-text scorer expects " + to_string(input_) + ", got " + to_string(x.resolution()));
  }
}

Eigen::VectorXd ProjectionImageScorer::embed(const FaceImage& x) const {
  check_input(x);
  const Eigen::VectorXd p = (average_pool(x, pool_).pixels - 0.5).matrix();
  return (projection_ * p).array().tanh().matrix();
}

FaceImage ProjectionImageScorer::embed_vjp(const FaceImage& x, const Eigen::VectorXd& grad) const {
  check_input(x);
  const FaceImage pooled = average_pool(x, pool_);
  const Eigen::VectorXd a = (projection_ * (pooled.pixels - 0.5).matrix()).array().tanh().matrix();
  const Eigen::VectorXd gh = grad.cwiseProduct((1.0 - a.array().square()).matrix());
  FaceImage g(pooled.height, pooled.width, (projection_.transpose() * gh).array());
  return average_pool_adjoint(g, pool_);
}

template <class T>
T similarity_loss(const VectorX<T>& a, const Eigen::VectorXd& b, SignConvention sign) {
  if (a.size() != b.size()) throw DimensionError("similarity loss: dimension mismatch");
  using std::sqrt;
  const T cos = a.dot(b) / (sqrt(a.squaredNorm()) * b.norm());
  return sign == SignConvention::Impersonation ? T(1.0) - cos : cos;
}

template <class T>
VectorX<T> similarity_loss_grad(const VectorX<T>& a, const Eigen::VectorXd& b, SignConvention sign) {
  if (a.size() != b.size()) throw DimensionError("similarity loss: dimension mismatch");
  using std::sqrt;
  const T na = sqrt(a.squaredNorm());
  const double nb = b.norm();
  const T cos = a.dot(b) / (na * nb);
  // d cos / d a = b / (|a||b|) - cos a / |a|^2
  VectorX<T> g = b.cast<T>() / (na * nb) - a * (cos / (na * na));
  if (sign == SignConvention::Impersonation) g = -g;
  return g;
}

template double similarity_loss(const VectorX<double>&, const Eigen::VectorXd&, SignConvention);
template Dual similarity_loss(const VectorX<Dual>&, const Eigen::VectorXd&, SignConvention);
template VectorX<double> similarity_loss_grad(const VectorX<double>&, const Eigen::VectorXd&, SignConvention);
template VectorX<Dual> similarity_loss_grad(const VectorX<Dual>&, const Eigen::VectorXd&, SignConvention);

double guide_loss(const FaceImage& x, const TextEmbedding& text, const ImageTextScorer& scorer,
                  SignConvention sign) {
  if (scorer.dim() != text.values.size()) throw DimensionError("scorer and text embedding dimensions differ");
  return similarity_loss<double>(scorer.embed(x), text.values, sign);
}

LossGrad guide_loss_grad(const FaceImage& x, const TextEmbedding& text, const ImageTextScorer& scorer,
                         SignConvention sign) {
  if (scorer.dim() != text.values.size()) throw DimensionError("scorer and text embedding dimensions differ");
  const Eigen::VectorXd u = scorer.embed(x);
  return {similarity_loss<double>(u, text.values, sign),
          scorer.embed_vjp(x, similarity_loss_grad<double>(u, text.values, sign))};
}

double perceptual_loss(const FaceImage& x, const FaceImage& source, const PerceptualMetric& metric) {
  check_same_resolution(x, source, "perceptual_loss");
  return metric.distance(x, source);
}

LossGrad perceptual_loss_grad(const FaceImage& x, const FaceImage& source, const PerceptualMetric& metric) {
  check_same_resolution(x, source, "perceptual_loss");
  return {metric.distance(x, source), metric.distance_grad(x, source)};
}

double adversarial_loss(const FaceImage& x, const FaceImage& target, const FrModel& model, SignConvention sign) {
  return adversarial_loss(x, embed(model, target), model, sign);
}

double adversarial_loss(const FaceImage& x, const EmbeddingVector& target, const FrModel& model,
                        SignConvention sign) {
  check_model_input(model, x);
  return similarity_loss<double>(model.embed(x), target.values(), sign);
}

LossGrad adversarial_loss_grad(const FaceImage& x, const EmbeddingVector& target, const FrModel& model,
                               SignConvention sign) {
  check_model_input(model, x);
  const Eigen::VectorXd e = model.embed(x);
  return {similarity_loss<double>(e, target.values(), sign),
          model.embed_vjp(x, similarity_loss_grad<double>(e, target.values(), sign))};
}

double total_loss(double guide, double perc, double adv, const LossWeights& weights) {
  if (!std::isfinite(guide) || !std::isfinite(perc) || !std::isfinite(adv)) {
    throw ValidationError("total_loss: non-finite component");
  }
  weights.validate();
  return weights.guide * guide + weights.perc * perc + adv;
}

}  // namespace advface
