#include "advface/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "advface/errors.hpp"

namespace advface {

double asr(std::span<const double> similarities, double threshold) {
  if (similarities.empty()) throw ValidationError("asr: no similarities");
  std::size_t hits = 0;
  for (double s : similarities) hits += s > threshold ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(similarities.size());
}

namespace {

void check_pair(const FaceImage& x, const FaceImage& y, const char* what) {
  if (x.resolution() != y.resolution() || x.pixels.size() != y.pixels.size()) {
    throw DimensionError(std::string(what) + ": shapes " + to_string(x.resolution()) + " and " +
                         to_string(y.resolution()) + " differ");
  }
}

Eigen::MatrixXd channel(const FaceImage& x, int c) {
  Eigen::MatrixXd m(x.height, x.width);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) m(y, xx) = x.at(y, xx, c);
  }
  return m;
}

// Valid-mode separable filtering.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& m, const Eigen::VectorXd& k) {
  const Eigen::Index w = k.size();
  Eigen::MatrixXd rows(m.rows() - w + 1, m.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) = k.transpose() * m.middleRows(i, w);
  Eigen::MatrixXd out(rows.rows(), m.cols() - w + 1);
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = rows.middleCols(j, w) * k;
  return out;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& samples, Eigen::VectorXd& mean) {
  mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

PsnrResult psnr(const FaceImage& x, const FaceImage& y) {
  check_pair(x, y, "psnr");
  const double mse = (x.pixels - y.pixels).square().mean();
  if (mse == 0.0) return {kPsnrCapDb, true};
  return {std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse)), false};
}

double ssim(const FaceImage& x, const FaceImage& y, const SsimConfig& cfg) {
  check_pair(x, y, "ssim");
  if (x.height < cfg.window || x.width < cfg.window) {
    throw DimensionError("ssim: image " + to_string(x.resolution()) + " is smaller than the " +
                         std::to_string(cfg.window) + "-pixel window");
  }
  Eigen::VectorXd k(cfg.window);
  const double centre = (cfg.window - 1) / 2.0;
  for (int i = 0; i < cfg.window; ++i) {
    const double d = i - centre;
    k[i] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
  }
  k /= k.sum();
  const double c1 = std::pow(cfg.k1 * cfg.data_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.data_range, 2);

  double total = 0.0;
  for (int c = 0; c < kChannels; ++c) {
    const Eigen::MatrixXd a = channel(x, c);
    const Eigen::MatrixXd b = channel(y, c);
    const Eigen::ArrayXXd mu_a = filter_valid(a, k).array();
    const Eigen::ArrayXXd mu_b = filter_valid(b, k).array();
    const Eigen::ArrayXXd var_a = filter_valid(a.cwiseProduct(a), k).array() - mu_a.square();
    const Eigen::ArrayXXd var_b = filter_valid(b.cwiseProduct(b), k).array() - mu_b.square();
    const Eigen::ArrayXXd cov = filter_valid(a.cwiseProduct(b), k).array() - mu_a * mu_b;
    const Eigen::ArrayXXd map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                                ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
    total += map.mean();
  }
  return total / kChannels;
}

double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                        const Eigen::MatrixXd& cov_b) {
  if (mu_a.size() != mu_b.size() || cov_a.rows() != mu_a.size() || cov_b.rows() != mu_b.size()) {
    throw DimensionError("frechet_distance: dimension mismatch");
  }
  // Tr((A B)^{1/2}) = Tr((A^{1/2} B A^{1/2})^{1/2}), the inner matrix is PSD.
  const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
  const Eigen::MatrixXd inner = root_a * cov_b * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

double fid(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b) {
  if (features_a.rows() < 2 || features_b.rows() < 2) throw ValidationError("fid: need at least two samples per set");
  if (features_a.cols() != features_b.cols()) throw DimensionError("fid: feature dimensions differ");
  Eigen::VectorXd mu_a, mu_b;
  const Eigen::MatrixXd cov_a = covariance(features_a, mu_a);
  const Eigen::MatrixXd cov_b = covariance(features_b, mu_b);
  return frechet_distance(mu_a, cov_a, mu_b, cov_b);
}

RandomConvFeatureExtractor::RandomConvFeatureExtractor(std::uint64_t seed)
    : pyramid_(FeaturePyramidConfig{seed, 3, 8}) {}

Eigen::VectorXd RandomConvFeatureExtractor::extract(const FaceImage& x) const { return pyramid_.pooled_features(x); }

Eigen::MatrixXd extract_features(const FeatureExtractor& extractor, std::span<const FaceImage> images) {
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Eigen::VectorXd f = extractor.extract(images[i]);
    if (i == 0) out.resize(static_cast<Eigen::Index>(images.size()), f.size());
    if (f.size() != out.cols()) throw DimensionError("feature extractor returned varying dimensions");
    out.row(static_cast<Eigen::Index>(i)) = f.transpose();
  }
  return out;
}

EvaluationReport evaluate(const std::map<std::string, std::vector<double>>& similarities,
                          const std::map<std::string, double>& thresholds,
                          std::span<const FaceImage> adversarial, std::span<const FaceImage> sources,
                          const FeatureExtractor* extractor) {
  if (adversarial.size() != sources.size()) throw DimensionError("evaluate: image lists differ in length");
  if (adversarial.empty()) throw ValidationError("evaluate: no samples");
  EvaluationReport report;
  report.samples = static_cast<int>(adversarial.size());
  for (const auto& [model, sims] : similarities) {
    auto it = thresholds.find(model);
    if (it == thresholds.end()) throw ValidationError("evaluate: no threshold for " + model);
    report.asr[model] = asr(sims, it->second);
  }
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < adversarial.size(); ++i) {
    psnr_sum += psnr(adversarial[i], sources[i]).db;
    ssim_sum += ssim(adversarial[i], sources[i]);
  }
  report.mean_psnr = psnr_sum / adversarial.size();
  report.mean_ssim = ssim_sum / adversarial.size();
  if (extractor && adversarial.size() >= 2) {
    report.fid = fid(extract_features(*extractor, adversarial), extract_features(*extractor, sources));
  }
  return report;
}

}  // namespace advface
