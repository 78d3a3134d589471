#include "advface/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

EmbeddingVector::EmbeddingVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (!values_.allFinite()) throw ValidationError("embedding contains a non-finite value");
  if (std::abs(values_.norm() - 1.0) > 1e-6) throw ValidationError("embedding is not unit norm");
}

SoftmaxVector::SoftmaxVector(Eigen::VectorXd probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw ValidationError("softmax vector is empty");
  if (!probs_.allFinite() || (probs_.array() < 0.0).any()) {
    throw ValidationError("softmax vector has a negative or non-finite entry");
  }
  if (std::abs(probs_.sum() - 1.0) > 1e-6) throw ValidationError("softmax vector does not sum to 1");
}

VectorX<Dual> FrModel::embed(const Image<Dual>&) const {
  throw UnsupportedError(name() + " does not support forward-mode embedding");
}

Image<Dual> FrModel::embed_vjp(const Image<Dual>&, const VectorX<Dual>&) const {
  throw UnsupportedError(name() + " does not support forward-mode embedding");
}

void check_model_input(const FrModel& model, const FaceImage& x) {
  if (x.resolution() != model.input_resolution()) {
    throw DimensionError(model.name() + " expects " + to_string(model.input_resolution()) +
                         " input, got " + to_string(x.resolution()));
  }
}

EmbeddingVector embed(const FrModel& model, const FaceImage& x) {
  check_model_input(model, x);
  return EmbeddingVector(model.embed(x));
}

SoftmaxVector classify(const FrModel& model, const FaceImage& x) {
  check_model_input(model, x);
  return SoftmaxVector(model.classify(x));
}

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

Eigen::MatrixXd blend(const Eigen::MatrixXd& shared, const Eigen::MatrixXd& own, double fraction) {
  return std::sqrt(fraction) * shared + std::sqrt(1.0 - fraction) * own;
}

template <class T>
VectorX<T> flatten_centered(const Image<T>& pooled) {
  VectorX<T> v(pooled.pixels.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = pooled.pixels[i] - 0.5;
  return v;
}

}  // namespace

ToyFrModel::ToyFrModel(ToyFrConfig config) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.pool < 1 || c.input.height % c.pool != 0 || c.input.width % c.pool != 0) {
    throw ValidationError("toy recogniser pool factor must divide the input resolution");
  }
  if (c.hidden < 1 || c.dim < 1 || c.classes < 1) throw ValidationError("toy recogniser sizes must be positive");
  if (c.shared_fraction < 0.0 || c.shared_fraction > 1.0) {
    throw ValidationError("shared_fraction must lie in [0, 1]");
  }
  const Eigen::Index in = static_cast<Eigen::Index>(c.input.pixels() / (c.pool * c.pool)) * kChannels;
  Rng shared(c.shared_seed);
  Rng own(c.seed);
  const double s1 = 2.0 / std::sqrt(static_cast<double>(in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(c.hidden));
  w1_ = blend(gaussian(shared, c.hidden, in, s1), gaussian(own, c.hidden, in, s1), c.shared_fraction);
  b1_ = blend(gaussian(shared, c.hidden, 1, 0.1), gaussian(own, c.hidden, 1, 0.1), c.shared_fraction);
  w2_ = blend(gaussian(shared, c.dim, c.hidden, s2), gaussian(own, c.dim, c.hidden, s2), c.shared_fraction);
  prototypes_ = blend(gaussian(shared, c.classes, c.dim, 1.0), gaussian(own, c.classes, c.dim, 1.0),
                      c.shared_fraction);
  prototypes_.rowwise().normalize();
}

template <class T>
VectorX<T> ToyFrModel::embed_impl(const Image<T>& x) const {
  const VectorX<T> p = flatten_centered(average_pool(x, config_.pool));
  const VectorX<T> a = ((w1_ * p + b1_).array().tanh()).matrix();
  const VectorX<T> r = w2_ * a;
  using std::sqrt;
  return r / sqrt(r.squaredNorm());
}

template <class T>
Image<T> ToyFrModel::embed_vjp_impl(const Image<T>& x, const VectorX<T>& grad) const {
  const Image<T> pooled = average_pool(x, config_.pool);
  const VectorX<T> p = flatten_centered(pooled);
  const VectorX<T> a = ((w1_ * p + b1_).array().tanh()).matrix();
  const VectorX<T> r = w2_ * a;
  using std::sqrt;
  const T norm = sqrt(r.squaredNorm());
  const VectorX<T> e = r / norm;
  // d(r/|r|) = (I - e e^T) / |r|
  const VectorX<T> gr = (grad - e * e.dot(grad)) / norm;
  const VectorX<T> ga = w2_.transpose() * gr;
  const VectorX<T> gh = (ga.array() * (T(1.0) - a.array() * a.array())).matrix();
  const VectorX<T> gp = w1_.transpose() * gh;
  Image<T> gpool(pooled.height, pooled.width, gp.array());
  return average_pool_adjoint(gpool, config_.pool);
}

VectorX<double> ToyFrModel::embed(const Image<double>& x) const { return embed_impl(x); }
Image<double> ToyFrModel::embed_vjp(const Image<double>& x, const VectorX<double>& grad) const {
  return embed_vjp_impl(x, grad);
}
VectorX<Dual> ToyFrModel::embed(const Image<Dual>& x) const { return embed_impl(x); }
Image<Dual> ToyFrModel::embed_vjp(const Image<Dual>& x, const VectorX<Dual>& grad) const {
  return embed_vjp_impl(x, grad);
}

Eigen::VectorXd ToyFrModel::classify(const Image<double>& x) const {
  const Eigen::VectorXd logits = config_.logit_scale * (prototypes_ * embed_impl(x));
  const Eigen::ArrayXd ex = (logits.array() - logits.maxCoeff()).exp();
  return (ex / ex.sum()).matrix();
}

Image<double> ToyFrModel::classify_vjp(const Image<double>& x, const Eigen::VectorXd& grad) const {
  const Eigen::VectorXd probs = classify(x);
  // softmax Jacobian: diag(p) - p p^T
  const Eigen::VectorXd glogits = probs.cwiseProduct(grad) - probs * probs.dot(grad);
  const Eigen::VectorXd gembed = config_.logit_scale * (prototypes_.transpose() * glogits);
  return embed_vjp_impl(x, gembed);
}

std::vector<ToyFrConfig> default_toy_fr_configs() {
  std::vector<ToyFrConfig> configs;
  const char* names[] = {"MobileFace", "IRSE50", "IR152", "FaceNet"};
  for (int i = 0; i < 4; ++i) {
    ToyFrConfig c;
    c.name = names[i];
    c.seed = 101 + static_cast<std::uint64_t>(i);
    configs.push_back(c);
  }
  return configs;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: dimensions " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  const double denom = a.norm() * b.norm();
  if (denom == 0.0) throw ValidationError("cosine_similarity: zero vector");
  return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values(), b.values());
}

double calibrate_threshold(std::span<const double> impostor_scores, double far) {
  if (impostor_scores.empty()) throw ValidationError("calibrate_threshold: no impostor scores");
  if (!(far > 0.0 && far < 1.0)) throw ValidationError("calibrate_threshold: far must lie in (0, 1)");
  std::vector<double> sorted(impostor_scores.begin(), impostor_scores.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) throw ValidationError("calibrate_threshold: non-finite score");
  }
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (auto it = sorted.begin(); it != sorted.end(); it = std::upper_bound(it, sorted.end(), *it)) {
    const auto above = sorted.end() - std::upper_bound(it, sorted.end(), *it);
    if (static_cast<double>(above) / n <= far) return *it;
  }
  return sorted.back();
}

bool verify(const FrModel& model, const FaceImage& a, const FaceImage& b, double threshold) {
  return cosine_similarity(embed(model, a), embed(model, b)) > threshold;
}

ThresholdTable::ThresholdTable(std::map<std::string, double> values) {
  for (const auto& [name, tau] : values) set(name, tau);
}

ThresholdTable ThresholdTable::defaults() {
  return ThresholdTable({{"MobileFace", 0.302}, {"IRSE50", 0.241}, {"IR152", 0.167}, {"FaceNet", 0.409}});
}

double ThresholdTable::at(const std::string& model) const {
  auto it = values_.find(model);
  if (it == values_.end()) throw ValidationError("no threshold for model " + model);
  return it->second;
}

void ThresholdTable::set(const std::string& model, double threshold) {
  if (!(threshold > -1.0 && threshold < 1.0)) {
    throw ValidationError("threshold for " + model + " must lie in (-1, 1)");
  }
  values_[model] = threshold;
}

ThresholdTable ThresholdTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open threshold table " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    ThresholdTable table;
    for (const auto& [name, tau] : j.at("thresholds").items()) table.set(name, tau.get<double>());
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed threshold table " + path.string() + ": " + e.what());
  }
}

void ThresholdTable::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["thresholds"] = values_;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write threshold table " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace advface
