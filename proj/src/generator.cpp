#include "advface/generator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {
namespace {

template <class T>
ArrayX<T> upsample_nearest(const ArrayX<T>& grid, int side, int factor) {
  if (factor == 1) return grid;
  const int out_side = side * factor;
  ArrayX<T> out(static_cast<Eigen::Index>(out_side) * out_side * kChannels);
  for (int y = 0; y < out_side; ++y) {
    for (int x = 0; x < out_side; ++x) {
      for (int c = 0; c < kChannels; ++c) {
        out[(y * out_side + x) * kChannels + c] =
            grid[((y / factor) * side + x / factor) * kChannels + c];
      }
    }
  }
  return out;
}

// Adjoint of upsample_nearest: block sums.
template <class T>
ArrayX<T> upsample_adjoint(const ArrayX<T>& grad, int side, int factor) {
  if (factor == 1) return grad;
  const int out_side = side * factor;
  ArrayX<T> out = ArrayX<T>::Zero(static_cast<Eigen::Index>(side) * side * kChannels);
  for (int y = 0; y < out_side; ++y) {
    for (int x = 0; x < out_side; ++x) {
      for (int c = 0; c < kChannels; ++c) {
        out[((y / factor) * side + x / factor) * kChannels + c] +=
            grad[(y * out_side + x) * kChannels + c];
      }
    }
  }
  return out;
}

template <class T>
T sigmoid(const T& x) {
  using std::exp;
  return T(1.0) / (T(1.0) + exp(-x));
}

}  // namespace

Image<Dual> GeneratorHandle::synthesize(const LatentCodes<Dual>&, const NoiseStack&) const {
  throw UnsupportedError(name() + " does not support forward-mode synthesis");
}

LatentCodes<Dual> GeneratorHandle::synthesize_vjp(const LatentCodes<Dual>&, const NoiseStack&,
                                                  const Image<Dual>&) const {
  throw UnsupportedError(name() + " does not support forward-mode synthesis");
}

NoiseStack GeneratorHandle::zero_noise() const {
  NoiseStack noise;
  for (Eigen::Index n : noise_sizes()) noise.layers.push_back(Eigen::ArrayXd::Zero(n));
  return noise;
}

void check_latent(const GeneratorHandle& g, const StyleLatent& latent) {
  if (latent.rows() != g.layer_count()) {
    throw DimensionError("latent has " + std::to_string(latent.rows()) + " rows, generator has " +
                         std::to_string(g.layer_count()) + " layers");
  }
  if (!latent.allFinite()) throw ValidationError("latent contains a non-finite value");
}

void check_noise(const GeneratorHandle& g, const NoiseStack& noise) {
  const auto sizes = g.noise_sizes();
  if (noise.layers.size() != sizes.size()) {
    throw DimensionError("noise stack has " + std::to_string(noise.layers.size()) +
                         " layers, generator expects " + std::to_string(sizes.size()));
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (noise.layers[i].size() != sizes[i]) {
      throw DimensionError("noise layer " + std::to_string(i) + " has " +
                           std::to_string(noise.layers[i].size()) + " values, expected " +
                           std::to_string(sizes[i]));
    }
    if (!noise.layers[i].allFinite()) throw ValidationError("noise contains a non-finite value");
  }
}

FaceImage synthesize(const GeneratorHandle& g, const StyleLatent& latent, const NoiseStack& noise) {
  check_latent(g, latent);
  check_noise(g, noise);
  return g.synthesize(latent, noise);
}

Inversion invert(const GeneratorHandle& g, const FaceImage& image) {
  if (image.resolution() != g.output_resolution()) {
    throw DimensionError("image " + to_string(image.resolution()) + " does not match generator output " +
                         to_string(g.output_resolution()));
  }
  validate_face_image(image);
  return g.invert(image);
}

struct ToyGenerator::DirectSolver {
  Eigen::MatrixXd design;  // columns: image-space response of each latent entry
  Eigen::LLT<Eigen::MatrixXd> normal;
};

ToyGenerator::ToyGenerator(ToyGeneratorConfig config) : config_(std::move(config)), sides_(config_.layer_sides) {
  if (sides_.empty()) throw ValidationError("toy generator needs at least one layer");
  for (std::size_t m = 0; m < sides_.size(); ++m) {
    if (sides_[m] < 1) throw ValidationError("layer side must be positive");
    if (m > 0 && sides_[m] % sides_[m - 1] != 0) {
      throw ValidationError("each layer side must divide the next");
    }
  }
  if (sides_.back() < 8) throw ValidationError("output side must be at least 8");
  // The normal equations need full column rank.
  const auto pixels = static_cast<std::size_t>(sides_.back()) * sides_.back() * kChannels;
  if (config_.inverter == ToyGeneratorConfig::Inverter::Direct && pixels < sides_.size() * kStyleDim) {
    throw ValidationError("direct inversion needs at least " + std::to_string(sides_.size() * kStyleDim) +
                          " output values, got " + std::to_string(pixels) + "; use the iterative inverter");
  }

  Rng rng(config_.seed);
  const double weight_std = config_.latent_gain / std::sqrt(static_cast<double>(kStyleDim) * sides_.size());
  for (int side : sides_) {
    const Eigen::Index n = static_cast<Eigen::Index>(side) * side * kChannels;
    Eigen::ArrayXd bias(n);
    for (Eigen::Index i = 0; i < n; ++i) bias[i] = rng.normal(0.0, config_.bias_scale);
    Eigen::MatrixXd map(n, kStyleDim);
    for (Eigen::Index i = 0; i < map.size(); ++i) map.data()[i] = rng.normal(0.0, weight_std);
    biases_.push_back(std::move(bias));
    maps_.push_back(std::move(map));
  }
}

ToyGenerator::~ToyGenerator() = default;

std::vector<Eigen::Index> ToyGenerator::noise_sizes() const {
  std::vector<Eigen::Index> sizes;
  for (int side : sides_) sizes.push_back(static_cast<Eigen::Index>(side) * side * kChannels);
  return sizes;
}

template <class T>
ArrayX<T> ToyGenerator::preactivation(const LatentCodes<T>& latent, const NoiseStack& noise) const {
  ArrayX<T> h;
  for (std::size_t m = 0; m < sides_.size(); ++m) {
    VectorX<T> styled = maps_[m] * latent.row(static_cast<Eigen::Index>(m)).transpose();
    ArrayX<T> layer = styled.array() + biases_[m] + noise.layers[m];
    if (m == 0) {
      h = std::move(layer);
    } else {
      h = upsample_nearest<T>(h, sides_[m - 1], sides_[m] / sides_[m - 1]) + layer;
    }
  }
  return h;
}

template <class T>
LatentCodes<T> ToyGenerator::preactivation_adjoint(const ArrayX<T>& grad) const {
  LatentCodes<T> out(layer_count(), kStyleDim);
  ArrayX<T> g = grad;
  for (std::size_t m = sides_.size(); m-- > 0;) {
    out.row(static_cast<Eigen::Index>(m)) = (maps_[m].transpose() * g.matrix()).transpose();
    if (m > 0) g = upsample_adjoint<T>(g, sides_[m - 1], sides_[m] / sides_[m - 1]);
  }
  return out;
}

Image<double> ToyGenerator::synthesize(const LatentCodes<double>& latent, const NoiseStack& noise) const {
  const int side = sides_.back();
  return Image<double>(side, side, preactivation(latent, noise).unaryExpr([](double v) { return sigmoid(v); }));
}

LatentCodes<double> ToyGenerator::synthesize_vjp(const LatentCodes<double>& latent, const NoiseStack& noise,
                                                 const Image<double>& grad) const {
  const Eigen::ArrayXd s = preactivation(latent, noise).unaryExpr([](double v) { return sigmoid(v); });
  return preactivation_adjoint<double>(grad.pixels * s * (1.0 - s));
}

Image<Dual> ToyGenerator::synthesize(const LatentCodes<Dual>& latent, const NoiseStack& noise) const {
  const int side = sides_.back();
  return Image<Dual>(side, side, preactivation(latent, noise).unaryExpr([](const Dual& v) { return sigmoid(v); }));
}

LatentCodes<Dual> ToyGenerator::synthesize_vjp(const LatentCodes<Dual>& latent, const NoiseStack& noise,
                                               const Image<Dual>& grad) const {
  const ArrayX<Dual> s = preactivation(latent, noise).unaryExpr([](const Dual& v) { return sigmoid(v); });
  return preactivation_adjoint<Dual>(grad.pixels * s * (Dual(1.0) - s));
}

Eigen::VectorXd ToyGenerator::apply_linear(const StyleLatent& latent) const {
  NoiseStack zero = zero_noise();
  ArrayX<double> h = preactivation(latent, zero);
  StyleLatent none = StyleLatent::Zero(layer_count(), kStyleDim);
  return (h - preactivation(none, zero)).matrix();
}

StyleLatent ToyGenerator::apply_linear_adjoint(const Eigen::VectorXd& r) const {
  return preactivation_adjoint<double>(r.array());
}

StyleLatent ToyGenerator::solve_direct(const Eigen::VectorXd& rhs) const {
  std::call_once(solver_once_, [this] {
    auto solver = std::make_unique<DirectSolver>();
    const Eigen::Index m = static_cast<Eigen::Index>(layer_count()) * kStyleDim;
    solver->design.resize(static_cast<Eigen::Index>(sides_.back()) * sides_.back() * kChannels, m);
    for (int layer = 0; layer < layer_count(); ++layer) {
      Eigen::MatrixXd block = maps_[layer];
      for (std::size_t k = layer + 1; k < sides_.size(); ++k) {
        const int f = sides_[k] / sides_[k - 1];
        Eigen::MatrixXd up(static_cast<Eigen::Index>(sides_[k]) * sides_[k] * kChannels, kStyleDim);
        for (int j = 0; j < kStyleDim; ++j) {
          up.col(j) = upsample_nearest<double>(block.col(j).array(), sides_[k - 1], f).matrix();
        }
        block = std::move(up);
      }
      solver->design.middleCols(static_cast<Eigen::Index>(layer) * kStyleDim, kStyleDim) = block;
    }
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(solver->design.transpose());
    solver->normal.compute(gram);
    if (solver->normal.info() != Eigen::Success) {
      throw ConvergenceError("toy generator design matrix is rank deficient", 0.0);
    }
    solver_ = std::move(solver);
  });
  const Eigen::VectorXd coeffs = solver_->normal.solve(solver_->design.transpose() * rhs);
  StyleLatent out(layer_count(), kStyleDim);
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) = coeffs;
  return out;
}

// CGLS on the normal equations, matrix-free.
StyleLatent ToyGenerator::solve_iterative(const Eigen::VectorXd& rhs) const {
  const Eigen::Index n = static_cast<Eigen::Index>(layer_count()) * kStyleDim;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = rhs;
  StyleLatent s_mat = apply_linear_adjoint(r);
  Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(s_mat.data(), n);
  Eigen::VectorXd p = s;
  double gamma = s.squaredNorm();
  const double stop = config_.tolerance * std::sqrt(gamma);
  auto as_latent = [&](const Eigen::VectorXd& v) {
    StyleLatent out(layer_count(), kStyleDim);
    Eigen::Map<Eigen::VectorXd>(out.data(), n) = v;
    return out;
  };
  for (int it = 0; it < config_.max_iterations; ++it) {
    if (std::sqrt(gamma) <= stop || gamma == 0.0) return as_latent(x);
    const Eigen::VectorXd q = apply_linear(as_latent(p));
    const double alpha = gamma / q.squaredNorm();
    x += alpha * p;
    r -= alpha * q;
    s_mat = apply_linear_adjoint(r);
    s = Eigen::Map<const Eigen::VectorXd>(s_mat.data(), n);
    const double next = s.squaredNorm();
    p = s + (next / gamma) * p;
    gamma = next;
  }
  if (std::sqrt(gamma) <= stop) return as_latent(x);
  throw ConvergenceError("toy generator inversion did not converge in " +
                             std::to_string(config_.max_iterations) + " iterations",
                         r.norm());
}

Inversion ToyGenerator::invert(const FaceImage& image) const {
  const double lo = config_.pixel_clamp;
  const Eigen::ArrayXd clamped = image.pixels.max(lo).min(1.0 - lo);
  const Eigen::ArrayXd logits = (clamped / (1.0 - clamped)).log();

  NoiseStack noise = zero_noise();
  const StyleLatent none = StyleLatent::Zero(layer_count(), kStyleDim);
  const Eigen::VectorXd rhs = (logits - preactivation(none, noise)).matrix();

  Inversion out;
  out.latent = config_.inverter == ToyGeneratorConfig::Inverter::Direct ? solve_direct(rhs)
                                                                       : solve_iterative(rhs);
  const Eigen::VectorXd residual = rhs - apply_linear(out.latent);
  out.residual = residual.norm();
  noise.layers.back() = residual.array();
  out.noise = std::move(noise);
  return out;
}

}  // namespace advface
