#include <doctest.h>

#include <advface/errors.hpp>
#include <advface/generator.hpp>
#include <advface/metrics.hpp>

#include <limits>

#include "support.hpp"

using namespace advface;
using testing::oracle;

namespace {

const ToyGenerator& default_generator() {
  static const ToyGenerator g;
  return g;
}

}  // namespace

TEST_CASE("zero latent and noise give the golden bias image") {
  const auto& ref = oracle()["toy_generator_default_bias_image"];
  const ToyGenerator& g = default_generator();
  const FaceImage img = synthesize(g, StyleLatent::Zero(4, kStyleDim), g.zero_noise());
  REQUIRE(img.height == 32);
  REQUIRE(img.width == 32);
  for (std::size_t k = 0; k < ref["indices"].size(); ++k) {
    CHECK(img.pixels[ref["indices"][k].get<int>()] ==
          doctest::Approx(ref["values"][k].get<double>()).epsilon(1e-12));
  }
  CHECK(img.pixels.sum() == doctest::Approx(ref["sum"].get<double>()).epsilon(1e-12));
}

TEST_CASE("two-layer generator matches the reference forward pass") {
  const auto& ref = oracle()["toy_generator_4_8_seed3"];
  ToyGeneratorConfig cfg;
  cfg.seed = 3;
  cfg.inverter = ToyGeneratorConfig::Inverter::Iterative;
  cfg.layer_sides = {4, 8};
  const ToyGenerator g(cfg);
  StyleLatent w(2, kStyleDim);
  for (int m = 0; m < 2; ++m)
    for (int j = 0; j < kStyleDim; ++j) w(m, j) = 0.5 * std::sin(0.37 * (m * 512 + j));
  const FaceImage img = synthesize(g, w, g.zero_noise());
  for (std::size_t k = 0; k < ref["indices"].size(); ++k) {
    CHECK(img.pixels[ref["indices"][k].get<int>()] ==
          doctest::Approx(ref["values"][k].get<double>()).epsilon(1e-12));
  }
  CHECK(img.pixels.sum() == doctest::Approx(ref["sum"].get<double>()).epsilon(1e-12));
}

TEST_CASE("synthesis is deterministic and in range") {
  const ToyGenerator& g = default_generator();
  Rng rng(5);
  const StyleLatent w = testing::random_latent(4, rng, 3.0);
  const FaceImage a = synthesize(g, w, g.zero_noise());
  const FaceImage b = synthesize(g, w, g.zero_noise());
  CHECK((a.pixels == b.pixels).all());
  CHECK(a.pixels.minCoeff() >= 0.0);
  CHECK(a.pixels.maxCoeff() <= 1.0);
}

TEST_CASE("bad latents and noise are rejected") {
  const ToyGenerator& g = default_generator();
  StyleLatent w = StyleLatent::Zero(4, kStyleDim);
  w(2, 17) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(synthesize(g, w, g.zero_noise()), ValidationError);
  CHECK_THROWS_AS(synthesize(g, StyleLatent::Zero(3, kStyleDim), g.zero_noise()), DimensionError);
  NoiseStack noise = g.zero_noise();
  noise.layers.pop_back();
  CHECK_THROWS_AS(synthesize(g, StyleLatent::Zero(4, kStyleDim), noise), DimensionError);
  CHECK_THROWS_AS(ToyGenerator(ToyGeneratorConfig{{16, 24}}), ValidationError);
}

TEST_CASE("inversion recovers the latent of an in-range image") {
  const ToyGenerator& g = default_generator();
  double worst_latent = 0.0, worst_pixel = 0.0, worst_psnr = 1e9;
  for (int s = 0; s < 10; ++s) {
    Rng rng(100 + s);
    const StyleLatent w = testing::random_latent(4, rng);
    const FaceImage x = synthesize(g, w, g.zero_noise());
    const Inversion inv = invert(g, x);
    const FaceImage back = synthesize(g, inv.latent, inv.noise);
    worst_latent = std::max(worst_latent, (inv.latent - w).cwiseAbs().maxCoeff());
    worst_pixel = std::max(worst_pixel, (back.pixels - x.pixels).abs().maxCoeff());
    worst_psnr = std::min(worst_psnr, psnr(back, x).db);
  }
  CHECK(worst_latent <= 1e-5);
  CHECK(worst_pixel <= 1e-4);
  CHECK(worst_psnr >= 40.0);
}

TEST_CASE("inversion of an arbitrary image reconstructs it through the noise") {
  const ToyGenerator& g = default_generator();
  const FaceImage x = testing::random_image(32, 32, 9);
  const Inversion inv = invert(g, x);
  const FaceImage back = synthesize(g, inv.latent, inv.noise);
  CHECK((back.pixels - x.pixels).abs().maxCoeff() <= 1e-4);
  CHECK_THROWS_AS(invert(g, testing::random_image(16, 16, 1)), DimensionError);
}

TEST_CASE("iterative inverter agrees with the direct one") {
  ToyGeneratorConfig cfg;
  cfg.layer_sides = {16, 32};
  cfg.inverter = ToyGeneratorConfig::Inverter::Iterative;
  const ToyGenerator iterative(cfg);
  cfg.inverter = ToyGeneratorConfig::Inverter::Direct;
  const ToyGenerator direct(cfg);
  Rng rng(3);
  const StyleLatent w = testing::random_latent(2, rng);
  const FaceImage x = synthesize(direct, w, direct.zero_noise());
  const Inversion a = invert(iterative, x);
  const Inversion b = invert(direct, x);
  CHECK((a.latent - b.latent).cwiseAbs().maxCoeff() < 1e-6);

  cfg.inverter = ToyGeneratorConfig::Inverter::Iterative;
  cfg.max_iterations = 2;
  const ToyGenerator starved(cfg);
  try {
    invert(starved, x);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 0.0);
  }

  ToyGeneratorConfig narrow;
  narrow.layer_sides = {8, 8};
  CHECK_THROWS_AS(ToyGenerator{narrow}, ValidationError);
  narrow.inverter = ToyGeneratorConfig::Inverter::Iterative;
  CHECK_NOTHROW(ToyGenerator{narrow});
}

TEST_CASE("synthesis gradient matches finite differences") {
  const ToyGenerator& g = default_generator();
  Rng rng(21);
  const StyleLatent w = testing::random_latent(4, rng);
  const FaceImage weights = testing::random_image(32, 32, 4, -1.0, 1.0);
  auto f = [&](const Eigen::VectorXd& flat) {
    const StyleLatent lw = Eigen::Map<const StyleLatent>(flat.data(), 4, kStyleDim);
    return (synthesize(g, lw, g.zero_noise()).pixels * weights.pixels).sum();
  };
  const StyleLatent grad = g.synthesize_vjp(w, g.zero_noise(), weights);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  const Eigen::VectorXd gx = Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd d = testing::random_direction(x.size(), 50 + k);
    CHECK(testing::relative_error(testing::directional_fd(f, x, d, 1e-5), gx.dot(d)) <= 1e-4);
  }
}

TEST_CASE("dual-number synthesis carries the exact tangent") {
  const ToyGenerator& g = default_generator();
  Rng rng(8);
  const StyleLatent w = testing::random_latent(4, rng);
  const StyleLatent dir = testing::random_latent(4, rng);
  LatentCodes<Dual> wd(4, kStyleDim);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    wd.data()[i] = Dual(w.data()[i]);
    wd.data()[i].v[0] = dir.data()[i];
  }
  const Image<Dual> out = g.synthesize(wd, g.zero_noise());
  const FaceImage plain = synthesize(g, w, g.zero_noise());
  const double h = 1e-6;
  const FaceImage plus = synthesize(g, w + h * dir, g.zero_noise());
  const FaceImage minus = synthesize(g, w - h * dir, g.zero_noise());
  for (int i : {0, 500, 3071}) {
    CHECK(out.pixels[i].a == plain.pixels[i]);
    CHECK(out.pixels[i].v[0] == doctest::Approx((plus.pixels[i] - minus.pixels[i]) / (2 * h)).epsilon(1e-6));
  }
}
