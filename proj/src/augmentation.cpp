#include "advface/augmentation.hpp"

#include <cmath>

#include "advface/errors.hpp"

namespace advface {

void AugmentationConfig::validate() const {
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
    throw ValidationError("apply_probability must lie in [0, 1]");
  }
  if (!(scale_low > 0.0 && scale_low <= scale_high && scale_high <= 1.0)) {
    throw ValidationError("scale range must satisfy 0 < low <= high <= 1");
  }
  if (final_resolution.height < 1 || final_resolution.width < 1) {
    throw ValidationError("final resolution must be positive");
  }
}

namespace {

Resolution scaled(const AugmentationConfig& cfg, double scale) {
  return {static_cast<int>(std::lround(scale * cfg.final_resolution.height)),
          static_cast<int>(std::lround(scale * cfg.final_resolution.width))};
}

}  // namespace

TransformDraw draw_transform(const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  TransformDraw draw;
  draw.scale = rng.uniform(cfg.scale_low, cfg.scale_high);
  const Resolution r = scaled(cfg, draw.scale);
  const int slack_y = std::max(0, cfg.final_resolution.height - r.height);
  const int slack_x = std::max(0, cfg.final_resolution.width - r.width);
  if (cfg.placement == PadPlacement::Random) {
    draw.offset_y = rng.uniform_int(0, slack_y);
    draw.offset_x = rng.uniform_int(0, slack_x);
  } else {
    draw.offset_y = slack_y / 2;
    draw.offset_x = slack_x / 2;
  }
  return draw;
}

FaceImage apply_transform(const FaceImage& x, const AugmentationConfig& cfg, const TransformDraw& draw) {
  const Resolution r = scaled(cfg, draw.scale);
  if (r.height < 1 || r.width < 1) {
    throw ValidationError("augmentation scale " + std::to_string(draw.scale) + " leaves less than one pixel");
  }
  const Resolution canvas_res = cfg.final_resolution;
  if (r.height > canvas_res.height || r.width > canvas_res.width || draw.offset_y < 0 ||
      draw.offset_x < 0 || draw.offset_y + r.height > canvas_res.height ||
      draw.offset_x + r.width > canvas_res.width) {
    throw ValidationError("augmentation draw does not fit the canvas");
  }
  const FaceImage resized = resize_bilinear(x, r);
  FaceImage canvas(canvas_res.height, canvas_res.width);
  for (int y = 0; y < r.height; ++y) {
    for (int xx = 0; xx < r.width; ++xx) {
      for (int c = 0; c < kChannels; ++c) {
        canvas.at(y + draw.offset_y, xx + draw.offset_x, c) = resized.at(y, xx, c);
      }
    }
  }
  return resize_bilinear(canvas, cfg.final_resolution);
}

FaceImage transform(const FaceImage& x, const AugmentationConfig& cfg, Rng& rng) {
  return apply_transform(x, cfg, draw_transform(cfg, rng));
}

TargetRepresentation target_representation_for(const FaceImage& target, const FrModel& model,
                                               const AugmentationConfig& cfg, double p, Rng& rng) {
  if (cfg.apply_probability > 0.0 && p <= cfg.apply_probability) {
    FaceImage t = transform(target, cfg, rng);
    if (t.resolution() != model.input_resolution()) t = resize_bilinear(t, model.input_resolution());
    return {classify(model, t), true};
  }
  return {classify(model, target), false};
}

TargetRepresentation target_representation(const FaceImage& target, const FrModel& model,
                                           const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  const double p = rng.uniform();
  return target_representation_for(target, model, cfg, p, rng);
}

}  // namespace advface
