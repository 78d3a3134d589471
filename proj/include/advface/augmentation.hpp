#pragma once

#include "advface/image.hpp"
#include "advface/recognition.hpp"
#include "advface/rng.hpp"

namespace advface {

enum class PadPlacement { Random, Center };

struct AugmentationConfig {
  double apply_probability = 0.5;
  double scale_low = 0.8;
  double scale_high = 1.0;
  PadPlacement placement = PadPlacement::Random;
  Resolution final_resolution{32, 32};

  void validate() const;
};

// Parameters of one resize-and-pad draw.
struct TransformDraw {
  double scale = 1.0;
  int offset_y = 0;
  int offset_x = 0;
};

TransformDraw draw_transform(const AugmentationConfig& cfg, Rng& rng);

// Resize by draw.scale of the final resolution, paste at the drawn offsets
// into a zero canvas of the final resolution, resize the canvas to the final
// resolution.
FaceImage apply_transform(const FaceImage& x, const AugmentationConfig& cfg, const TransformDraw& draw);

FaceImage transform(const FaceImage& x, const AugmentationConfig& cfg, Rng& rng);

struct TargetRepresentation {
  SoftmaxVector v;
  bool transformed;
};

// Draws p ~ U(0, 1); p <= apply_probability classifies the transformed
// target, otherwise the target as is.
TargetRepresentation target_representation(const FaceImage& target, const FrModel& model,
                                           const AugmentationConfig& cfg, Rng& rng);

// Same, with p supplied.
TargetRepresentation target_representation_for(const FaceImage& target, const FrModel& model,
                                               const AugmentationConfig& cfg, double p, Rng& rng);

}  // namespace advface
