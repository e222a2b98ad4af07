#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fvforge/tensor.hpp"

namespace fvforge {

/// Stream weights (alpha for scores, beta for features). Defaults are equal.
struct FusionWeights {
  double object_weight = 1.0;
  double scene_weight = 1.0;

  FusionWeights() = default;
  FusionWeights(double object, double scene);
};

/// alpha_o * s_o + alpha_s * s_s, elementwise.
ScoreVector fuse_scores(const ScoreVector& object_scores, const ScoreVector& scene_scores,
                        const FusionWeights& w);

/// [beta_o * object, beta_s * scene]; `boundary` is the offset of the scene
/// block.
struct FusedFeature {
  std::vector<double> values;
  std::size_t boundary = 0;
};

FusedFeature concat_features(std::span<const double> object_feat,
                             std::span<const double> scene_feat, const FusionWeights& w);

}  // namespace fvforge
