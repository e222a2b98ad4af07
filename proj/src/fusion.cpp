#include "fvforge/fusion.hpp"

#include <cmath>

#include "fvforge/error.hpp"

namespace fvforge {

FusionWeights::FusionWeights(double object, double scene)
    : object_weight(object), scene_weight(scene) {
  require(std::isfinite(object) && std::isfinite(scene) && object >= 0.0 && scene >= 0.0,
          ErrorKind::parameter, "fusion weights must be finite and nonnegative");
  require(object > 0.0 || scene > 0.0, ErrorKind::parameter, "fusion weights cannot both be zero");
}

ScoreVector fuse_scores(const ScoreVector& object_scores, const ScoreVector& scene_scores,
                        const FusionWeights& w) {
  require(object_scores.class_count() == scene_scores.class_count(), ErrorKind::shape,
          "fuse_scores: class counts differ");
  ScoreVector out{std::vector<double>(object_scores.class_count())};
  for (std::size_t i = 0; i < out.scores.size(); ++i)
    out.scores[i] =
        w.object_weight * object_scores.scores[i] + w.scene_weight * scene_scores.scores[i];
  return out;
}

FusedFeature concat_features(std::span<const double> object_feat,
                             std::span<const double> scene_feat, const FusionWeights& w) {
  FusedFeature out;
  out.values.reserve(object_feat.size() + scene_feat.size());
  for (double v : object_feat) {
    require(std::isfinite(v), ErrorKind::data, "concat_features: non-finite value");
    out.values.push_back(w.object_weight * v);
  }
  out.boundary = out.values.size();
  for (double v : scene_feat) {
    require(std::isfinite(v), ErrorKind::data, "concat_features: non-finite value");
    out.values.push_back(w.scene_weight * v);
  }
  return out;
}

}  // namespace fvforge
