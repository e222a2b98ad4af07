#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fvforge/tensor.hpp"

namespace fvforge {

enum class CropPosition { top_left, top_right, bottom_left, bottom_right, center };

std::string_view to_string(CropPosition p);

/// One test-time view: the image resized so its shorter side equals
/// `scale_smallest_side`, then cropped to a square of `crop_size`.
struct View {
  std::size_t scale_smallest_side;
  std::size_t scaled_width;
  std::size_t scaled_height;
  CropPosition position;
  std::size_t crop_x;
  std::size_t crop_y;
  std::size_t crop_size;
  bool flipped;

  friend bool operator==(const View&, const View&) = default;
};

struct ViewPlan {
  std::vector<View> views;
};

/// Five crops (four corners, then center) per scale, each repeated with
/// flipped=true when `include_flips`. The long side is rounded half away
/// from zero. Scales must be distinct and no smaller than `crop_size`.
ViewPlan plan_views(std::size_t image_width, std::size_t image_height,
                    std::span<const std::size_t> scales, std::size_t crop_size,
                    bool include_flips);

std::string views_to_csv(const ViewPlan& plan);

/// Elementwise sum over views. All inputs must share one dimension.
std::vector<double> sum_pool(std::span<const std::vector<double>> views);
GlobalVector sum_pool(std::span<const GlobalVector> views);

}  // namespace fvforge
