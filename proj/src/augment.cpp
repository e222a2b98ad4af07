#include "fvforge/augment.hpp"

#include <algorithm>
#include <sstream>

#include "fvforge/error.hpp"

namespace fvforge {

std::string_view to_string(CropPosition p) {
  switch (p) {
    case CropPosition::top_left: return "top_left";
    case CropPosition::top_right: return "top_right";
    case CropPosition::bottom_left: return "bottom_left";
    case CropPosition::bottom_right: return "bottom_right";
    case CropPosition::center: return "center";
  }
  return "?";
}

namespace {

// round(a / b) with halves away from zero, a and b positive.
std::size_t div_round(std::size_t a, std::size_t b) { return (2 * a + b) / (2 * b); }

}  // namespace

ViewPlan plan_views(std::size_t image_width, std::size_t image_height,
                    std::span<const std::size_t> scales, std::size_t crop_size,
                    bool include_flips) {
  require(image_width >= 1 && image_height >= 1, ErrorKind::parameter,
          "image size must be positive");
  require(crop_size >= 1, ErrorKind::parameter, "crop size must be positive");
  require(!scales.empty(), ErrorKind::parameter, "at least one scale is required");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    require(crop_size <= scales[i], ErrorKind::parameter,
            "crop size " + std::to_string(crop_size) + " exceeds scale " +
                std::to_string(scales[i]));
    for (std::size_t j = 0; j < i; ++j)
      require(scales[i] != scales[j], ErrorKind::parameter, "duplicate scale");
  }

  ViewPlan plan;
  plan.views.reserve(scales.size() * 5 * (include_flips ? 2 : 1));
  for (std::size_t s : scales) {
    std::size_t w, h;
    if (image_width <= image_height) {
      w = s;
      h = div_round(image_height * s, image_width);
    } else {
      h = s;
      w = div_round(image_width * s, image_height);
    }
    const std::size_t right = w - crop_size;
    const std::size_t bottom = h - crop_size;
    const struct {
      CropPosition pos;
      std::size_t x, y;
    } crops[5] = {{CropPosition::top_left, 0, 0},
                  {CropPosition::top_right, right, 0},
                  {CropPosition::bottom_left, 0, bottom},
                  {CropPosition::bottom_right, right, bottom},
                  {CropPosition::center, right / 2, bottom / 2}};
    for (bool flip : {false, true}) {
      if (flip && !include_flips) break;
      for (const auto& c : crops)
        plan.views.push_back(View{s, w, h, c.pos, c.x, c.y, crop_size, flip});
    }
  }
  return plan;
}

std::string views_to_csv(const ViewPlan& plan) {
  std::ostringstream out;
  out << "scale,scaled_width,scaled_height,position,crop_x,crop_y,crop_size,flipped\n";
  for (const auto& v : plan.views)
    out << v.scale_smallest_side << ',' << v.scaled_width << ',' << v.scaled_height << ','
        << to_string(v.position) << ',' << v.crop_x << ',' << v.crop_y << ',' << v.crop_size
        << ',' << (v.flipped ? 1 : 0) << '\n';
  return out.str();
}

namespace {

// Each output element sums its view values in sorted order, which makes the
// result exactly independent of view order.
template <class Get>
std::vector<double> pooled(std::size_t count, std::size_t dim, Get get) {
  std::vector<double> out(dim, 0.0);
  std::vector<double> column(count);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t v = 0; v < count; ++v) column[v] = get(v)[i];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double x : column) acc += x;
    out[i] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> sum_pool(std::span<const std::vector<double>> views) {
  require(!views.empty(), ErrorKind::parameter, "sum_pool needs at least one view");
  for (const auto& v : views)
    require(v.size() == views.front().size(), ErrorKind::shape,
            "sum_pool: view dimensions differ");
  return pooled(views.size(), views.front().size(),
                [&](std::size_t v) { return std::span<const double>(views[v]); });
}

GlobalVector sum_pool(std::span<const GlobalVector> views) {
  require(!views.empty(), ErrorKind::parameter, "sum_pool needs at least one view");
  for (const auto& v : views)
    require(v.dim() == views.front().dim(), ErrorKind::shape,
            "sum_pool: view dimensions differ");
  return GlobalVector(pooled(views.size(), views.front().dim(),
                             [&](std::size_t v) { return views[v].values(); }),
                      views.front().source_tag());
}

}  // namespace fvforge
