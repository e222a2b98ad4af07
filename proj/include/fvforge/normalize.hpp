#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "fvforge/exec.hpp"
#include "fvforge/tensor.hpp"

namespace fvforge {

enum class Provenance { raw, channel_norm, spatial_norm };

std::string_view to_string(Provenance p);

/// A bag of equal-length local descriptors stored row-major.
class DescriptorSet {
 public:
  DescriptorSet(std::size_t dim, std::vector<double> flat, Provenance provenance = Provenance::raw);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return flat_.size() / dim_; }
  Provenance provenance() const { return provenance_; }
  std::span<const double> values() const { return flat_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(flat_).subspan(i * dim_, dim_);
  }

  friend bool operator==(const DescriptorSet& a, const DescriptorSet& b) {
    return a.dim_ == b.dim_ && a.flat_ == b.flat_;
  }

 private:
  std::size_t dim_;
  std::vector<double> flat_;
  Provenance provenance_;
};

/// Stacks several sets of one dimension, preserving order.
DescriptorSet concat(std::span<const DescriptorSet> sets);

inline constexpr double kNormEpsilon = 1e-12;

/// Divides every channel by its largest magnitude over all positions.
FeatureMap spatial_normalize(const FeatureMap& map, double epsilon = kNormEpsilon,
                             Exec exec = Exec::parallel);

/// Divides every position's channel vector by its largest-magnitude entry.
FeatureMap channel_normalize(const FeatureMap& map, double epsilon = kNormEpsilon,
                             Exec exec = Exec::parallel);

/// One descriptor per position in row-major order; dim = channels.
DescriptorSet extract_descriptors(const FeatureMap& map, Provenance provenance);

/// Descriptor files reuse the rank-3 container: height = count, width = 1.
void write_descriptors(const DescriptorSet& set, const std::filesystem::path& path);
DescriptorSet read_descriptors(const std::filesystem::path& path);

}  // namespace fvforge
