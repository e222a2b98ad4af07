#include "fvforge/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "fvforge/error.hpp"

namespace fvforge {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::raw: return "raw";
    case Provenance::channel_norm: return "channel";
    case Provenance::spatial_norm: return "spatial";
  }
  return "?";
}

DescriptorSet::DescriptorSet(std::size_t dim, std::vector<double> flat, Provenance provenance)
    : dim_(dim), flat_(std::move(flat)), provenance_(provenance) {
  require(dim_ > 0, ErrorKind::parameter, "descriptor dim must be positive");
  require(flat_.size() % dim_ == 0, ErrorKind::shape, "descriptor payload not a multiple of dim");
  for (double v : flat_) require(std::isfinite(v), ErrorKind::data, "non-finite descriptor value");
}

DescriptorSet concat(std::span<const DescriptorSet> sets) {
  require(!sets.empty(), ErrorKind::parameter, "no descriptor sets to concatenate");
  std::size_t total = 0;
  for (const auto& s : sets) {
    require(s.dim() == sets.front().dim(), ErrorKind::shape, "descriptor dims differ");
    total += s.values().size();
  }
  std::vector<double> flat;
  flat.reserve(total);
  for (const auto& s : sets) flat.insert(flat.end(), s.values().begin(), s.values().end());
  return DescriptorSet(sets.front().dim(), std::move(flat), sets.front().provenance());
}

FeatureMap spatial_normalize(const FeatureMap& map, double epsilon, Exec exec) {
  require(epsilon > 0.0, ErrorKind::parameter, "epsilon must be positive");
  const std::size_t positions = map.height() * map.width();
  const std::size_t c = map.channels();
  const auto in = map.values();
  std::vector<double> out(in.size());
  const auto n = static_cast<std::ptrdiff_t>(c);
#pragma omp parallel for if (exec == Exec::parallel && positions * c > 4096)
  for (std::ptrdiff_t ch = 0; ch < n; ++ch) {
    double peak = 0.0;
    for (std::size_t p = 0; p < positions; ++p)
      peak = std::max(peak, std::abs(in[p * c + ch]));
    const double denom = std::max(peak, epsilon);
    for (std::size_t p = 0; p < positions; ++p) out[p * c + ch] = in[p * c + ch] / denom;
  }
  return FeatureMap(map.height(), map.width(), c, std::move(out), map.nonnegative());
}

FeatureMap channel_normalize(const FeatureMap& map, double epsilon, Exec exec) {
  require(epsilon > 0.0, ErrorKind::parameter, "epsilon must be positive");
  const std::size_t c = map.channels();
  const auto positions = static_cast<std::ptrdiff_t>(map.height() * map.width());
  const auto in = map.values();
  std::vector<double> out(in.size());
#pragma omp parallel for if (exec == Exec::parallel && in.size() > 4096)
  for (std::ptrdiff_t p = 0; p < positions; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * c;
    double peak = 0.0;
    for (std::size_t k = 0; k < c; ++k) peak = std::max(peak, std::abs(in[base + k]));
    const double denom = std::max(peak, epsilon);
    for (std::size_t k = 0; k < c; ++k) out[base + k] = in[base + k] / denom;
  }
  return FeatureMap(map.height(), map.width(), c, std::move(out), map.nonnegative());
}

DescriptorSet extract_descriptors(const FeatureMap& map, Provenance provenance) {
  const auto v = map.values();
  return DescriptorSet(map.channels(), std::vector<double>(v.begin(), v.end()), provenance);
}

void write_descriptors(const DescriptorSet& set, const std::filesystem::path& path) {
  require(set.size() > 0, ErrorKind::parameter, "cannot write an empty descriptor set");
  const auto v = set.values();
  write_tensor(FeatureMap(set.size(), 1, set.dim(), std::vector<double>(v.begin(), v.end())),
               path);
}

DescriptorSet read_descriptors(const std::filesystem::path& path) {
  const FeatureMap m = read_feature_map(path);
  require(m.width() == 1, ErrorKind::format, path.string() + ": descriptor file must have width 1");
  return extract_descriptors(m, Provenance::raw);
}

}  // namespace fvforge
