#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "fvforge/manifest.hpp"

namespace fvforge {

/// Seeded fake activations with class-dependent statistics, written in the
/// tensor format together with a manifest. Every image gets, per stream and
/// view, a `softmax` score vector, an `fc7` vector and a nonnegative
/// `conv5_3` map.
struct SynthOptions {
  std::size_t classes = 10;
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 10;
  std::size_t views = 2;
  std::uint64_t seed = 7;
  std::size_t fc_dim = 32;
  std::size_t map_size = 6;
  std::size_t channels = 16;
  std::size_t prototypes = 12;
  double noise = 0.3;
};

/// Writes `<out>/tensors/*.fvt` and `<out>/data.manifest`; returns the
/// manifest as saved.
Manifest synthesize(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace fvforge
