#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fvforge {

enum class Stream { object, scene };

std::string_view to_string(Stream s);
Stream parse_stream(std::string_view s);

/// Which side of the train/test protocol an image belongs to.
enum class Split { train, test };

struct ViewFile {
  Stream stream;
  std::string layer;
  std::filesystem::path path;  // resolved against the manifest directory
};

struct ManifestEntry {
  std::string image_id;
  std::optional<std::size_t> label;
  Split split = Split::train;
  std::vector<ViewFile> views;

  /// All view files for one stream/layer, in manifest order.
  std::vector<std::filesystem::path> views_for(Stream stream, std::string_view layer) const;
};

/// Image list with labels and per-stream, per-layer activation files. Files
/// are not opened here; a missing file surfaces when it is read.
struct Manifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;

  std::size_t class_count() const { return class_names.size(); }
  bool has_layer(Stream stream, std::string_view layer) const;
};

/// Line format:
///   classes: name0,name1,...
///   image_id<TAB>label_or_-1<TAB>stream:layer=path[,stream:layer=path...][<TAB>train|test]
/// Relative paths resolve against `base_dir`.
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);

/// Writes paths relative to the manifest's directory where possible.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Copy of `manifest` without test-split entries.
Manifest training_only(const Manifest& manifest);

}  // namespace fvforge
