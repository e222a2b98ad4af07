#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace fvforge {

/// Dense height x width x channels activation map, row-major with channels
/// innermost. Values are held in double precision; on disk they are float32.
class FeatureMap {
 public:
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels,
             std::vector<double> data, bool nonnegative = false);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool nonnegative() const { return nonnegative_; }

  std::span<const double> values() const { return data_; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }
  std::span<const double> channel_vector(std::size_t y, std::size_t x) const {
    return std::span<const double>(data_).subspan((y * width_ + x) * channels_,
                                                  channels_);
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<double> data_;
  bool nonnegative_;
};

/// A flat activation vector (fc layer output, softmax scores, encoded
/// representation). `source_tag` names the producing layer; it is not
/// serialized.
class GlobalVector {
 public:
  explicit GlobalVector(std::vector<double> data, std::string source_tag = {});

  std::size_t dim() const { return data_.size(); }
  std::span<const double> values() const { return data_; }
  const std::string& source_tag() const { return tag_; }
  double operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const GlobalVector& a, const GlobalVector& b) {
    return a.data_ == b.data_;
  }

 private:
  std::vector<double> data_;
  std::string tag_;
};

struct ScoreVector {
  std::vector<double> scores;
  std::size_t class_count() const { return scores.size(); }
};

/// Row-major matrix used for feature banks and score tables.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c) {}

  std::span<double> row(std::size_t i) {
    return std::span<double>(values).subspan(i * cols, cols);
  }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * cols, cols);
  }
};

using Tensor = std::variant<FeatureMap, GlobalVector>;

namespace tensor_format {
inline constexpr char kMagic[4] = {'F', 'V', 'T', '1'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr std::uint8_t kFlagNonnegative = 0x01;
inline constexpr std::size_t kFixedHeader = 8;
inline std::size_t header_size(std::size_t rank) { return kFixedHeader + 4 * rank; }
}  // namespace tensor_format

/// Encodes a tensor in the FVT1 container. Values are narrowed to float32;
/// anything outside float range is a data error.
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);

/// Parses an FVT1 byte stream. Every malformed input yields an Error.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);

FeatureMap read_feature_map(const std::filesystem::path& path);
GlobalVector read_global_vector(const std::filesystem::path& path);

/// Rounds a value through float32, i.e. what a write/read cycle produces.
inline double as_float32(double v) { return static_cast<double>(static_cast<float>(v)); }
std::vector<double> as_float32(std::span<const double> v);

/// Writes `bytes` to `path` through a temporary file and rename, so a failed
/// write never leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace fvforge
