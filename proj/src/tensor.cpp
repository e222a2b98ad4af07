#include "fvforge/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "fvforge/error.hpp"

namespace fvforge {

namespace {

void check_finite(std::span<const double> data, const char* what) {
  for (double v : data)
    require(std::isfinite(v), ErrorKind::data, std::string(what) + ": non-finite value");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = static_cast<float>(v);
  require(std::isfinite(f), ErrorKind::data, "tensor value outside float32 range");
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels,
                       std::vector<double> data, bool nonnegative)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(std::move(data)),
      nonnegative_(nonnegative) {
  require(height > 0 && width > 0 && channels > 0, ErrorKind::parameter,
          "feature map dimensions must be positive");
  require(data_.size() == height * width * channels, ErrorKind::shape,
          "feature map payload does not match height*width*channels");
  check_finite(data_, "feature map");
  if (nonnegative_)
    for (double v : data_)
      require(v >= 0.0, ErrorKind::data, "feature map declared nonnegative has a negative value");
}

GlobalVector::GlobalVector(std::vector<double> data, std::string source_tag)
    : data_(std::move(data)), tag_(std::move(source_tag)) {
  require(!data_.empty(), ErrorKind::parameter, "global vector dim must be positive");
  check_finite(data_, "global vector");
}

std::vector<double> as_float32(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = as_float32(v[i]);
  return out;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  using namespace tensor_format;
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(kDtypeFloat32);
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FeatureMap>) {
          out.push_back(3);
          out.push_back(t.nonnegative() ? kFlagNonnegative : 0);
          for (std::size_t d : {t.height(), t.width(), t.channels()}) {
            require(d <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::parameter,
                    "tensor dimension exceeds uint32");
            put_u32(out, static_cast<std::uint32_t>(d));
          }
        } else {
          out.push_back(1);
          out.push_back(0);
          require(t.dim() <= std::numeric_limits<std::uint32_t>::max(), ErrorKind::parameter,
                  "tensor dimension exceeds uint32");
          put_u32(out, static_cast<std::uint32_t>(t.dim()));
        }
        out.reserve(out.size() + 4 * t.values().size());
        for (double v : t.values()) put_f32(out, v);
      },
      tensor);
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  using namespace tensor_format;
  require(bytes.size() >= kFixedHeader, ErrorKind::format, "tensor header truncated");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::format, "bad tensor magic");
  require(bytes[4] == kVersion, ErrorKind::format,
          "unsupported tensor version " + std::to_string(bytes[4]));
  require(bytes[5] == kDtypeFloat32, ErrorKind::format,
          "unsupported tensor dtype " + std::to_string(bytes[5]));
  const std::size_t rank = bytes[6];
  require(rank == 1 || rank == 3, ErrorKind::format,
          "unsupported tensor rank " + std::to_string(rank));
  const std::uint8_t flags = bytes[7];
  require((flags & ~kFlagNonnegative) == 0, ErrorKind::format, "unknown tensor flag bits");
  require(bytes.size() >= header_size(rank), ErrorKind::corruption, "tensor dims truncated");

  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  const std::size_t payload_bytes = bytes.size() - header_size(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = get_u32(bytes.data() + kFixedHeader + 4 * i);
    require(dims[i] > 0, ErrorKind::format, "tensor dimension is zero");
    // Bounded by the payload actually present, so the product cannot overflow.
    require(dims[i] <= payload_bytes / 4 / count, ErrorKind::corruption,
            "tensor shape exceeds payload");
    count *= dims[i];
  }
  require(payload_bytes == 4 * count, ErrorKind::corruption,
          "tensor payload size does not match shape");

  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + header_size(rank);
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const float f = std::bit_cast<float>(get_u32(p));
    require(std::isfinite(f), ErrorKind::data, "tensor payload has non-finite value");
    data[i] = f;
  }
  if (rank == 1) {
    require(flags == 0, ErrorKind::format, "rank-1 tensor carries map flags");
    return GlobalVector(std::move(data));
  }
  return FeatureMap(dims[0], dims[1], dims[2], std::move(data),
                    (flags & kFlagNonnegative) != 0);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open tensor file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tensor(tensor));
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  require(std::holds_alternative<FeatureMap>(t), ErrorKind::format,
          path.string() + ": expected a rank-3 tensor");
  return std::get<FeatureMap>(std::move(t));
}

GlobalVector read_global_vector(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  require(std::holds_alternative<GlobalVector>(t), ErrorKind::format,
          path.string() + ": expected a rank-1 tensor");
  return std::get<GlobalVector>(std::move(t));
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      fail(ErrorKind::io, "write failed for " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename into " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fvforge
