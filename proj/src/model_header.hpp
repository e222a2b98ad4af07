#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fvforge::detail {

/// `key value` text header shared by the serialized models. Payload tensors
/// live next to it and are referenced by relative file name.
class ModelHeader {
 public:
  static ModelHeader read(const std::filesystem::path& dir, const std::string& format);

  const std::string& get(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::filesystem::path payload(const std::string& key) const { return dir_ / get(key); }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> fields_;
};

void write_model_header(const std::filesystem::path& dir, const std::string& format,
                        const std::vector<std::pair<std::string, std::string>>& fields);

inline constexpr const char* kHeaderName = "model.txt";

}  // namespace fvforge::detail
