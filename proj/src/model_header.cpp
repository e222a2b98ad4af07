#include "model_header.hpp"

#include <charconv>
#include <sstream>

#include "fvforge/error.hpp"
#include "fvforge/tensor.hpp"

namespace fvforge::detail {

ModelHeader ModelHeader::read(const std::filesystem::path& dir, const std::string& format) {
  ModelHeader h;
  h.dir_ = dir;
  std::istringstream in(read_text(dir / kHeaderName));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto sp = line.find(' ');
    require(sp != std::string::npos, ErrorKind::format, "model header line without value: " + line);
    h.fields_[line.substr(0, sp)] = line.substr(sp + 1);
  }
  const auto it = h.fields_.find("format");
  require(it != h.fields_.end() && it->second == format, ErrorKind::format,
          dir.string() + ": not a " + format + " model");
  require(h.get("version") == "1", ErrorKind::format, dir.string() + ": unsupported model version");
  return h;
}

const std::string& ModelHeader::get(const std::string& key) const {
  const auto it = fields_.find(key);
  require(it != fields_.end(), ErrorKind::format, "model header lacks '" + key + "'");
  return it->second;
}

std::size_t ModelHeader::get_size(const std::string& key) const {
  const std::string& s = get(key);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::format,
          "model header field '" + key + "' is not a count");
  return v;
}

double ModelHeader::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), ErrorKind::format, "model header field '" + key + "' is not a number");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::format, "model header field '" + key + "' is not a number");
  }
}

void write_model_header(const std::filesystem::path& dir, const std::string& format,
                        const std::vector<std::pair<std::string, std::string>>& fields) {
  std::ostringstream out;
  out << "format " << format << "\nversion 1\n";
  for (const auto& [k, v] : fields) out << k << ' ' << v << '\n';
  write_text_atomic(dir / kHeaderName, out.str());
}

}  // namespace fvforge::detail
