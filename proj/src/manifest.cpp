#include "fvforge/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fvforge/error.hpp"
#include "fvforge/tensor.hpp"

namespace fvforge {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_line(std::size_t line_no, const std::string& what) {
  fail(ErrorKind::validation, "manifest line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string_view to_string(Stream s) { return s == Stream::object ? "object" : "scene"; }

Stream parse_stream(std::string_view s) {
  if (s == "object") return Stream::object;
  if (s == "scene") return Stream::scene;
  fail(ErrorKind::validation, "unknown stream '" + std::string(s) + "'");
}

std::vector<std::filesystem::path> ManifestEntry::views_for(Stream stream,
                                                            std::string_view layer) const {
  std::vector<std::filesystem::path> out;
  for (const auto& v : views)
    if (v.stream == stream && v.layer == layer) out.push_back(v.path);
  return out;
}

bool Manifest::has_layer(Stream stream, std::string_view layer) const {
  for (const auto& e : entries)
    if (e.views_for(stream, layer).empty()) return false;
  return !entries.empty();
}

Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_classes = false;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (!have_classes) {
      constexpr std::string_view prefix = "classes:";
      if (sv.substr(0, prefix.size()) != prefix) bad_line(line_no, "expected 'classes:' header");
      for (auto name : split(trim(sv.substr(prefix.size())), ',')) {
        name = trim(name);
        if (name.empty()) bad_line(line_no, "empty class name");
        m.class_names.emplace_back(name);
      }
      have_classes = true;
      continue;
    }
    const auto fields = split(sv, '\t');
    if (fields.size() < 3 || fields.size() > 4) bad_line(line_no, "expected 3 or 4 tab-separated fields");
    ManifestEntry e;
    e.image_id = std::string(trim(fields[0]));
    if (e.image_id.empty()) bad_line(line_no, "empty image id");
    if (!seen.insert(e.image_id).second) bad_line(line_no, "duplicate image id " + e.image_id);

    const std::string_view label = trim(fields[1]);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
    if (ec != std::errc() || ptr != label.data() + label.size()) bad_line(line_no, "bad label");
    if (value >= 0) {
      if (static_cast<unsigned long long>(value) >= m.class_names.size())
        bad_line(line_no, "label index " + std::to_string(value) + " out of range");
      e.label = static_cast<std::size_t>(value);
    } else if (value != -1) {
      bad_line(line_no, "negative label must be -1");
    }

    for (auto item : split(fields[2], ',')) {
      item = trim(item);
      const auto colon = item.find(':');
      const auto eq = item.find('=');
      if (colon == std::string_view::npos || eq == std::string_view::npos || eq < colon)
        bad_line(line_no, "view must be stream:layer=path");
      ViewFile v{parse_stream(item.substr(0, colon)),
                 std::string(item.substr(colon + 1, eq - colon - 1)),
                 std::filesystem::path(std::string(item.substr(eq + 1)))};
      if (v.layer.empty() || v.path.empty()) bad_line(line_no, "empty layer or path");
      if (v.path.is_relative()) v.path = base_dir / v.path;
      e.views.push_back(std::move(v));
    }

    if (fields.size() == 4) {
      const auto role = trim(fields[3]);
      if (role == "train") e.split = Split::train;
      else if (role == "test") e.split = Split::test;
      else bad_line(line_no, "split must be train or test");
    }
    m.entries.push_back(std::move(e));
  }
  if (!have_classes) fail(ErrorKind::validation, "manifest has no 'classes:' header");
  require(!m.class_names.empty(), ErrorKind::validation, "manifest declares no classes");
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::ostringstream out;
  out << "classes: ";
  for (std::size_t i = 0; i < manifest.class_names.size(); ++i)
    out << (i ? "," : "") << manifest.class_names[i];
  out << '\n';
  for (const auto& e : manifest.entries) {
    out << e.image_id << '\t' << (e.label ? static_cast<long long>(*e.label) : -1LL) << '\t';
    for (std::size_t i = 0; i < e.views.size(); ++i) {
      const auto& v = e.views[i];
      auto p = v.path;
      if (!base.empty()) {
        auto rel = p.lexically_relative(base);
        if (!rel.empty() && *rel.begin() != "..") p = rel;
      }
      out << (i ? "," : "") << to_string(v.stream) << ':' << v.layer << '=' << p.generic_string();
    }
    out << '\t' << (e.split == Split::train ? "train" : "test") << '\n';
  }
  write_text_atomic(path, out.str());
}

Manifest training_only(const Manifest& manifest) {
  Manifest out;
  out.class_names = manifest.class_names;
  for (const auto& e : manifest.entries)
    if (e.split == Split::train) out.entries.push_back(e);
  return out;
}

}  // namespace fvforge
