#include <cstdio>
#include <iostream>
#include <mutex>

#include <omp.h>

#include "fvforge/error.hpp"
#include "fvforge/exec.hpp"
#include "fvforge/log.hpp"

namespace fvforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::shape: return "shape";
    case ErrorKind::format: return "format";
    case ErrorKind::corruption: return "corruption";
    case ErrorKind::data: return "data";
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

namespace {
bool g_logging = true;
std::mutex g_log_mutex;
}  // namespace

void set_logging(bool enabled) { g_logging = enabled; }

void log_kv(std::initializer_list<std::pair<std::string, std::string>> fields) {
  if (!g_logging) return;
  std::string line;
  for (const auto& [k, v] : fields) {
    if (!line.empty()) line += ' ';
    line += k;
    line += '=';
    line += v;
  }
  std::lock_guard lock(g_log_mutex);
  std::cerr << line << '\n';
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace fvforge
