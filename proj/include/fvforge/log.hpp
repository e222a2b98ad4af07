#pragma once

#include <initializer_list>
#include <string>
#include <utility>

namespace fvforge {

/// Emits one machine-readable `key=value ...` line on standard error.
void log_kv(std::initializer_list<std::pair<std::string, std::string>> fields);

/// Silences log_kv (tests keep their output readable).
void set_logging(bool enabled);

std::string fmt_double(double v);

}  // namespace fvforge
