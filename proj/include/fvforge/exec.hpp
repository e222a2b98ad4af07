#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace fvforge {

/// Selects between the straightforward serial reference kernels and the
/// OpenMP kernels. Parallel kernels reduce over fixed-size chunks in chunk
/// order, so their results do not depend on the thread count.
enum class Exec { serial, parallel };

inline constexpr std::size_t kReduceChunk = 256;

/// Number of fixed-size chunks covering n items.
inline std::size_t chunk_count(std::size_t n) {
  return (n + kReduceChunk - 1) / kReduceChunk;
}

/// Sets the OpenMP thread budget; 0 keeps the runtime default.
void set_thread_count(int threads);
int thread_count();

/// Deterministic parallel reduction. `fn(begin, end, partial)` accumulates
/// items [begin, end) of one fixed-size chunk into a zeroed `partial`; the
/// partials are added into `acc` strictly in chunk order, so the result is
/// bit-identical for any thread count.
template <class ChunkFn>
void ordered_chunk_reduce(std::size_t n, std::vector<double>& acc, ChunkFn&& fn) {
  const std::size_t chunks = chunk_count(n);
  if (chunks == 0) return;
  const std::size_t batch =
      std::min<std::size_t>(chunks, 2 * static_cast<std::size_t>(std::max(1, omp_get_max_threads())));
  std::vector<std::vector<double>> partial(batch, std::vector<double>(acc.size()));
  for (std::size_t first = 0; first < chunks; first += batch) {
    const auto m = static_cast<std::ptrdiff_t>(std::min(batch, chunks - first));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < m; ++j) {
      auto& p = partial[static_cast<std::size_t>(j)];
      std::fill(p.begin(), p.end(), 0.0);
      const std::size_t c = first + static_cast<std::size_t>(j);
      fn(c * kReduceChunk, std::min(n, (c + 1) * kReduceChunk), p);
    }
    for (std::ptrdiff_t j = 0; j < m; ++j) {
      const auto& p = partial[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
  }
}

/// Runs fn(i) for i in [0, n) across threads. Exceptions are captured per
/// index and the lowest-index one is rethrown after the loop.
template <class Fn>
void parallel_for_index(std::size_t n, Fn&& fn, Exec exec = Exec::parallel) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fvforge
