#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dulqa {

// Static-partition parallel loop. fn(i) must be independent across i and write
// only to per-index slots; with that discipline the results are identical for
// any thread count. If several workers throw, the exception from the lowest
// block is rethrown.
inline void parallel_for(std::size_t count, int n_threads,
                         const std::function<void(std::size_t)>& fn) {
  const int workers =
      std::max(1, std::min<int>(n_threads, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = count * static_cast<std::size_t>(w) /
                           static_cast<std::size_t>(workers);
    const std::size_t hi = count * static_cast<std::size_t>(w + 1) /
                           static_cast<std::size_t>(workers);
    pool.emplace_back([lo, hi, w, &fn, &errors] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dulqa
