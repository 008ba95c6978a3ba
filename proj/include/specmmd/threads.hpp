#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace specmmd::threads {

namespace detail {
inline std::atomic<int>& configured() {
  static std::atomic<int> n{0};  // 0 = auto
  return n;
}
inline thread_local int nesting_depth = 0;
}  // namespace detail

/// 0 selects hardware concurrency.
inline void set_num_threads(int n) { detail::configured().store(n < 0 ? 0 : n); }

inline int num_threads() {
  int n = detail::configured().load();
  if (n == 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n == 0) n = 1;
  }
  return n;
}

/// Runs body(i) for i in [begin, end) on a static contiguous partition.
/// Each index is processed exactly once by exactly one thread, so output
/// written to per-index slots is identical for every thread count. Nested
/// calls run serially.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body) {
  const std::size_t count = end > begin ? end - begin : 0;
  const int threads = num_threads();
  if (count == 0) return;
  if (threads <= 1 || count == 1 || detail::nesting_depth > 0) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body]() {
      detail::nesting_depth = 1;
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace specmmd::threads
