#ifndef FEDMD_PARALLEL_HPP
#define FEDMD_PARALLEL_HPP

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fedmd {

/// Worker cap: FEDMD_THREADS when set, otherwise the hardware concurrency.
inline int thread_cap() {
  if (const char* env = std::getenv("FEDMD_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(0..n-1); tasks must be independent. Results do not depend on the
/// thread count because each index owns its outputs.
inline void parallel_for(std::size_t n, int max_threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = static_cast<std::size_t>(max_threads > 0 ? max_threads : 1);
  if (workers > n) workers = n;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fedmd

#endif  // FEDMD_PARALLEL_HPP
