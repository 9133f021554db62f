#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace rspde {

// Process-wide worker count. 0 means "use hardware concurrency".
// Set once by the CLI from --threads / RSPDE_THREADS; tests leave it at 1.
int& global_thread_count();

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  return hw > 0 ? hw : 1;
}

// Chunk-free dynamic parallel for. Work item i writes only to slots indexed
// by i, so results never depend on the schedule; reductions are done by the
// caller in index order afterwards.
inline void parallel_for(int n, const std::function<void(int)>& body) {
  const int threads = std::min(effective_threads(global_thread_count()), n);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rspde
