#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gtwr {

// Thread count resolution: explicit request > GTWR_THREADS env var > hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GTWR_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("GTWR_THREADS must be a positive integer, got '" +
                                  std::string(env) + "'");
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, count) across a fixed pool.  Work items must write
// only to their own output slots; chunked self-scheduling keeps the result
// independent of interleaving.
template <typename Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
  threads = static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(threads, count)));
  if (threads == 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  const std::int64_t chunk = std::max<std::int64_t>(1, count / (8 * threads));
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::mutex to_protect_error;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const std::int64_t begin = next.fetch_add(chunk);
        if (begin >= count || failed.load()) return;
        const std::int64_t end = std::min(count, begin + chunk);
        for (std::int64_t i = begin; i < end; ++i) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(to_protect_error);
            if (!failed.exchange(true)) error = std::current_exception();
            return;
          }
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failed.load()) std::rethrow_exception(error);
}

}  // namespace gtwr
