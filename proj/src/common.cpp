#include "splatreorg/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace splatreorg {

int thread_budget() {
  static const int budget = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("REORG_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) return static_cast<int>(std::min<long>(v, 256));
    }
    return hw;
  }();
  return budget;
}

namespace detail {

void run_chunked(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk) {
  if (n <= 0) return;
  const int threads = std::min<std::int64_t>(thread_budget(), n);
  if (threads <= 1 || n < 256) {
    chunk(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::int64_t per = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::int64_t begin = t * per;
    const std::int64_t end = std::min<std::int64_t>(begin + per, n);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        chunk(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail
}  // namespace splatreorg
