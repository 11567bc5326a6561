#include "currentfit/common.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace currentfit {

std::string format_full(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string hex64(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void parallel_for(Index count, int jobs, const std::function<void(Index)>& fn) {
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Index>(jobs, count));
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const Index i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace currentfit
