#pragma once

// Work is split into a fixed number of chunks whose partial results are
// merged in chunk order by the caller. The partition never depends on the
// thread count, so results are bitwise identical for any number of threads.

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace tuckergd {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
  return n;
}
/// Set inside worker threads so nested regions run serially.
inline thread_local bool in_parallel_region = false;
}  // namespace detail

inline int num_threads() { return detail::thread_setting().load(); }
inline void set_num_threads(int n) { detail::thread_setting().store(std::max(1, n)); }

/// Calls fn(c) for c in [0, chunks), spread over up to num_threads() threads.
template <class Fn>
void parallel_chunks(int chunks, Fn&& fn) {
  const int threads = detail::in_parallel_region ? 1 : std::min(num_threads(), chunks);
  if (threads <= 1) {
    for (int c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      detail::in_parallel_region = true;
      for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) fn(c);
    });
  }
}

/// [begin, end) of chunk c when n items are split into `chunks` pieces.
inline std::pair<long, long> chunk_range(long n, int chunks, int c) {
  const long base = n / chunks;
  const long extra = n % chunks;
  const long begin = c * base + std::min<long>(c, extra);
  return {begin, begin + base + (c < extra ? 1 : 0)};
}

}  // namespace tuckergd
