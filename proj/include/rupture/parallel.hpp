#pragma once

// Fixed-partition parallel loops. Chunk boundaries depend only on the problem size, so
// chunk-wise reductions summed in chunk order are bitwise independent of the thread count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace rupture {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{1};
  return n;
}
}  // namespace detail

inline unsigned thread_count() noexcept { return detail::thread_setting().load(); }
inline void set_thread_count(unsigned n) noexcept { detail::thread_setting().store(std::max(1u, n)); }

inline constexpr std::size_t kChunkCount = 64;

/// Calls fn(chunk, begin, end) for kChunkCount contiguous chunks of [0, size).
template <class Fn>
void parallel_chunks(std::size_t size, Fn&& fn) {
  const std::size_t chunks = std::min<std::size_t>(kChunkCount, std::max<std::size_t>(size, 1));
  auto bounds = [&](std::size_t c) { return size * c / chunks; };
  const unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c, bounds(c), bounds(c + 1));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
      try {
        fn(c, bounds(c), bounds(c + 1));
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Calls fn(i) for every i in [0, count); order of side effects is unspecified.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  parallel_chunks(count, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace rupture
