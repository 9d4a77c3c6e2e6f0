#include "sgfm/util.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sgfm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> stream) {
  std::uint64_t h = mix64(seed);
  for (auto s : stream) h = mix64(h ^ mix64(s + 0x632be59bd9b4e019ULL));
  return h;
}

std::uint64_t hash_values(std::span<const double> values, std::uint64_t h) {
  for (double v : values) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

namespace {
std::atomic<int> thread_limit{0};
}

int max_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("SGFM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) hw = std::min(v, hw);
  }
  const int cap = thread_limit.load();
  return cap > 0 ? std::min(cap, hw) : hw;
}

ScopedThreadLimit::ScopedThreadLimit(int limit)
    : previous_(thread_limit.exchange(limit)) {}

ScopedThreadLimit::~ScopedThreadLimit() { thread_limit.store(previous_); }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t)>& fn) {
  const auto workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sgfm
