#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

namespace sgfm {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a parent seed and a list of stream indices.
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> stream);

/// Content hash of a sequence of doubles (bit patterns, order-sensitive).
std::uint64_t hash_values(std::span<const double> values,
                          std::uint64_t h = 0x9e3779b97f4a7c15ULL);

/// Worker count: SGFM_THREADS if set and positive, else hardware concurrency.
int max_threads();

/// Caps max_threads() while alive; used to pin timing runs to one thread.
class ScopedThreadLimit {
 public:
  explicit ScopedThreadLimit(int limit);
  ~ScopedThreadLimit();
  ScopedThreadLimit(const ScopedThreadLimit&) = delete;
  ScopedThreadLimit& operator=(const ScopedThreadLimit&) = delete;

 private:
  int previous_;
};

/// Runs fn(i) for i in [0, count). Work is split in contiguous chunks; the
/// caller is responsible for writing results to per-index slots.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

/// Raised when an integrator or sampler produces non-finite values.
class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace sgfm
