#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace morphofuse {

/// World-space point or direction, millimetres.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Integer voxel coordinate.
struct Index3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend auto operator<=>(const Index3&, const Index3&) = default;
};

enum class ErrorCode {
  parse,
  size_mismatch,
  invalid_argument,
  degenerate_range,
  out_of_range,
  not_found,
  insufficient_structure,
  unsupported,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::size_mismatch: return "size-mismatch";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::degenerate_range: return "degenerate-range";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::insufficient_structure: return "insufficient-structure";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Marker stored in per-vertex fields where no value could be computed.
inline constexpr double kUnmapped = std::numeric_limits<double>::quiet_NaN();

inline bool is_unmapped(double v) { return v != v; }

/// Worker count: explicit request, else MORPHOFUSE_THREADS, else 1.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MORPHOFUSE_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) over `threads` workers with static striding.
/// Each index is visited exactly once; callers write to disjoint slots.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace morphofuse
