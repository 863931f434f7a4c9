#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace qsplit {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

/// Hex-encoded SHA-256 digest of `data`.
std::string sha256_hex(std::string_view data);

/// Number of worker threads to use; `requested == 0` means hardware concurrency.
unsigned effective_threads(unsigned requested);

/// Run fn(0..n-1) on up to `threads` workers. Exceptions from workers are
/// rethrown on the calling thread. Items must write to disjoint output slots.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace qsplit
