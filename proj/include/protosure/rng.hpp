#pragma once

// Platform-independent pseudo-random streams. The standard library's
// distributions are implementation-defined, so every draw here is derived
// directly from a splitmix64 bit stream.
//
// Stream splitting: a run has one master seed; component `s` receives the
// seed stream_seed(master, s) = splitmix64(master ^ (0x9E3779B97F4A7C15 * (s + 1))).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace protosure {

enum class Stream : std::uint64_t {
  Parameters = 1,
  KMeans = 2,
  Shuffle = 3,
  Synthetic = 4,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_seed(std::uint64_t master, Stream stream);
std::uint64_t fnv1a64(std::span<const char> bytes);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n) by rejection; n >= 1.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace protosure
