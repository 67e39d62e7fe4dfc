#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace slicevlp::diff {

std::uint64_t fnv1a64(std::string_view text) noexcept;

// Named sub-seed so each stochastic subsystem can be varied independently.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

struct RngState {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

// Counter-based generator: draw k is a fixed bijective mix of (key, k), so the
// full state is two integers and sequences are identical on every platform.
// Sampling helpers are implemented here rather than with <random>
// distributions, whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_{seed, 0} {}
  explicit Rng(RngState state) : state_(state) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via Box-Muller (one draw per call, no cached pair).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  const RngState& state() const noexcept { return state_; }

 private:
  RngState state_;
};

}  // namespace slicevlp::diff
