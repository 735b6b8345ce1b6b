#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace qmeas {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// splitmix64 step: advance by the golden-ratio increment, then finalize.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += kGolden;
  return mix64(state);
}

inline double u64_to_unit(std::uint64_t x) {
  // (0, 1]: never zero, so it is safe under log().
  return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

}  // namespace detail

// Counter-based pseudo-random stream. Every draw is a pure function of the
// (key, stream, counter) triple, so independent streams can be handed to
// concurrent workers without shared state and replayed exactly.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0)
      : state_(detail::mix64(detail::mix64(key + detail::kGolden) ^
                             (stream * 0xD1B54A32D192ED03ull))) {}

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform in (0, 1].
  double next_unit() { return detail::u64_to_unit(next_u64()); }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Identifies one trajectory's noise stream: (master_seed, trajectory_index)
// map to a reproducible sequence of Ito increments independent of all other
// trajectories.
struct TrajectorySeed {
  std::uint64_t master_seed = 0;
  std::uint64_t trajectory_index = 0;
};

// Per-step Gaussian pair addressed by step index. Stateless: the pair for a
// given step does not depend on the order steps are queried in.
class NoiseStream {
 public:
  explicit NoiseStream(TrajectorySeed seed)
      : base_(detail::mix64(detail::mix64(seed.master_seed + detail::kGolden) ^
                            (seed.trajectory_index * 0xD1B54A32D192ED03ull))) {}

  NoiseStream(std::uint64_t master_seed, std::uint64_t trajectory_index)
      : NoiseStream(TrajectorySeed{master_seed, trajectory_index}) {}

  // Two independent standard normal draws for the given step.
  std::pair<double, double> gaussian_pair(std::uint64_t step) const {
    std::uint64_t h = base_ + step * detail::kGolden;
    const double u1 = detail::u64_to_unit(detail::mix64(h));
    const double u2 = detail::u64_to_unit(detail::mix64(h + 0x6A09E667F3BCC909ull));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

 private:
  std::uint64_t base_;
};

}  // namespace qmeas
