#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hetdqcd {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Maps a 128-bit counter under a 64-bit key to 128
/// pseudo-random bits; used here only to derive independent stream seeds.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// xoshiro256++ (Blackman & Vigna). 32 bytes of state, so one engine per
/// simulated sensor stays cheap to store and resume.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  Xoshiro256pp() noexcept : state_{0x9E3779B97F4A7C15ull, 0xBF58476D1CE4E5B9ull, 0x94D049BB133111EBull, 1ull} {}
  explicit Xoshiro256pp(const std::array<std::uint64_t, 4>& state) noexcept : state_(state) {
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[3] = 1;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  friend bool operator==(const Xoshiro256pp&, const Xoshiro256pp&) = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_;
};

/// Purpose tags keeping streams for different experiments disjoint.
enum class StreamDomain : std::uint16_t {
  PreChange = 1,
  PostChange = 2,
  ChangeAt = 3,
  LocalPool = 4,
  Compose = 5,
  OrderStatistic = 6,
  User = 7,
};

/// Address of one random stream. Every (seed, domain, trial, sensor) tuple
/// yields an independent engine, so results never depend on which worker
/// ran which trial.
struct StreamKey {
  std::uint64_t seed = 0;
  StreamDomain domain = StreamDomain::User;
  std::uint64_t trial = 0;
  std::uint32_t sensor = 0;
};

inline Xoshiro256pp make_engine(const StreamKey& key) noexcept {
  const Philox4x32::Key k{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)};
  std::array<std::uint64_t, 4> state{};
  for (std::uint32_t blk = 0; blk < 2; ++blk) {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(key.trial), static_cast<std::uint32_t>(key.trial >> 32),
                                  key.sensor, (static_cast<std::uint32_t>(key.domain) << 16) | blk};
    const auto out = Philox4x32::block(ctr, k);
    state[2 * blk] = (std::uint64_t{out[1]} << 32) | out[0];
    state[2 * blk + 1] = (std::uint64_t{out[3]} << 32) | out[2];
  }
  return Xoshiro256pp(state);
}

}  // namespace hetdqcd
