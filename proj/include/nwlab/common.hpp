#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nwlab {

// Universe indices can exceed 64 bits (10^{2d} pairs for d-digit arithmetic),
// so they are carried as unsigned 128-bit integers throughout.
using u128 = unsigned __int128;

std::string u128_to_string(u128 v);
u128 u128_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Errors. Codes map onto the CLI exit conventions: config = 2, data = 3,
// verification = 4.
// ---------------------------------------------------------------------------

enum class ErrorCode {
  config,
  oversubscribed,
  out_of_vocabulary,
  shape_mismatch,
  sequence_too_long,
  empty_region,
  oracle_limit,
  verification,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

int exit_code_for(ErrorCode code) noexcept;

// ---------------------------------------------------------------------------
// Deterministic randomness. The standard <random> distributions are
// implementation-defined, which would break byte-stable datasets across
// platforms, so the generator and every draw on top of it are spelled out
// here: splitmix64 seeding, xoshiro256++ stream, Lemire bounded draws,
// Box-Muller normals.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// One-shot mix of a value into a well-spread 64-bit hash.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  std::uint64_t s = x;
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next() noexcept {
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

  // Uniform draw in [0, bound) without modulo bias.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

  // Same contract for 128-bit bounds (universe indices past 2^64).
  u128 next_below_u128(u128 bound) noexcept;

  // Uniform in [0,1) with 53 random bits.
  double next_unit() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller, one spare cached.
  double next_normal() noexcept;

  // Serializable state, used by checkpoints.
  std::uint64_t state_word(int i) const noexcept { return state_[i]; }
  void set_state(std::uint64_t s0, std::uint64_t s1, std::uint64_t s2,
                 std::uint64_t s3) noexcept {
    state_[0] = s0;
    state_[1] = s1;
    state_[2] = s2;
    state_[3] = s3;
    has_spare_ = false;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Keyed pseudo-random 64-bit word for (seed, universe index). Stable per
// example regardless of generation order; suffix bits are sliced from it.
std::uint64_t keyed_word(std::uint64_t seed, u128 index) noexcept;

// FNV-1a, used for file checksums and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t n) noexcept;
std::uint64_t fnv1a64(const std::string& s) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace nwlab
