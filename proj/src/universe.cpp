#include "nwlab/universe.hpp"

#include <algorithm>
#include <unordered_set>

namespace nwlab {

u128 pow_u128(u128 base, int exponent) {
  if (exponent < 0) throw Error(ErrorCode::config, "negative exponent");
  u128 result = 1;
  for (int i = 0; i < exponent; ++i) {
    const u128 next = result * base;
    if (base != 0 && next / base != result)
      throw Error(ErrorCode::config, "universe size overflows 128 bits");
    result = next;
  }
  return result;
}

u128 nw_universe_size(int length) {
  if (length < 1 || length > 31)
    throw Error(ErrorCode::config, "sequence length out of range");
  return pow_u128(4, 2 * length);
}

SequencePair nw_index_to_pair(u128 index, int length) {
  if (index >= nw_universe_size(length))
    throw Error(ErrorCode::config, "universe index out of range");
  std::string concat(static_cast<std::size_t>(2 * length), 'A');
  for (int k = 2 * length - 1; k >= 0; --k) {
    concat[static_cast<std::size_t>(k)] =
        kAlphabet[static_cast<std::size_t>(index % 4)];
    index /= 4;
  }
  return SequencePair(concat.substr(0, static_cast<std::size_t>(length)),
                      concat.substr(static_cast<std::size_t>(length)));
}

u128 nw_pair_to_index(const SequencePair& pair) {
  u128 index = 0;
  for (char c : pair.x) index = index * 4 + static_cast<u128>(symbol_index(c));
  for (char c : pair.y) index = index * 4 + static_cast<u128>(symbol_index(c));
  return index;
}

u128 arithmetic_universe_size(int digits) {
  if (digits < 1 || digits > 19)
    throw Error(ErrorCode::config, "digit count out of range");
  return pow_u128(10, 2 * digits);
}

std::pair<std::uint64_t, std::uint64_t> arithmetic_index_to_operands(
    u128 index, int digits) {
  if (index >= arithmetic_universe_size(digits))
    throw Error(ErrorCode::config, "universe index out of range");
  const u128 base = pow_u128(10, digits);
  return {static_cast<std::uint64_t>(index / base),
          static_cast<std::uint64_t>(index % base)};
}

u128 arithmetic_operands_to_index(std::uint64_t a, std::uint64_t b,
                                  int digits) {
  const u128 base = pow_u128(10, digits);
  if (a >= base || b >= base)
    throw Error(ErrorCode::config, "operand exceeds digit budget");
  return static_cast<u128>(a) * base + b;
}

PairUniverse::PairUniverse(int length)
    : length_(length), size_(nw_universe_size(length)) {}

namespace {

struct U128Hash {
  std::size_t operator()(u128 v) const noexcept {
    return static_cast<std::size_t>(
        mix64(static_cast<std::uint64_t>(v) ^
              mix64(static_cast<std::uint64_t>(v >> 64))));
  }
};

using IndexSet = std::unordered_set<u128, U128Hash>;

// Rejection sampling stalls when the request nearly drains the universe, so
// dense draws from small universes fall back to a partial shuffle of the
// remaining pool. The branch depends only on sizes, never on the seed, so
// determinism is preserved.
std::vector<u128> draw_distinct(Rng& rng, u128 universe_size,
                                std::uint64_t count, const IndexSet& excluded) {
  std::vector<u128> out;
  out.reserve(count);
  if (count == 0) return out;

  const u128 available = universe_size - excluded.size();
  constexpr u128 kShuffleCap = u128{1} << 22;
  if (universe_size <= kShuffleCap && static_cast<u128>(count) * 2 > available) {
    std::vector<u128> pool;
    pool.reserve(static_cast<std::size_t>(available));
    for (u128 v = 0; v < universe_size; ++v)
      if (!excluded.count(v)) pool.push_back(v);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t j = i + rng.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

  IndexSet seen;
  seen.reserve(count * 2);
  while (out.size() < count) {
    const u128 v = rng.next_below_u128(universe_size);
    if (excluded.count(v) != 0 || !seen.insert(v).second) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace

SplitIndices sample_split_indices(u128 universe_size, std::uint64_t train_size,
                                  std::uint64_t val_size,
                                  std::uint64_t train_seed,
                                  std::uint64_t validation_seed) {
  if (universe_size == 0)
    throw Error(ErrorCode::config, "empty universe");
  if (static_cast<u128>(train_size) + val_size > universe_size)
    throw Error(ErrorCode::oversubscribed,
                "OVERSUBSCRIBED: train " + std::to_string(train_size) +
                    " + validation " + std::to_string(val_size) +
                    " exceeds universe " + u128_to_string(universe_size));

  SplitIndices split;
  Rng val_rng(validation_seed);
  split.validation = draw_distinct(val_rng, universe_size, val_size, {});

  IndexSet taken(split.validation.begin(), split.validation.end());
  Rng train_rng(train_seed);
  split.train = draw_distinct(train_rng, universe_size, train_size, taken);
  return split;
}

}  // namespace nwlab
