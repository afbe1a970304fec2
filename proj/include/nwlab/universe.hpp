#pragma once

#include <cstdint>
#include <iterator>
#include <utility>
#include <vector>

#include "nwlab/common.hpp"
#include "nwlab/nw.hpp"

namespace nwlab {

u128 pow_u128(u128 base, int exponent);

// ---------------------------------------------------------------------------
// Index <-> instance bijections. The canonical order for sequence pairs is
// base-4 over the concatenation x.y with A<C<G<T, most significant digit
// first; for arithmetic it is a*10^d + b. Every split, dataset record, and
// suffix draw keys off these indices, so the order is frozen.
// ---------------------------------------------------------------------------

u128 nw_universe_size(int length);
SequencePair nw_index_to_pair(u128 index, int length);
u128 nw_pair_to_index(const SequencePair& pair);

u128 arithmetic_universe_size(int digits);
std::pair<std::uint64_t, std::uint64_t> arithmetic_index_to_operands(
    u128 index, int digits);
u128 arithmetic_operands_to_index(std::uint64_t a, std::uint64_t b,
                                  int digits);

// Lazy view over all 4^{2L} pairs in canonical order.
class PairUniverse {
 public:
  explicit PairUniverse(int length);

  int length() const noexcept { return length_; }
  u128 size() const noexcept { return size_; }
  SequencePair pair_at(u128 index) const {
    return nw_index_to_pair(index, length_);
  }

  class iterator {
   public:
    using value_type = SequencePair;
    using difference_type = std::ptrdiff_t;
    using iterator_category = std::input_iterator_tag;

    iterator(const PairUniverse* universe, u128 index)
        : universe_(universe), index_(index) {}
    SequencePair operator*() const { return universe_->pair_at(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator!=(const iterator& other) const {
      return index_ != other.index_;
    }
    bool operator==(const iterator& other) const {
      return index_ == other.index_;
    }

   private:
    const PairUniverse* universe_;
    u128 index_;
  };

  iterator begin() const { return iterator(this, 0); }
  iterator end() const { return iterator(this, size_); }

 private:
  int length_;
  u128 size_;
};

// ---------------------------------------------------------------------------
// Disjoint split sampling. The validation pool is drawn first from its own
// seed so it stays fixed while the train seed varies; train indices are then
// rejection-sampled outside it. Near-full requests switch to a partial
// shuffle of the remaining pool so the draw always terminates.
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<u128> train;
  std::vector<u128> validation;
};

// "val_seed" in ASCII; the validation pool must not move when run seeds do.
inline constexpr std::uint64_t kDefaultValidationSeed = 0x76616C5F73656564ULL;

SplitIndices sample_split_indices(
    u128 universe_size, std::uint64_t train_size, std::uint64_t val_size,
    std::uint64_t train_seed,
    std::uint64_t validation_seed = kDefaultValidationSeed);

}  // namespace nwlab
