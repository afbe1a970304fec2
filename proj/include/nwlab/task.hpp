#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nwlab/common.hpp"
#include "nwlab/nw.hpp"
#include "nwlab/universe.hpp"

namespace nwlab {

enum class TaskFamily { nw, addition, multiplication };

std::string family_name(TaskFamily family);
TaskFamily family_from_name(const std::string& name);

inline constexpr char kBlank = '_';

// "sfx_seed" in ASCII; suffix bits must survive regeneration, so the key has
// a fixed default rather than deriving from the run seed.
inline constexpr std::uint64_t kDefaultSuffixSeed = 0x7366785F73656564ULL;

struct TaskSpec {
  TaskFamily family = TaskFamily::nw;
  int length = 5;  // L for alignment, digit count for arithmetic
  ScoringScheme scoring{};
  int suffix_bits = 0;
  std::uint64_t suffix_seed = kDefaultSuffixSeed;

  TaskSpec() = default;
  TaskSpec(TaskFamily family_in, int length_in, ScoringScheme scoring_in = {},
           int suffix_bits_in = 0,
           std::uint64_t suffix_seed_in = kDefaultSuffixSeed);
  void validate() const;
};

u128 universe_size(const TaskSpec& spec);
int operand_width(const TaskSpec& spec);
int target_width(const TaskSpec& spec);

// Symbols are kept as short strings: single characters for sequence and
// digit positions, full signed integers for matrix cells.
struct Example {
  std::vector<std::string> x_symbols;
  std::vector<std::string> y_symbols;
  std::vector<std::string> target_symbols;
  std::vector<int> suffix_bits;
  u128 universe_index = 0;

  bool operator==(const Example&) const = default;
};

Example make_example(const TaskSpec& spec, u128 universe_index);
Example arithmetic_example(std::uint64_t a, std::uint64_t b,
                           const TaskSpec& spec);

std::vector<int> suffix_bits_for(std::uint64_t rng_seed, u128 universe_index,
                                 int bit_count);
Example attach_suffix(Example example, int bit_count, std::uint64_t rng_seed);

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::uint64_t seed = 0;
  std::uint64_t validation_seed = kDefaultValidationSeed;
};

DatasetSplit sample_split(const TaskSpec& spec, std::uint64_t train_size,
                          std::uint64_t val_size, std::uint64_t seed,
                          std::uint64_t validation_seed = kDefaultValidationSeed);

// ---------------------------------------------------------------------------
// Dataset files. train.tsv / val.tsv hold one record per line (index, x, y,
// comma-joined target, suffix bit string or "-"); dataset.meta freezes the
// TaskSpec, seeds, sizes, and per-file checksums. Byte-stable for fixed
// inputs.
// ---------------------------------------------------------------------------

std::string format_record(const Example& example);
Example parse_record(const std::string& line);

void write_dataset(const std::filesystem::path& directory,
                   const TaskSpec& spec, const DatasetSplit& split);
DatasetSplit read_dataset(const std::filesystem::path& directory,
                          TaskSpec& spec_out);

// Recomputes every record from its universe index and compares field by
// field. Throws a verification error naming the first mismatch.
void verify_examples(const TaskSpec& spec,
                     const std::vector<Example>& examples);

}  // namespace nwlab
