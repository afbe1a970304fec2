#pragma once

#include <Eigen/Dense>
#include <string>

#include "nwlab/common.hpp"

namespace nwlab {

// DNA alphabet, canonical order A < C < G < T.
inline constexpr char kAlphabet[4] = {'A', 'C', 'G', 'T'};
inline constexpr int kAlphabetSize = 4;

int symbol_index(char c);  // throws on a symbol outside the alphabet
bool is_symbol(char c) noexcept;

// Match/mismatch/gap scores for global alignment. Construction rejects
// degenerate schemes: match must beat mismatch, the gap penalty must be
// non-positive and the match score non-negative (the cell-value range bound
// below relies on both signs).
struct ScoringScheme {
  int match_score = 5;
  int mismatch_score = -4;
  int gap_penalty = -5;

  ScoringScheme() = default;
  ScoringScheme(int match, int mismatch, int gap);

  int substitution(char a, char b) const noexcept {
    return a == b ? match_score : mismatch_score;
  }

  // Every cell of every length-L score matrix lies in
  // [2L * min(mismatch, gap), L * match]; the token vocabulary is sized
  // from these bounds.
  int cell_min(int length) const noexcept {
    return 2 * length * std::min(mismatch_score, gap_penalty);
  }
  int cell_max(int length) const noexcept { return length * match_score; }

  bool operator==(const ScoringScheme&) const = default;
};

// Two equal-length strings over the alphabet.
struct SequencePair {
  std::string x;
  std::string y;

  SequencePair() = default;
  SequencePair(std::string x_in, std::string y_in);

  int length() const noexcept { return static_cast<int>(x.size()); }
};

// The (L+1) x (L+1) global-alignment score table.
using ScoreMatrix = Eigen::MatrixXi;

// Fill the full table: zero origin, gap-penalty progressions along the first
// row and column, max-of-three recurrence everywhere else.
ScoreMatrix nw_matrix(const SequencePair& pair, const ScoringScheme& scoring);

// Independent check of a single cell: the optimal score over all global
// alignments of the prefixes x[0..i) and y[0..j), found by walking every
// monotone lattice path from the origin to (i, j) explicitly. Exponential in
// i + j; rejects pairs longer than `oracle_limit`.
inline constexpr int kOracleLengthLimit = 4;
int nw_oracle_cell(const SequencePair& pair, const ScoringScheme& scoring,
                   int i, int j, int oracle_limit = kOracleLengthLimit);

}  // namespace nwlab
