#include "nwlab/nw.hpp"

#include <algorithm>
#include <limits>

namespace nwlab {

bool is_symbol(char c) noexcept {
  return c == 'A' || c == 'C' || c == 'G' || c == 'T';
}

int symbol_index(char c) {
  switch (c) {
    case 'A':
      return 0;
    case 'C':
      return 1;
    case 'G':
      return 2;
    case 'T':
      return 3;
    default:
      throw Error(ErrorCode::config,
                  std::string("symbol outside alphabet: '") + c + "'");
  }
}

ScoringScheme::ScoringScheme(int match, int mismatch, int gap)
    : match_score(match), mismatch_score(mismatch), gap_penalty(gap) {
  if (match <= mismatch)
    throw Error(ErrorCode::config,
                "degenerate scoring: match must exceed mismatch");
  if (gap > 0)
    throw Error(ErrorCode::config, "gap penalty must be non-positive");
  if (match < 0)
    throw Error(ErrorCode::config, "match score must be non-negative");
}

SequencePair::SequencePair(std::string x_in, std::string y_in)
    : x(std::move(x_in)), y(std::move(y_in)) {
  if (x.size() != y.size())
    throw Error(ErrorCode::config, "sequence pair lengths differ");
  if (x.empty()) throw Error(ErrorCode::config, "sequence pair is empty");
  for (char c : x) symbol_index(c);
  for (char c : y) symbol_index(c);
}

ScoreMatrix nw_matrix(const SequencePair& pair, const ScoringScheme& scoring) {
  const int n = pair.length();
  ScoreMatrix m(n + 1, n + 1);
  const int g = scoring.gap_penalty;

  m(0, 0) = 0;
  for (int i = 1; i <= n; ++i) m(i, 0) = i * g;
  for (int j = 1; j <= n; ++j) m(0, j) = j * g;

  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      const int diag =
          m(i - 1, j - 1) + scoring.substitution(pair.x[static_cast<std::size_t>(i - 1)],
                                                 pair.y[static_cast<std::size_t>(j - 1)]);
      const int up = m(i - 1, j) + g;
      const int left = m(i, j - 1) + g;
      m(i, j) = std::max({diag, up, left});
    }
  }
  return m;
}

namespace {

// Depth-first walk over every monotone path from (0,0) to (i,j), scoring the
// alignment move by move. No table reuse, no memoization: this is the
// independent route the generator is checked against.
int best_path_score(const SequencePair& pair, const ScoringScheme& scoring,
                    int i, int j) {
  if (i == 0 && j == 0) return 0;
  int best = std::numeric_limits<int>::min();
  if (i > 0 && j > 0) {
    const int s = scoring.substitution(pair.x[static_cast<std::size_t>(i - 1)],
                                       pair.y[static_cast<std::size_t>(j - 1)]);
    best = std::max(best, best_path_score(pair, scoring, i - 1, j - 1) + s);
  }
  if (i > 0)
    best = std::max(best, best_path_score(pair, scoring, i - 1, j) +
                              scoring.gap_penalty);
  if (j > 0)
    best = std::max(best, best_path_score(pair, scoring, i, j - 1) +
                              scoring.gap_penalty);
  return best;
}

}  // namespace

int nw_oracle_cell(const SequencePair& pair, const ScoringScheme& scoring,
                   int i, int j, int oracle_limit) {
  if (pair.length() > oracle_limit)
    throw Error(ErrorCode::oracle_limit,
                "oracle limited to length " + std::to_string(oracle_limit) +
                    ", got " + std::to_string(pair.length()));
  if (i < 0 || j < 0 || i > pair.length() || j > pair.length())
    throw Error(ErrorCode::config, "oracle cell out of range");
  return best_path_score(pair, scoring, i, j);
}

}  // namespace nwlab
