#include <doctest.h>

#include <string>
#include <vector>

#include "nwlab/nw.hpp"

using namespace nwlab;

namespace {

std::vector<std::string> all_strings(int length) {
  std::vector<std::string> out{""};
  for (int p = 0; p < length; ++p) {
    std::vector<std::string> next;
    next.reserve(out.size() * kAlphabetSize);
    for (const auto& s : out)
      for (char c : kAlphabet) next.push_back(s + c);
    out = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("alphabet indexing is the canonical order") {
  CHECK(symbol_index('A') == 0);
  CHECK(symbol_index('C') == 1);
  CHECK(symbol_index('G') == 2);
  CHECK(symbol_index('T') == 3);
  CHECK(is_symbol('G'));
  CHECK(!is_symbol('U'));
  CHECK_THROWS_AS(symbol_index('U'), Error);
}

TEST_CASE("scoring scheme rejects degenerate parameters") {
  CHECK_NOTHROW(ScoringScheme{});
  CHECK_THROWS_AS(ScoringScheme(1, 1, -1), Error);
  CHECK_THROWS_AS(ScoringScheme(1, 2, -1), Error);
  CHECK_THROWS_AS(ScoringScheme(5, -4, 1), Error);
  CHECK_THROWS_AS(ScoringScheme(-2, -4, -1), Error);
  const ScoringScheme s;
  CHECK(s.substitution('A', 'A') == 5);
  CHECK(s.substitution('A', 'T') == -4);
}

TEST_CASE("sequence pair validation") {
  CHECK_THROWS_AS(SequencePair("AC", "A"), Error);
  CHECK_THROWS_AS(SequencePair("", ""), Error);
  CHECK_THROWS_AS(SequencePair("AX", "AC"), Error);
  const SequencePair p("ACGT", "TGCA");
  CHECK(p.length() == 4);
}

TEST_CASE("score matrix on frozen hand-worked pairs") {
  const ScoringScheme s;

  SUBCASE("length 1, equal symbols") {
    const ScoreMatrix m = nw_matrix(SequencePair("A", "A"), s);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 0);
    CHECK(m(0, 1) == -5);
    CHECK(m(1, 0) == -5);
    CHECK(m(1, 1) == 5);
  }

  SUBCASE("length 2, one mismatch") {
    const ScoreMatrix m = nw_matrix(SequencePair("AC", "AG"), s);
    ScoreMatrix want(3, 3);
    want << 0, -5, -10,
            -5, 5, 0,
            -10, 0, 1;
    CHECK(m == want);
  }

  SUBCASE("identical sequences score match down the diagonal") {
    const ScoreMatrix m = nw_matrix(SequencePair("GATTA", "GATTA"), s);
    REQUIRE(m.rows() == 6);
    for (int i = 0; i <= 5; ++i) CHECK(m(i, i) == 5 * i);
  }
}

TEST_CASE("boundary rows and columns follow the gap progression") {
  const ScoringScheme s(3, -1, -2);
  const ScoreMatrix m = nw_matrix(SequencePair("ACGT", "TTTT"), s);
  for (int i = 0; i <= 4; ++i) {
    CHECK(m(i, 0) == -2 * i);
    CHECK(m(0, i) == -2 * i);
  }
}

TEST_CASE("every cell stays inside the admissible score range") {
  const ScoringScheme s;
  Rng rng(7u);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 1 + static_cast<int>(rng.next_below(5));
    std::string x, y;
    for (int p = 0; p < len; ++p) {
      x += kAlphabet[rng.next_below(4)];
      y += kAlphabet[rng.next_below(4)];
    }
    const ScoreMatrix m = nw_matrix(SequencePair(x, y), s);
    CHECK(m.minCoeff() >= s.cell_min(len));
    CHECK(m.maxCoeff() <= s.cell_max(len));
  }
  CHECK(s.cell_min(5) == -50);
  CHECK(s.cell_max(5) == 25);
}

TEST_CASE("path-walk oracle agrees with the recurrence on frozen cells") {
  const ScoringScheme s;
  CHECK(nw_oracle_cell(SequencePair("A", "C"), s, 1, 1) == -4);
  CHECK(nw_oracle_cell(SequencePair("AGT", "CCA"), s, 0, 3) == -15);
  CHECK(nw_oracle_cell(SequencePair("AC", "AG"), s, 2, 2) == 1);
}

TEST_CASE("path-walk oracle matches the full matrix for every short pair") {
  const ScoringScheme s;
  for (int len = 1; len <= 2; ++len) {
    const auto strings = all_strings(len);
    for (const auto& x : strings) {
      for (const auto& y : strings) {
        const SequencePair pair(x, y);
        const ScoreMatrix m = nw_matrix(pair, s);
        for (int i = 0; i <= len; ++i)
          for (int j = 0; j <= len; ++j)
            CHECK(m(i, j) == nw_oracle_cell(pair, s, i, j));
      }
    }
  }
}

TEST_CASE("oracle refuses sequences past its enumeration cap") {
  const ScoringScheme s;
  CHECK_THROWS_AS(nw_oracle_cell(SequencePair("ACGTA", "ACGTA"), s, 0, 0),
                  Error);
  CHECK_NOTHROW(nw_oracle_cell(SequencePair("ACGT", "ACGT"), s, 4, 4));
}
