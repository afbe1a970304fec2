#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nwlab/task.hpp"

namespace nwlab {

inline const std::string kPadToken = "_";
inline const std::string kSeparatorToken = "|";
inline const std::string kBeginTargetToken = ">";
inline const std::string kBitTokens[2] = {"B0", "B1"};

// Token <-> id bijection for one task. Id 0 is always the pad/blank; the
// remaining ids are assigned in a fixed construction order so equal specs
// give identical tables.
class Vocabulary {
 public:
  static Vocabulary for_task(const TaskSpec& spec);

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const noexcept {
    return ids_.count(token) != 0;
  }
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;

  int pad_id() const noexcept { return 0; }
  int separator_id() const noexcept { return separator_id_; }
  int begin_target_id() const noexcept { return begin_target_id_; }
  bool has_bit_tokens() const noexcept { return bit0_id_ >= 0; }
  int bit_id(int bit) const;

  // Plain-text table, one "id<TAB>token" line per entry, for audit files.
  std::string serialize() const;
  static Vocabulary parse(const std::string& text);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int separator_id_ = -1;
  int begin_target_id_ = -1;
  int bit0_id_ = -1;
};

// Half-open index interval into a token sequence.
struct Span {
  int begin = 0;
  int end = 0;
  int size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  bool operator==(const Span&) const = default;
};

// Layout: [x][sep][y][sep][begin-of-target][target cells][suffix bits].
// The input span runs up to the begin-of-target sentinel; target and suffix
// cover exactly the positions scored by losses and exact-match metrics.
struct TokenizedExample {
  std::vector<int> ids;
  Span input;
  Span target;
  Span suffix;
};

TokenizedExample encode(const Example& example, const Vocabulary& vocab);

// Inverse of encode on symbolic content. The universe index is not part of
// the token stream, so the decoded example carries index 0.
Example decode(const TokenizedExample& tokenized, const Vocabulary& vocab);

// Every example of a fixed task encodes to this length.
int encoded_length(const TaskSpec& spec);

}  // namespace nwlab
