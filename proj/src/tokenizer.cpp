#include "nwlab/tokenizer.hpp"

#include <sstream>

namespace nwlab {

void Vocabulary::add(const std::string& token) {
  if (!ids_.emplace(token, static_cast<int>(tokens_.size())).second)
    throw Error(ErrorCode::config, "duplicate token '" + token + "'");
  tokens_.push_back(token);
}

Vocabulary Vocabulary::for_task(const TaskSpec& spec) {
  spec.validate();
  Vocabulary vocab;
  vocab.add(kPadToken);
  vocab.add(kSeparatorToken);
  vocab.separator_id_ = 1;
  vocab.add(kBeginTargetToken);
  vocab.begin_target_id_ = 2;

  if (spec.family == TaskFamily::nw) {
    for (char c : kAlphabet) vocab.add(std::string(1, c));
    const int lo = spec.scoring.cell_min(spec.length);
    const int hi = spec.scoring.cell_max(spec.length);
    for (int value = lo; value <= hi; ++value) vocab.add(std::to_string(value));
  } else {
    for (char d = '0'; d <= '9'; ++d) vocab.add(std::string(1, d));
  }

  if (spec.suffix_bits > 0) {
    vocab.bit0_id_ = vocab.size();
    vocab.add(kBitTokens[0]);
    vocab.add(kBitTokens[1]);
  }
  return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
  const auto it = ids_.find(token);
  if (it == ids_.end())
    throw Error(ErrorCode::out_of_vocabulary,
                "OUT_OF_VOCABULARY: '" + token + "'");
  return it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw Error(ErrorCode::out_of_vocabulary,
                "OUT_OF_VOCABULARY: id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::bit_id(int bit) const {
  if (bit0_id_ < 0)
    throw Error(ErrorCode::config, "vocabulary has no bit tokens");
  if (bit != 0 && bit != 1)
    throw Error(ErrorCode::config, "bit must be 0 or 1");
  return bit0_id_ + bit;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (int id = 0; id < size(); ++id) {
    out += std::to_string(id);
    out += '\t';
    out += tokens_[static_cast<std::size_t>(id)];
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(const std::string& text) {
  Vocabulary vocab;
  std::istringstream in(text);
  std::string line;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorCode::io, "malformed vocabulary line: '" + line + "'");
    if (std::stoi(line.substr(0, tab)) != expected)
      throw Error(ErrorCode::io, "vocabulary ids must be contiguous from 0");
    vocab.add(line.substr(tab + 1));
    ++expected;
  }
  if (vocab.size() < 3 || vocab.tokens_[0] != kPadToken ||
      vocab.tokens_[1] != kSeparatorToken ||
      vocab.tokens_[2] != kBeginTargetToken)
    throw Error(ErrorCode::io, "vocabulary missing structural tokens");
  vocab.separator_id_ = 1;
  vocab.begin_target_id_ = 2;
  const auto bit0 = vocab.ids_.find(kBitTokens[0]);
  if (bit0 != vocab.ids_.end()) vocab.bit0_id_ = bit0->second;
  return vocab;
}

TokenizedExample encode(const Example& example, const Vocabulary& vocab) {
  TokenizedExample out;
  out.ids.reserve(example.x_symbols.size() + example.y_symbols.size() +
                  example.target_symbols.size() + example.suffix_bits.size() +
                  3);
  for (const std::string& s : example.x_symbols)
    out.ids.push_back(vocab.id_of(s));
  out.ids.push_back(vocab.separator_id());
  for (const std::string& s : example.y_symbols)
    out.ids.push_back(vocab.id_of(s));
  out.ids.push_back(vocab.separator_id());
  out.input = {0, static_cast<int>(out.ids.size())};

  out.ids.push_back(vocab.begin_target_id());
  out.target.begin = static_cast<int>(out.ids.size());
  for (const std::string& s : example.target_symbols)
    out.ids.push_back(vocab.id_of(s));
  out.target.end = static_cast<int>(out.ids.size());

  out.suffix.begin = out.target.end;
  for (int bit : example.suffix_bits) out.ids.push_back(vocab.bit_id(bit));
  out.suffix.end = static_cast<int>(out.ids.size());
  return out;
}

Example decode(const TokenizedExample& tokenized, const Vocabulary& vocab) {
  const auto& ids = tokenized.ids;
  const int n = static_cast<int>(ids.size());
  if (tokenized.input.begin != 0 || tokenized.input.end < 2 ||
      tokenized.target.begin != tokenized.input.end + 1 ||
      tokenized.target.end > n || tokenized.suffix.begin != tokenized.target.end ||
      tokenized.suffix.end != n)
    throw Error(ErrorCode::shape_mismatch, "inconsistent region spans");
  if (ids[static_cast<std::size_t>(tokenized.input.end)] !=
      vocab.begin_target_id())
    throw Error(ErrorCode::verification,
                "begin-of-target sentinel missing at the region boundary");

  Example example;
  int separators_seen = 0;
  for (int p = 0; p < tokenized.input.end; ++p) {
    const int id = ids[static_cast<std::size_t>(p)];
    if (id == vocab.separator_id()) {
      ++separators_seen;
      continue;
    }
    const std::string& token = vocab.token_of(id);
    if (separators_seen == 0)
      example.x_symbols.push_back(token);
    else if (separators_seen == 1)
      example.y_symbols.push_back(token);
    else
      throw Error(ErrorCode::verification, "content after the second separator");
  }
  if (separators_seen != 2)
    throw Error(ErrorCode::verification, "expected two separators in the input");

  for (int p = tokenized.target.begin; p < tokenized.target.end; ++p)
    example.target_symbols.push_back(
        vocab.token_of(ids[static_cast<std::size_t>(p)]));

  for (int p = tokenized.suffix.begin; p < tokenized.suffix.end; ++p) {
    const int id = ids[static_cast<std::size_t>(p)];
    if (!vocab.has_bit_tokens() || (id != vocab.bit_id(0) && id != vocab.bit_id(1)))
      throw Error(ErrorCode::verification, "non-bit token in the suffix region");
    example.suffix_bits.push_back(id == vocab.bit_id(1) ? 1 : 0);
  }
  return example;
}

int encoded_length(const TaskSpec& spec) {
  return 2 * operand_width(spec) + 3 + target_width(spec) + spec.suffix_bits;
}

}  // namespace nwlab
