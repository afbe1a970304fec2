#include "nwlab/task.hpp"

#include <sstream>

#include "nwlab/configfile.hpp"

namespace nwlab {

std::string family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::nw:
      return "nw";
    case TaskFamily::addition:
      return "addition";
    case TaskFamily::multiplication:
      return "multiplication";
  }
  return "nw";
}

TaskFamily family_from_name(const std::string& name) {
  if (name == "nw") return TaskFamily::nw;
  if (name == "addition") return TaskFamily::addition;
  if (name == "multiplication") return TaskFamily::multiplication;
  throw Error(ErrorCode::config, "unknown task family '" + name + "'");
}

TaskSpec::TaskSpec(TaskFamily family_in, int length_in,
                   ScoringScheme scoring_in, int suffix_bits_in,
                   std::uint64_t suffix_seed_in)
    : family(family_in),
      length(length_in),
      scoring(scoring_in),
      suffix_bits(suffix_bits_in),
      suffix_seed(suffix_seed_in) {
  validate();
}

void TaskSpec::validate() const {
  if (family == TaskFamily::nw) {
    if (length < 1 || length > 31)
      throw Error(ErrorCode::config, "sequence length out of range");
  } else {
    if (length < 1 || length > 19)
      throw Error(ErrorCode::config, "digit count out of range");
  }
  if (suffix_bits < 0 || suffix_bits > 64)
    throw Error(ErrorCode::config, "suffix bit count out of range");
}

u128 universe_size(const TaskSpec& spec) {
  return spec.family == TaskFamily::nw ? nw_universe_size(spec.length)
                                       : arithmetic_universe_size(spec.length);
}

int operand_width(const TaskSpec& spec) { return spec.length; }

int target_width(const TaskSpec& spec) {
  switch (spec.family) {
    case TaskFamily::nw:
      return (spec.length + 1) * (spec.length + 1);
    case TaskFamily::addition:
      return spec.length + 1;
    case TaskFamily::multiplication:
      return 2 * spec.length;
  }
  return 0;
}

namespace {

std::vector<std::string> chars_of(const std::string& s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (char c : s) out.emplace_back(1, c);
  return out;
}

std::string pad_right(std::string s, int width) {
  if (static_cast<int>(s.size()) > width)
    throw Error(ErrorCode::config,
                "value '" + s + "' exceeds width " + std::to_string(width));
  s.append(static_cast<std::size_t>(width) - s.size(), kBlank);
  return s;
}

}  // namespace

Example make_example(const TaskSpec& spec, u128 universe_index) {
  spec.validate();
  Example example;
  if (spec.family == TaskFamily::nw) {
    const SequencePair pair = nw_index_to_pair(universe_index, spec.length);
    const ScoreMatrix matrix = nw_matrix(pair, spec.scoring);
    example.x_symbols = chars_of(pair.x);
    example.y_symbols = chars_of(pair.y);
    example.target_symbols.reserve(
        static_cast<std::size_t>(matrix.rows() * matrix.cols()));
    for (int i = 0; i < matrix.rows(); ++i)
      for (int j = 0; j < matrix.cols(); ++j)
        example.target_symbols.push_back(std::to_string(matrix(i, j)));
    example.universe_index = universe_index;
  } else {
    const auto [a, b] = arithmetic_index_to_operands(universe_index, spec.length);
    example = arithmetic_example(a, b, spec);
  }
  if (spec.suffix_bits > 0)
    example = attach_suffix(std::move(example), spec.suffix_bits,
                            spec.suffix_seed);
  return example;
}

Example arithmetic_example(std::uint64_t a, std::uint64_t b,
                           const TaskSpec& spec) {
  if (spec.family == TaskFamily::nw)
    throw Error(ErrorCode::config, "arithmetic example on an alignment task");
  spec.validate();
  const u128 base = pow_u128(10, spec.length);
  if (a >= base || b >= base)
    throw Error(ErrorCode::config, "operand exceeds digit budget");

  const u128 result = spec.family == TaskFamily::addition
                          ? static_cast<u128>(a) + b
                          : static_cast<u128>(a) * b;
  Example example;
  example.x_symbols = chars_of(pad_right(std::to_string(a), spec.length));
  example.y_symbols = chars_of(pad_right(std::to_string(b), spec.length));
  example.target_symbols =
      chars_of(pad_right(u128_to_string(result), target_width(spec)));
  example.universe_index = arithmetic_operands_to_index(a, b, spec.length);
  return example;
}

std::vector<int> suffix_bits_for(std::uint64_t rng_seed, u128 universe_index,
                                 int bit_count) {
  if (bit_count < 0 || bit_count > 64)
    throw Error(ErrorCode::config, "suffix bit count out of range");
  const std::uint64_t word = keyed_word(rng_seed, universe_index);
  std::vector<int> bits(static_cast<std::size_t>(bit_count));
  for (int i = 0; i < bit_count; ++i)
    bits[static_cast<std::size_t>(i)] = static_cast<int>((word >> i) & 1u);
  return bits;
}

Example attach_suffix(Example example, int bit_count, std::uint64_t rng_seed) {
  if (bit_count == 0) return example;
  example.suffix_bits =
      suffix_bits_for(rng_seed, example.universe_index, bit_count);
  return example;
}

DatasetSplit sample_split(const TaskSpec& spec, std::uint64_t train_size,
                          std::uint64_t val_size, std::uint64_t seed,
                          std::uint64_t validation_seed) {
  const SplitIndices indices = sample_split_indices(
      universe_size(spec), train_size, val_size, seed, validation_seed);
  DatasetSplit split;
  split.seed = seed;
  split.validation_seed = validation_seed;
  split.train.reserve(indices.train.size());
  for (u128 index : indices.train) split.train.push_back(make_example(spec, index));
  split.validation.reserve(indices.validation.size());
  for (u128 index : indices.validation)
    split.validation.push_back(make_example(spec, index));
  return split;
}

std::string format_record(const Example& example) {
  std::string line = u128_to_string(example.universe_index);
  line += '\t';
  for (const std::string& s : example.x_symbols) line += s;
  line += '\t';
  for (const std::string& s : example.y_symbols) line += s;
  line += '\t';
  for (std::size_t i = 0; i < example.target_symbols.size(); ++i) {
    if (i) line += ',';
    line += example.target_symbols[i];
  }
  line += '\t';
  if (example.suffix_bits.empty()) {
    line += '-';
  } else {
    for (int bit : example.suffix_bits) line += bit ? '1' : '0';
  }
  return line;
}

Example parse_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) fields.push_back(field);
  if (fields.size() != 5)
    throw Error(ErrorCode::io, "malformed record: '" + line + "'");

  Example example;
  example.universe_index = u128_from_string(fields[0]);
  for (char c : fields[1]) example.x_symbols.emplace_back(1, c);
  for (char c : fields[2]) example.y_symbols.emplace_back(1, c);
  std::istringstream cells(fields[3]);
  while (std::getline(cells, field, ','))
    example.target_symbols.push_back(field);
  if (fields[4] != "-") {
    for (char c : fields[4]) {
      if (c != '0' && c != '1')
        throw Error(ErrorCode::io, "malformed suffix bits: '" + fields[4] + "'");
      example.suffix_bits.push_back(c - '0');
    }
  }
  return example;
}

namespace {

std::string records_text(const std::vector<Example>& examples) {
  std::string text;
  for (const Example& e : examples) {
    text += format_record(e);
    text += '\n';
  }
  return text;
}

std::vector<Example> parse_records(const std::string& text) {
  std::vector<Example> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

constexpr int kDatasetFormatVersion = 1;

}  // namespace

void write_dataset(const std::filesystem::path& directory,
                   const TaskSpec& spec, const DatasetSplit& split) {
  std::filesystem::create_directories(directory);
  const std::string train_text = records_text(split.train);
  const std::string val_text = records_text(split.validation);
  write_text_file(directory / "train.tsv", train_text);
  write_text_file(directory / "val.tsv", val_text);

  KeyValueFile meta;
  meta.set_int("format_version", kDatasetFormatVersion);
  meta.set("family", family_name(spec.family));
  meta.set_int("length", spec.length);
  meta.set_int("match_score", spec.scoring.match_score);
  meta.set_int("mismatch_score", spec.scoring.mismatch_score);
  meta.set_int("gap_penalty", spec.scoring.gap_penalty);
  meta.set_int("suffix_bits", spec.suffix_bits);
  meta.set_u64("suffix_seed", spec.suffix_seed);
  meta.set_u64("seed", split.seed);
  meta.set_u64("validation_seed", split.validation_seed);
  meta.set("universe_size", u128_to_string(universe_size(spec)));
  meta.set_u64("train_size", split.train.size());
  meta.set_u64("val_size", split.validation.size());
  meta.set("train_checksum", hex64(fnv1a64(train_text)));
  meta.set("val_checksum", hex64(fnv1a64(val_text)));
  meta.save(directory / "dataset.meta");
}

DatasetSplit read_dataset(const std::filesystem::path& directory,
                          TaskSpec& spec_out) {
  const KeyValueFile meta = KeyValueFile::load(directory / "dataset.meta");
  if (meta.get_int("format_version") != kDatasetFormatVersion)
    throw Error(ErrorCode::io, "unsupported dataset format version");

  spec_out.family = family_from_name(meta.get("family"));
  spec_out.length = static_cast<int>(meta.get_int("length"));
  spec_out.scoring =
      ScoringScheme(static_cast<int>(meta.get_int("match_score")),
                    static_cast<int>(meta.get_int("mismatch_score")),
                    static_cast<int>(meta.get_int("gap_penalty")));
  spec_out.suffix_bits = static_cast<int>(meta.get_int("suffix_bits"));
  spec_out.suffix_seed = meta.get_u64("suffix_seed");
  spec_out.validate();

  const std::string train_text = read_text_file(directory / "train.tsv");
  const std::string val_text = read_text_file(directory / "val.tsv");
  if (hex64(fnv1a64(train_text)) != meta.get("train_checksum") ||
      hex64(fnv1a64(val_text)) != meta.get("val_checksum"))
    throw Error(ErrorCode::verification,
                "dataset checksum mismatch in " + directory.string());

  DatasetSplit split;
  split.seed = meta.get_u64("seed");
  split.validation_seed = meta.get_u64("validation_seed");
  split.train = parse_records(train_text);
  split.validation = parse_records(val_text);
  if (split.train.size() != meta.get_u64("train_size") ||
      split.validation.size() != meta.get_u64("val_size"))
    throw Error(ErrorCode::verification,
                "dataset record count mismatch in " + directory.string());
  return split;
}

void verify_examples(const TaskSpec& spec,
                     const std::vector<Example>& examples) {
  for (const Example& example : examples) {
    const Example expected = make_example(spec, example.universe_index);
    if (!(expected == example))
      throw Error(ErrorCode::verification,
                  "record mismatch at universe index " +
                      u128_to_string(example.universe_index));
  }
}

}  // namespace nwlab
