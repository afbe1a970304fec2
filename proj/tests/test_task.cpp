#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "nwlab/configfile.hpp"
#include "nwlab/task.hpp"

using namespace nwlab;

namespace {

std::string joined(const std::vector<std::string>& symbols) {
  std::string out;
  for (const auto& s : symbols) out += s;
  return out;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("key-value files parse, echo, and reject malformed lines") {
  const std::string text =
      "# run configuration\n"
      "family = nw\n"
      "length=3\n"
      "\n"
      "train_sizes = 200, 2000, 20000\n"
      "lr_max = 1e-3\n";
  const KeyValueFile file = KeyValueFile::parse(text);
  CHECK(file.get("family") == "nw");
  CHECK(file.get_int("length") == 3);
  CHECK(file.get_int_list("train_sizes") ==
        std::vector<std::int64_t>{200, 2000, 20000});
  CHECK(file.get_double("lr_max") == doctest::Approx(1e-3));
  CHECK(file.get_or("missing", "fallback") == "fallback");
  CHECK_THROWS_AS(file.get("missing"), Error);
  CHECK_THROWS_AS(file.get_int("family"), Error);
  CHECK_THROWS_AS(KeyValueFile::parse("no equals sign\n"), Error);

  const KeyValueFile echo = KeyValueFile::parse(file.serialize());
  CHECK(echo.get("train_sizes") == file.get("train_sizes"));
  CHECK(echo.entries().size() == file.entries().size());
}

TEST_CASE("alignment examples carry the full row-major cell list") {
  const TaskSpec spec(TaskFamily::nw, 2);
  const Example e = make_example(spec, nw_pair_to_index(SequencePair("AC", "AG")));
  CHECK(joined(e.x_symbols) == "AC");
  CHECK(joined(e.y_symbols) == "AG");
  REQUIRE(e.target_symbols.size() == 9);
  CHECK(e.target_symbols[0] == "0");
  CHECK(e.target_symbols[1] == "-5");
  CHECK(e.target_symbols[4] == "5");
  CHECK(e.target_symbols[8] == "1");
  CHECK(e.suffix_bits.empty());

  const TaskSpec l5(TaskFamily::nw, 5);
  CHECK(target_width(l5) == 36);
}

TEST_CASE("arithmetic examples pad per family rules") {
  SUBCASE("multiplication with one pad blank") {
    const TaskSpec spec(TaskFamily::multiplication, 3);
    const Example e = arithmetic_example(123, 456, spec);
    CHECK(joined(e.x_symbols) == "123");
    CHECK(joined(e.y_symbols) == "456");
    CHECK(joined(e.target_symbols) == "56088_");
    CHECK(e.universe_index == 123456);
  }

  SUBCASE("addition carry fills the full width") {
    const TaskSpec spec(TaskFamily::addition, 10);
    const Example e = arithmetic_example(9999999999ull, 1, spec);
    CHECK(joined(e.target_symbols) == "10000000000");
    CHECK(e.target_symbols.size() == 11);
    CHECK(joined(e.x_symbols) == "9999999999");
    CHECK(joined(e.y_symbols) == "1_________");
  }

  SUBCASE("zero is canonical single-digit") {
    const TaskSpec spec(TaskFamily::multiplication, 3);
    const Example e = arithmetic_example(0, 0, spec);
    CHECK(joined(e.target_symbols) == "0_____");
    CHECK(joined(e.x_symbols) == "0__");
  }

  SUBCASE("range errors") {
    const TaskSpec spec(TaskFamily::multiplication, 3);
    CHECK_THROWS_AS(arithmetic_example(1000, 1, spec), Error);
    CHECK_THROWS_AS(arithmetic_example(1, 1, TaskSpec(TaskFamily::nw, 3)),
                    Error);
  }
}

TEST_CASE("suffix bits are stable, keyed, and fair") {
  const auto bits = suffix_bits_for(42, 1000, 4);
  REQUIRE(bits.size() == 4);
  CHECK(suffix_bits_for(42, 1000, 4) == bits);
  CHECK(suffix_bits_for(43, 1000, 4) != suffix_bits_for(42, 1000, 64));

  TaskSpec spec(TaskFamily::nw, 2);
  Example e = make_example(spec, 7);
  CHECK(e.suffix_bits.empty());
  const Example same = attach_suffix(e, 0, 42);
  CHECK(same == e);
  const Example with = attach_suffix(e, 4, 42);
  CHECK(with.suffix_bits.size() == 4);
  CHECK(with.target_symbols == e.target_symbols);

  // Fair-coin audit: each bit position within 5 sd over 2000 examples.
  const int n = 2000;
  int ones[4] = {0, 0, 0, 0};
  for (int index = 0; index < n; ++index) {
    const auto b = suffix_bits_for(kDefaultSuffixSeed, static_cast<u128>(index), 4);
    for (int k = 0; k < 4; ++k) ones[k] += b[static_cast<std::size_t>(k)];
  }
  const double sd = std::sqrt(n * 0.25);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(ones[k] - n / 2.0) < 5.0 * sd);
  }
}

TEST_CASE("suffix-enabled specs attach bits at construction") {
  const TaskSpec spec(TaskFamily::nw, 2, ScoringScheme{}, 4);
  const Example e = make_example(spec, 99);
  CHECK(e.suffix_bits == suffix_bits_for(kDefaultSuffixSeed, 99, 4));
}

TEST_CASE("dataset files round-trip and detect tampering") {
  const TaskSpec spec(TaskFamily::nw, 2, ScoringScheme{}, 4);
  const DatasetSplit split = sample_split(spec, 50, 20, 11);
  REQUIRE(split.train.size() == 50);
  REQUIRE(split.validation.size() == 20);

  const auto dir = fresh_dir("nwlab_dataset_test");
  write_dataset(dir, spec, split);

  TaskSpec loaded_spec;
  const DatasetSplit loaded = read_dataset(dir, loaded_spec);
  CHECK(loaded_spec.family == spec.family);
  CHECK(loaded_spec.length == spec.length);
  CHECK(loaded_spec.suffix_bits == 4);
  CHECK(loaded.seed == split.seed);
  CHECK(loaded.train == split.train);
  CHECK(loaded.validation == split.validation);
  CHECK_NOTHROW(verify_examples(spec, loaded.train));

  // Regeneration reproduces the files byte for byte.
  const auto dir2 = fresh_dir("nwlab_dataset_test2");
  write_dataset(dir2, spec, sample_split(spec, 50, 20, 11));
  CHECK(read_text_file(dir / "train.tsv") == read_text_file(dir2 / "train.tsv"));
  CHECK(read_text_file(dir / "dataset.meta") ==
        read_text_file(dir2 / "dataset.meta"));

  // Flip one byte in a record: checksum refuses the load.
  std::string text = read_text_file(dir / "train.tsv");
  text[text.find('\t') + 1] = text[text.find('\t') + 1] == 'A' ? 'C' : 'A';
  write_text_file(dir / "train.tsv", text);
  TaskSpec ignored;
  CHECK_THROWS_AS(read_dataset(dir, ignored), Error);
}

TEST_CASE("verification recomputes targets from indices") {
  const TaskSpec spec(TaskFamily::multiplication, 3);
  std::vector<Example> examples;
  for (u128 index : {u128{0}, u128{123456}, u128{999999}})
    examples.push_back(make_example(spec, index));
  CHECK_NOTHROW(verify_examples(spec, examples));

  examples[1].target_symbols[0] = "9";
  CHECK_THROWS_AS(verify_examples(spec, examples), Error);
  try {
    verify_examples(spec, examples);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::verification);
  }
}

TEST_CASE("record format survives parsing") {
  const TaskSpec spec(TaskFamily::nw, 3, ScoringScheme{}, 4);
  const Example e = make_example(spec, 4095);
  CHECK(parse_record(format_record(e)) == e);
  CHECK_THROWS_AS(parse_record("1\tAC\tAG"), Error);
}
