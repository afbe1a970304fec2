#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "nwlab/analysis.hpp"
#include "nwlab/nw.hpp"
#include "nwlab/runner.hpp"
#include "nwlab/svgplot.hpp"
#include "nwlab/task.hpp"
#include "nwlab/universe.hpp"

namespace {

using namespace nwlab;
namespace fs = std::filesystem;

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value && *value ? value : fallback;
}

bool deterministic_env() { return env_or("DETERMINISTIC", "") == "1"; }

struct GenerateSpec {
  TaskSpec task;
  std::uint64_t train_size = 0;
  std::uint64_t val_size = 2000;
  std::uint64_t seed = 0;
  std::uint64_t validation_seed = kDefaultValidationSeed;
};

GenerateSpec parse_generate_config(const KeyValueFile& file) {
  GenerateSpec spec;
  const TaskFamily family = family_from_name(file.get_or("family", "nw"));
  const int length = static_cast<int>(file.get_int_or("length", 5));
  ScoringScheme scoring(
      static_cast<int>(file.get_int_or("match", ScoringScheme().match_score)),
      static_cast<int>(
          file.get_int_or("mismatch", ScoringScheme().mismatch_score)),
      static_cast<int>(file.get_int_or("gap", ScoringScheme().gap_penalty)));
  spec.task = TaskSpec(family, length, scoring,
                       static_cast<int>(file.get_int_or("suffix_bits", 0)),
                       file.get_u64_or("suffix_seed", kDefaultSuffixSeed));
  spec.train_size = file.get_u64("train_size");
  spec.val_size = file.get_u64_or("val_size", spec.val_size);
  spec.seed = file.get_u64_or("seed", spec.seed);
  spec.validation_seed =
      file.get_u64_or("validation_seed", spec.validation_seed);
  return spec;
}

KeyValueFile echo_generate_config(const GenerateSpec& spec) {
  KeyValueFile echo;
  echo.set("family", family_name(spec.task.family));
  echo.set_int("length", spec.task.length);
  echo.set_int("match", spec.task.scoring.match_score);
  echo.set_int("mismatch", spec.task.scoring.mismatch_score);
  echo.set_int("gap", spec.task.scoring.gap_penalty);
  echo.set_int("suffix_bits", spec.task.suffix_bits);
  echo.set_u64("suffix_seed", spec.task.suffix_seed);
  echo.set_u64("train_size", spec.train_size);
  echo.set_u64("val_size", spec.val_size);
  echo.set_u64("seed", spec.seed);
  echo.set_u64("validation_seed", spec.validation_seed);
  return echo;
}

int do_generate(const std::string& config_path, std::string out_dir) {
  const auto file = KeyValueFile::load(config_path);
  const auto spec = parse_generate_config(file);
  if (out_dir.empty()) out_dir = env_or("OUTPUT_DIR", "");
  if (out_dir.empty()) out_dir = file.get_or("out", "");
  if (out_dir.empty())
    out_dir = "dataset_" + family_name(spec.task.family) +
              std::to_string(spec.task.length) + "_N" +
              std::to_string(spec.train_size);

  const auto split = sample_split(spec.task, spec.train_size, spec.val_size,
                                  spec.seed, spec.validation_seed);
  write_dataset(out_dir, spec.task, split);
  write_text_file(fs::path(out_dir) / "config.echo",
                  echo_generate_config(spec).serialize());

  const auto meta = KeyValueFile::load(fs::path(out_dir) / "dataset.meta");
  std::cout << "universe " << u128_to_string(universe_size(spec.task)) << "\n"
            << "train " << split.train.size() << " checksum "
            << meta.get("train_checksum") << "\n"
            << "val " << split.validation.size() << " checksum "
            << meta.get("val_checksum") << "\n"
            << "dataset " << out_dir << "\n";
  return 0;
}

// Compares every generated score table against the alignment-path oracle,
// cell by cell, over the whole pair universe. NWLAB_CORRUPT_NW=1 perturbs
// one table before the comparison; the sweep must then fail, which is how
// the negative fixture proves the check has teeth.
std::uint64_t oracle_sweep(const TaskSpec& task) {
  const bool corrupt = env_or("NWLAB_CORRUPT_NW", "") == "1";
  const u128 total = universe_size(task);
  const u128 corrupt_at = total / 2;
  std::uint64_t cells = 0;
  for (u128 index = 0; index < total; ++index) {
    const SequencePair pair = nw_index_to_pair(index, task.length);
    ScoreMatrix table = nw_matrix(pair, task.scoring);
    if (corrupt && index == corrupt_at) table(task.length, task.length) += 1;
    for (int i = 0; i <= task.length; ++i) {
      for (int j = 0; j <= task.length; ++j) {
        const int oracle = nw_oracle_cell(pair, task.scoring, i, j);
        if (table(i, j) != oracle) {
          std::cerr << "mismatch at x=" << pair.x << " y=" << pair.y
                    << " cell (" << i << "," << j << "): table "
                    << table(i, j) << ", oracle " << oracle << "\n";
          throw Error(ErrorCode::verification,
                      "score table disagrees with the alignment oracle");
        }
        ++cells;
      }
    }
  }
  return cells;
}

int do_verify(const std::string& config_path, int max_oracle_length,
              std::string data_dir) {
  const auto file = KeyValueFile::load(config_path);
  const auto spec = parse_generate_config(file);

  if (spec.task.family == TaskFamily::nw) {
    if (spec.task.length <= max_oracle_length) {
      const std::uint64_t cells = oracle_sweep(spec.task);
      std::cout << "oracle cells checked " << cells << "\n";
    } else {
      std::cout << "oracle sweep skipped (length " << spec.task.length
                << " > limit " << max_oracle_length << ")\n";
    }
  }

  if (data_dir.empty()) data_dir = env_or("OUTPUT_DIR", "");
  if (data_dir.empty()) data_dir = file.get_or("out", "");
  if (!data_dir.empty() &&
      fs::exists(fs::path(data_dir) / "dataset.meta")) {
    TaskSpec loaded;
    const auto split = read_dataset(data_dir, loaded);
    if (!(loaded.family == spec.task.family &&
          loaded.length == spec.task.length &&
          loaded.scoring == spec.task.scoring))
      throw Error(ErrorCode::verification,
                  "dataset task does not match the config");
    verify_examples(loaded, split.train);
    verify_examples(loaded, split.validation);
    std::cout << "records verified train " << split.train.size() << " val "
              << split.validation.size() << "\n";
  } else {
    const auto split = sample_split(spec.task, spec.train_size, spec.val_size,
                                    spec.seed, spec.validation_seed);
    verify_examples(spec.task, split.train);
    verify_examples(spec.task, split.validation);
    std::cout << "records verified train " << split.train.size() << " val "
              << split.validation.size() << " (fresh sample)\n";
  }
  std::cout << "ok\n";
  return 0;
}

int do_train(const std::string& config_path, bool seed_set,
             std::uint64_t seed, std::string out_dir,
             const std::string& resume) {
  const auto file = KeyValueFile::load(config_path);
  RunConfig config = parse_run_config(file);
  if (seed_set) {
    config.seed = seed;
    if (!file.has("run_id")) config.run_id = "run_s" + std::to_string(seed);
  }
  if (deterministic_env()) config.deterministic = true;
  if (out_dir.empty()) out_dir = env_or("OUTPUT_DIR", "");
  if (out_dir.empty()) out_dir = "runs/" + config.run_id;

  const RunResult result = train_run(config, out_dir, resume);
  std::cout << "run " << config.run_id << " updates " << result.updates_run
            << (result.early_stopped ? " early-stopped" : " censored")
            << " train_em " << format_double(result.final_train.matrix_accuracy)
            << " val_em " << format_double(result.final_val.matrix_accuracy)
            << "\n"
            << "metrics " << result.metrics_path << "\n";
  return 0;
}

int do_sweep(const std::string& manifest_path, int parallel,
             std::string out_root) {
  if (parallel <= 0) {
    parallel = static_cast<int>(
        std::strtol(env_or("PARALLEL_CELLS", "1").c_str(), nullptr, 10));
    if (parallel <= 0) parallel = 1;
  }
  if (out_root.empty()) out_root = env_or("OUTPUT_DIR", "runs");

  const auto manifest = KeyValueFile::load(manifest_path);
  const auto cells =
      run_sweep(manifest, out_root, parallel, deterministic_env());
  int done = 0, censored = 0, failed = 0;
  for (const auto& cell : cells) {
    if (cell.status == "done") ++done;
    else if (cell.status == "censored-budget") ++censored;
    else ++failed;
  }
  std::cout << "sweep " << done << " done, " << censored
            << " censored-budget, " << failed << " failed\n"
            << "manifest " << (fs::path(out_root) / "manifest.tsv").string()
            << "\n";
  return 0;
}

std::vector<double> parse_tau_list(const std::string& list) {
  std::vector<double> taus;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = list.find(',', pos);
    const std::string field =
        list.substr(pos, comma == std::string::npos ? std::string::npos
                                                    : comma - pos);
    if (!field.empty()) taus.push_back(std::stod(field));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return taus;
}

int do_analyze(const std::string& runs_dir, const std::string& tau_list,
               std::string out_dir) {
  if (out_dir.empty()) out_dir = env_or("OUTPUT_DIR", "");
  if (out_dir.empty()) out_dir = (fs::path(runs_dir) / "analysis").string();
  analyze_runs(runs_dir, out_dir, parse_tau_list(tau_list));
  std::cout << "analysis " << out_dir << "\n";
  return 0;
}

int do_plot(const std::string& analysis_dir, std::string out_dir) {
  if (out_dir.empty()) out_dir = env_or("OUTPUT_DIR", "");
  if (out_dir.empty())
    out_dir = (fs::path(analysis_dir) / "figures").string();
  const int count = plot_analysis_dir(analysis_dir, out_dir);
  std::cout << "figures " << count << " -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured-output training laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, data_dir;
  std::string manifest_path, runs_dir, analysis_dir;
  std::string tau_list = "0.6,0.9,0.98";
  std::uint64_t seed = 0;
  int max_oracle_length = 3;
  int parallel = 0;

  auto* generate = app.add_subcommand("generate", "sample and write a dataset");
  generate->add_option("--config", config_path, "key=value config file")
      ->required();
  generate->add_option("--out", out_dir, "output directory");

  auto* verify = app.add_subcommand(
      "verify", "check generated tables against the alignment oracle");
  verify->add_option("--config", config_path, "key=value config file")
      ->required();
  verify->add_option("--max-oracle-L", max_oracle_length,
                     "largest length swept exhaustively");
  verify->add_option("--data", data_dir, "dataset directory to re-verify");

  auto* train = app.add_subcommand("train", "train one run");
  train->add_option("--config", config_path, "run config file")->required();
  auto* seed_option = train->add_option("--seed", seed, "override the run seed");
  train->add_option("--out", out_dir, "run output directory");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* sweep = app.add_subcommand("sweep", "run a manifest grid");
  sweep->add_option("--manifest", manifest_path, "sweep manifest file")
      ->required();
  sweep->add_option("--parallel", parallel, "concurrent cells");
  sweep->add_option("--out", out_dir, "sweep output root");

  auto* analyze = app.add_subcommand("analyze", "aggregate finished runs");
  analyze->add_option("--runs", runs_dir, "directory of run directories")
      ->required();
  analyze->add_option("--tau", tau_list, "comma-separated thresholds");
  analyze->add_option("--out", out_dir, "analysis output directory");

  auto* plot = app.add_subcommand("plot", "render figures from an analysis");
  plot->add_option("--analysis", analysis_dir, "analysis directory")
      ->required();
  plot->add_option("--out", out_dir, "figure output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) return do_generate(config_path, out_dir);
    if (*verify) return do_verify(config_path, max_oracle_length, data_dir);
    if (*train)
      return do_train(config_path, !seed_option->empty(), seed, out_dir,
                      resume);
    if (*sweep) return do_sweep(manifest_path, parallel, out_dir);
    if (*analyze) return do_analyze(runs_dir, tau_list, out_dir);
    if (*plot) return do_plot(analysis_dir, out_dir);
  } catch (const nwlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nwlab::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
