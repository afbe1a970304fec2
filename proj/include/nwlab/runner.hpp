#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwlab/configfile.hpp"
#include "nwlab/model.hpp"
#include "nwlab/optim.hpp"
#include "nwlab/task.hpp"
#include "nwlab/tokenizer.hpp"

namespace nwlab {

// Deterministic sub-streams derived from the run seed.
inline constexpr std::uint64_t kInitSeedSalt = 0x696E69745F736565ULL;
inline constexpr std::uint64_t kShuffleSeedSalt = 0x73687566666C6531ULL;
inline constexpr std::uint64_t kEvalSeedSalt = 0x6576616C5F736574ULL;

struct RunConfig {
  TaskSpec task{TaskFamily::nw, 5};
  std::uint64_t train_size = 0;
  std::uint64_t val_size = 2000;
  int depth = 3;
  int d_emb = 0;  // 0 derives 64 * depth
  std::uint64_t seed = 0;
  std::uint64_t validation_seed = kDefaultValidationSeed;
  int micro_batch = 8;
  int accumulation = 20;
  std::int64_t max_updates = 50000;
  std::int64_t eval_every = 100;
  std::int64_t eval_train_subset = 2000;
  std::int64_t eval_val_subset = 0;  // 0 evaluates the whole validation split
  double lr_max = 1e-3;
  double lr_min = 1e-4;
  AdamWConfig adamw{};
  bool early_stop = false;
  double early_stop_threshold = 0.999;
  int early_stop_patience = 5;
  bool early_stop_train_only = false;
  std::int64_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  bool deterministic = false;
  std::string run_id = "run";

  void validate() const;
  std::int64_t effective_batch() const {
    return std::int64_t(micro_batch) * accumulation;
  }
  ModelConfig model_config(int vocab_size, int max_seq_len) const;
};

RunConfig parse_run_config(const KeyValueFile& file);
KeyValueFile echo_run_config(const RunConfig& config);

struct PreparedExample {
  std::vector<int> ids;
  Span target{0, 0};
  Span suffix{0, 0};
};

struct PreparedDataset {
  TaskSpec task{TaskFamily::nw, 5};
  Vocabulary vocab;
  int seq_len = 0;
  std::vector<PreparedExample> examples;
};

PreparedDataset prepare_examples(const TaskSpec& task,
                                 const std::vector<Example>& examples);

struct EvalOutcome {
  double matrix_accuracy = 0;
  double suffix_accuracy = 0;
  double suffix_bit_accuracy = 0;
  double token_accuracy = 0;
};

// Greedy-decodes the full target region per example; matrix and suffix
// regions are scored independently, suffix positions decode over the bit
// tokens only. An empty subset means every example.
EvalOutcome evaluate_exact_match(const Parameters<float>& params,
                                 const PreparedDataset& dataset,
                                 const std::vector<std::uint32_t>& subset = {});

struct RunResult {
  std::int64_t updates_run = 0;
  bool censored = true;
  bool early_stopped = false;
  EvalOutcome final_train;
  EvalOutcome final_val;
  double wall_seconds = 0;
  std::string metrics_path;
  std::string checkpoint_path;
};

// Trains one seeded run, streaming metrics rows
// (run_id, t, split, metric, value) and writing a config echo, a final
// checkpoint, and a result summary into out_dir.
RunResult train_run(const RunConfig& config, const std::string& out_dir,
                    const std::string& resume_from = "");

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::int64_t update = 0;
  std::int64_t optimizer_steps = 0;
  std::uint64_t sampler_state[4] = {0, 0, 0, 0};
  std::int64_t sampler_cursor = 0;
  std::vector<float> params;
  std::vector<float> first_moments;
  std::vector<float> second_moments;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct SweepCell {
  RunConfig config;
  std::string out_dir;
  std::string status;  // done | censored-budget | failed
  std::string detail;
  std::string config_hash;
};

// Expands the manifest grid (train_sizes x depths x seeds), runs every cell
// with per-cell failure isolation, and writes manifest.tsv under out_root.
std::vector<SweepCell> run_sweep(const KeyValueFile& manifest,
                                 const std::string& out_root, int parallel,
                                 bool deterministic);

}  // namespace nwlab
