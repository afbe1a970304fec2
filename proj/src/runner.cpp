#include "nwlab/runner.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace nwlab {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  task.validate();
  if (train_size < 1) throw Error(ErrorCode::config, "train_size must be positive");
  if (micro_batch < 1 || accumulation < 1)
    throw Error(ErrorCode::config, "batch settings must be positive");
  if (max_updates < 1) throw Error(ErrorCode::config, "max_updates must be positive");
  if (eval_every < 1 || max_updates % eval_every != 0)
    throw Error(ErrorCode::config,
                "eval_every must be positive and divide max_updates");
  if (eval_train_subset < 1)
    throw Error(ErrorCode::config, "eval_train_subset must be positive");
  if (eval_val_subset < 0)
    throw Error(ErrorCode::config, "eval_val_subset must be non-negative");
  if (val_size < 1) throw Error(ErrorCode::config, "val_size must be positive");
  if (!(lr_max >= lr_min) || !(lr_min > 0))
    throw Error(ErrorCode::config, "learning-rate bounds must satisfy lr_max >= lr_min > 0");
  if (depth < 1) throw Error(ErrorCode::config, "depth must be positive");
  if (d_emb != 0 && d_emb % depth != 0)
    throw Error(ErrorCode::config, "d_emb override must be divisible by depth");
  if (early_stop_patience < 1)
    throw Error(ErrorCode::config, "early_stop_patience must be positive");
  if (!(early_stop_threshold > 0) || early_stop_threshold > 1)
    throw Error(ErrorCode::config, "early_stop_threshold must lie in (0, 1]");
  if (checkpoint_every < 0)
    throw Error(ErrorCode::config, "checkpoint_every must be non-negative");
  if (run_id.empty() ||
      run_id.find_first_of("/\\ \t\n,") != std::string::npos)
    throw Error(ErrorCode::config, "run_id must be a plain token");
}

ModelConfig RunConfig::model_config(int vocab_size, int max_seq_len) const {
  const std::uint64_t init_seed = mix64(seed ^ kInitSeedSalt);
  if (d_emb == 0)
    return ModelConfig::for_depth(depth, vocab_size, max_seq_len, init_seed);
  ModelConfig config;
  config.depth = depth;
  config.n_heads = depth;
  config.d_emb = d_emb;
  config.d_ff = 4 * d_emb;
  config.vocab_size = vocab_size;
  config.max_seq_len = max_seq_len;
  config.init_seed = init_seed;
  config.validate();
  return config;
}

RunConfig parse_run_config(const KeyValueFile& file) {
  RunConfig config;
  const TaskFamily family =
      family_from_name(file.get_or("family", "nw"));
  const int length = static_cast<int>(file.get_int_or("length", 5));
  ScoringScheme scoring(
      static_cast<int>(file.get_int_or("match", ScoringScheme().match_score)),
      static_cast<int>(file.get_int_or("mismatch", ScoringScheme().mismatch_score)),
      static_cast<int>(file.get_int_or("gap", ScoringScheme().gap_penalty)));
  const int suffix_bits = static_cast<int>(file.get_int_or("suffix_bits", 0));
  const std::uint64_t suffix_seed =
      file.get_u64_or("suffix_seed", kDefaultSuffixSeed);
  config.task = TaskSpec(family, length, scoring, suffix_bits, suffix_seed);

  config.train_size = file.get_u64("train_size");
  config.val_size = file.get_u64_or("val_size", config.val_size);
  config.depth = static_cast<int>(file.get_int_or("depth", config.depth));
  config.d_emb = static_cast<int>(file.get_int_or("d_emb", config.d_emb));
  config.seed = file.get_u64_or("seed", config.seed);
  config.validation_seed =
      file.get_u64_or("validation_seed", config.validation_seed);
  config.micro_batch =
      static_cast<int>(file.get_int_or("micro_batch", config.micro_batch));
  config.accumulation =
      static_cast<int>(file.get_int_or("accumulation", config.accumulation));
  config.max_updates = file.get_int_or("max_updates", config.max_updates);
  config.eval_every = file.get_int_or("eval_every", config.eval_every);
  config.eval_train_subset =
      file.get_int_or("eval_train_subset", config.eval_train_subset);
  config.eval_val_subset =
      file.get_int_or("eval_val_subset", config.eval_val_subset);
  config.lr_max = file.get_double_or("lr_max", config.lr_max);
  config.lr_min = file.get_double_or("lr_min", config.lr_min);
  config.adamw.beta1 = file.get_double_or("beta1", config.adamw.beta1);
  config.adamw.beta2 = file.get_double_or("beta2", config.adamw.beta2);
  config.adamw.weight_decay =
      file.get_double_or("weight_decay", config.adamw.weight_decay);
  config.adamw.epsilon = file.get_double_or("epsilon", config.adamw.epsilon);
  config.early_stop = file.get_bool_or("early_stop", config.early_stop);
  config.early_stop_threshold =
      file.get_double_or("early_stop_threshold", config.early_stop_threshold);
  config.early_stop_patience = static_cast<int>(
      file.get_int_or("early_stop_patience", config.early_stop_patience));
  config.early_stop_train_only =
      file.get_bool_or("early_stop_train_only", config.early_stop_train_only);
  config.checkpoint_every =
      file.get_int_or("checkpoint_every", config.checkpoint_every);
  config.deterministic =
      file.get_bool_or("deterministic", config.deterministic);
  config.run_id = file.get_or("run_id", config.run_id);
  config.validate();
  return config;
}

KeyValueFile echo_run_config(const RunConfig& config) {
  KeyValueFile echo;
  echo.set("run_id", config.run_id);
  echo.set("family", family_name(config.task.family));
  echo.set_int("length", config.task.length);
  echo.set_int("match", config.task.scoring.match_score);
  echo.set_int("mismatch", config.task.scoring.mismatch_score);
  echo.set_int("gap", config.task.scoring.gap_penalty);
  echo.set_int("suffix_bits", config.task.suffix_bits);
  echo.set_u64("suffix_seed", config.task.suffix_seed);
  echo.set_u64("train_size", config.train_size);
  echo.set_u64("val_size", config.val_size);
  echo.set_int("depth", config.depth);
  echo.set_int("d_emb", config.d_emb);
  echo.set_u64("seed", config.seed);
  echo.set_u64("validation_seed", config.validation_seed);
  echo.set_int("micro_batch", config.micro_batch);
  echo.set_int("accumulation", config.accumulation);
  echo.set_int("max_updates", config.max_updates);
  echo.set_int("eval_every", config.eval_every);
  echo.set_int("eval_train_subset", config.eval_train_subset);
  echo.set_int("eval_val_subset", config.eval_val_subset);
  echo.set_double("lr_max", config.lr_max);
  echo.set_double("lr_min", config.lr_min);
  echo.set_double("beta1", config.adamw.beta1);
  echo.set_double("beta2", config.adamw.beta2);
  echo.set_double("weight_decay", config.adamw.weight_decay);
  echo.set_double("epsilon", config.adamw.epsilon);
  echo.set("early_stop", config.early_stop ? "true" : "false");
  echo.set_double("early_stop_threshold", config.early_stop_threshold);
  echo.set_int("early_stop_patience", config.early_stop_patience);
  echo.set("early_stop_train_only",
           config.early_stop_train_only ? "true" : "false");
  echo.set_int("checkpoint_every", config.checkpoint_every);
  echo.set("deterministic", config.deterministic ? "true" : "false");
  return echo;
}

PreparedDataset prepare_examples(const TaskSpec& task,
                                 const std::vector<Example>& examples) {
  PreparedDataset dataset;
  dataset.task = task;
  dataset.vocab = Vocabulary::for_task(task);
  dataset.seq_len = encoded_length(task);
  dataset.examples.reserve(examples.size());
  for (const auto& example : examples) {
    TokenizedExample encoded = encode(example, dataset.vocab);
    dataset.examples.push_back(
        {std::move(encoded.ids), encoded.target, encoded.suffix});
  }
  return dataset;
}

namespace {

int scored_end(const PreparedExample& example) {
  return example.suffix.empty() ? example.target.end : example.suffix.end;
}

// Candidate sets per generated position: suffix positions decode over the
// two bit tokens, everything else over the full vocabulary.
std::vector<std::vector<int>> allowed_sets_for(const PreparedDataset& dataset) {
  if (dataset.examples.empty()) return {};
  const auto& first = dataset.examples.front();
  const int n = scored_end(first) - first.target.begin;
  std::vector<std::vector<int>> allowed(static_cast<std::size_t>(n));
  if (dataset.task.suffix_bits > 0) {
    const std::vector<int> bits = {dataset.vocab.bit_id(0),
                                   dataset.vocab.bit_id(1)};
    for (int p = first.suffix.begin; p < first.suffix.end; ++p)
      allowed[static_cast<std::size_t>(p - first.target.begin)] = bits;
  }
  return allowed;
}

}  // namespace

EvalOutcome evaluate_exact_match(const Parameters<float>& params,
                                 const PreparedDataset& dataset,
                                 const std::vector<std::uint32_t>& subset) {
  const std::size_t total =
      subset.empty() ? dataset.examples.size() : subset.size();
  if (total == 0)
    throw Error(ErrorCode::config, "empty evaluation set");
  const auto allowed = allowed_sets_for(dataset);

  std::size_t matrix_correct = 0, suffix_correct = 0;
  std::size_t bit_correct = 0, bit_total = 0;
  std::size_t token_correct = 0, token_total = 0;

  for (std::size_t pick = 0; pick < total; ++pick) {
    const auto& example =
        dataset.examples[subset.empty() ? pick : subset[pick]];
    const int end = scored_end(example);
    const int n_generate = end - example.target.begin;
    const std::vector<int> prefix(
        example.ids.begin(), example.ids.begin() + example.target.begin);
    const auto generated =
        greedy_decode(params, prefix, n_generate, allowed);

    bool matrix_ok = true;
    for (int p = example.target.begin; p < example.target.end; ++p)
      matrix_ok &= generated[static_cast<std::size_t>(p - example.target.begin)] ==
                   example.ids[static_cast<std::size_t>(p)];
    matrix_correct += matrix_ok ? 1 : 0;

    if (!example.suffix.empty()) {
      bool suffix_ok = true;
      for (int p = example.suffix.begin; p < example.suffix.end; ++p) {
        const bool hit =
            generated[static_cast<std::size_t>(p - example.target.begin)] ==
            example.ids[static_cast<std::size_t>(p)];
        suffix_ok &= hit;
        bit_correct += hit ? 1 : 0;
        ++bit_total;
      }
      suffix_correct += suffix_ok ? 1 : 0;
    }

    const auto logits = decode_logits(params, example.ids);
    for (int p = example.target.begin - 1; p + 1 < end; ++p) {
      const Eigen::Matrix<float, 1, Eigen::Dynamic> row = logits.row(p);
      token_correct += argmax_id<float>(row, {}) ==
                               example.ids[static_cast<std::size_t>(p + 1)]
                           ? 1
                           : 0;
      ++token_total;
    }
  }

  EvalOutcome outcome;
  outcome.matrix_accuracy = double(matrix_correct) / double(total);
  outcome.suffix_accuracy =
      bit_total == 0 ? 0.0 : double(suffix_correct) / double(total);
  outcome.suffix_bit_accuracy =
      bit_total == 0 ? 0.0 : double(bit_correct) / double(bit_total);
  outcome.token_accuracy =
      token_total == 0 ? 0.0 : double(token_correct) / double(token_total);
  return outcome;
}

namespace {

// Shuffled-epoch order over the training examples. The rng state captured at
// the top of the current epoch plus the cursor reproduce the sampler exactly,
// which is what checkpoints store.
class EpochSampler {
 public:
  EpochSampler(std::uint64_t seed, std::uint32_t n) : rng_(seed), n_(n) {
    order_.resize(n_);
    start_epoch();
  }

  std::uint32_t next() {
    if (cursor_ == n_) start_epoch();
    return order_[cursor_++];
  }

  void capture(std::uint64_t state[4], std::int64_t& cursor) const {
    for (int i = 0; i < 4; ++i) state[i] = epoch_state_[i];
    cursor = static_cast<std::int64_t>(cursor_);
  }

  void restore(const std::uint64_t state[4], std::int64_t cursor) {
    if (cursor < 0 || cursor > std::int64_t(n_))
      throw Error(ErrorCode::verification, "sampler cursor out of range");
    rng_.set_state(state[0], state[1], state[2], state[3]);
    start_epoch();
    cursor_ = static_cast<std::uint32_t>(cursor);
  }

 private:
  void start_epoch() {
    for (int i = 0; i < 4; ++i) epoch_state_[i] = rng_.state_word(i);
    for (std::uint32_t i = 0; i < n_; ++i) order_[i] = i;
    for (std::uint32_t i = n_; i > 1; --i) {
      const auto j = static_cast<std::uint32_t>(rng_.next_below(i));
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }

  Rng rng_;
  std::uint32_t n_;
  std::vector<std::uint32_t> order_;
  std::uint32_t cursor_ = 0;
  std::uint64_t epoch_state_[4] = {0, 0, 0, 0};
};

class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, bool append)
      : path_(path.string()),
        out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw Error(ErrorCode::io, "cannot open " + path_);
    if (!append) out_ << "run_id,t,split,metric,value\n";
  }

  void row(const std::string& run_id, std::int64_t t, const char* split,
           const char* metric, double value) {
    out_ << run_id << ',' << t << ',' << split << ',' << metric << ','
         << format_double(value) << '\n';
  }

  void flush_checked() {
    out_.flush();
    if (!out_) throw Error(ErrorCode::io, "metrics write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

std::vector<std::uint32_t> sample_subset(std::uint64_t seed,
                                         std::uint32_t total,
                                         std::uint32_t want) {
  std::vector<std::uint32_t> all(total);
  for (std::uint32_t i = 0; i < total; ++i) all[i] = i;
  if (want >= total) return all;
  Rng rng(seed);
  for (std::uint32_t i = 0; i < want; ++i) {
    const auto j =
        i + static_cast<std::uint32_t>(rng.next_below(total - i));
    std::swap(all[i], all[j]);
  }
  all.resize(want);
  return all;
}

std::vector<float> flatten(Parameters<float>& params) {
  std::vector<float> flat;
  for (auto& ref : tensor_refs(params)) {
    const float* data = ref.tensor->data();
    flat.insert(flat.end(), data, data + ref.tensor->size());
  }
  return flat;
}

void unflatten(const std::vector<float>& flat, Parameters<float>& params) {
  std::size_t offset = 0;
  for (auto& ref : tensor_refs(params)) {
    const auto count = static_cast<std::size_t>(ref.tensor->size());
    if (offset + count > flat.size())
      throw Error(ErrorCode::verification, "parameter blob too short");
    std::memcpy(ref.tensor->data(), flat.data() + offset,
                count * sizeof(float));
    offset += count;
  }
  if (offset != flat.size())
    throw Error(ErrorCode::verification, "parameter blob size mismatch");
}

std::vector<float> flatten_moments(std::vector<DenseMatrix<float>>& moments) {
  std::vector<float> flat;
  for (auto& m : moments) {
    const float* data = m.data();
    flat.insert(flat.end(), data, data + m.size());
  }
  return flat;
}

void unflatten_moments(const std::vector<float>& flat,
                       std::vector<DenseMatrix<float>>& moments) {
  std::size_t offset = 0;
  for (auto& m : moments) {
    const auto count = static_cast<std::size_t>(m.size());
    if (offset + count > flat.size())
      throw Error(ErrorCode::verification, "moment blob too short");
    std::memcpy(m.data(), flat.data() + offset, count * sizeof(float));
    offset += count;
  }
  if (offset != flat.size())
    throw Error(ErrorCode::verification, "moment blob size mismatch");
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string config_text =
      echo_run_config(checkpoint.config).serialize();
  std::string header;
  header += "nwlab-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  header += "config_bytes = " + std::to_string(config_text.size()) + "\n";
  header += config_text;
  header += "update = " + std::to_string(checkpoint.update) + "\n";
  header += "optimizer_steps = " + std::to_string(checkpoint.optimizer_steps) + "\n";
  header += "sampler_state = " + std::to_string(checkpoint.sampler_state[0]) +
            "," + std::to_string(checkpoint.sampler_state[1]) + "," +
            std::to_string(checkpoint.sampler_state[2]) + "," +
            std::to_string(checkpoint.sampler_state[3]) + "\n";
  header += "sampler_cursor = " + std::to_string(checkpoint.sampler_cursor) + "\n";
  header += "param_floats = " + std::to_string(checkpoint.params.size()) + "\n";
  header += "moment_floats = " + std::to_string(checkpoint.first_moments.size()) + "\n";
  header += "blob\n";

  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::ofstream out(target, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path);
  out.write(header.data(), std::streamsize(header.size()));
  auto write_blob = [&](const std::vector<float>& blob) {
    out.write(reinterpret_cast<const char*>(blob.data()),
              std::streamsize(blob.size() * sizeof(float)));
  };
  write_blob(checkpoint.params);
  write_blob(checkpoint.first_moments);
  write_blob(checkpoint.second_moments);
  out.flush();
  if (!out) throw Error(ErrorCode::io, "checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string raw = read_text_file(path);
  std::size_t cursor = 0;
  auto next_line = [&]() {
    const std::size_t end = raw.find('\n', cursor);
    if (end == std::string::npos)
      throw Error(ErrorCode::verification, "truncated checkpoint " + path);
    std::string line = raw.substr(cursor, end - cursor);
    cursor = end + 1;
    return line;
  };
  auto value_of = [&](const std::string& line, const std::string& key) {
    const std::string prefix = key + " = ";
    if (line.rfind(prefix, 0) != 0)
      throw Error(ErrorCode::verification,
                  "checkpoint field " + key + " missing in " + path);
    return line.substr(prefix.size());
  };

  if (next_line() != "nwlab-checkpoint " + std::to_string(kCheckpointVersion))
    throw Error(ErrorCode::verification, "unsupported checkpoint " + path);
  const auto config_bytes =
      std::stoull(value_of(next_line(), "config_bytes"));
  if (cursor + config_bytes > raw.size())
    throw Error(ErrorCode::verification, "truncated checkpoint " + path);
  const std::string config_text = raw.substr(cursor, config_bytes);
  cursor += config_bytes;

  Checkpoint checkpoint;
  checkpoint.config =
      parse_run_config(KeyValueFile::parse(config_text));
  checkpoint.update = std::stoll(value_of(next_line(), "update"));
  checkpoint.optimizer_steps =
      std::stoll(value_of(next_line(), "optimizer_steps"));
  {
    const std::string words = value_of(next_line(), "sampler_state");
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
      const std::size_t comma = words.find(',', pos);
      const std::string word =
          comma == std::string::npos ? words.substr(pos)
                                     : words.substr(pos, comma - pos);
      checkpoint.sampler_state[i] = std::stoull(word);
      pos = comma == std::string::npos ? words.size() : comma + 1;
    }
  }
  checkpoint.sampler_cursor =
      std::stoll(value_of(next_line(), "sampler_cursor"));
  const auto param_floats =
      std::stoull(value_of(next_line(), "param_floats"));
  const auto moment_floats =
      std::stoull(value_of(next_line(), "moment_floats"));
  if (next_line() != "blob")
    throw Error(ErrorCode::verification, "checkpoint blob marker missing");

  const std::size_t expected =
      (param_floats + 2 * moment_floats) * sizeof(float);
  if (raw.size() - cursor != expected)
    throw Error(ErrorCode::verification,
                "checkpoint blob size mismatch in " + path);
  auto read_blob = [&](std::size_t count) {
    std::vector<float> blob(count);
    std::memcpy(blob.data(), raw.data() + cursor, count * sizeof(float));
    cursor += count * sizeof(float);
    return blob;
  };
  checkpoint.params = read_blob(param_floats);
  checkpoint.first_moments = read_blob(moment_floats);
  checkpoint.second_moments = read_blob(moment_floats);
  return checkpoint;
}

RunResult train_run(const RunConfig& config, const std::string& out_dir,
                    const std::string& resume_from) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  write_text_file(fs::path(out_dir) / "config.echo",
                  echo_run_config(config).serialize());

  const DatasetSplit split =
      sample_split(config.task, config.train_size, config.val_size,
                   config.seed, config.validation_seed);
  const PreparedDataset train_set = prepare_examples(config.task, split.train);
  const PreparedDataset val_set =
      prepare_examples(config.task, split.validation);

  const ModelConfig model_config =
      config.model_config(train_set.vocab.size(), train_set.seq_len);
  Parameters<float> params = init_params<float>(model_config);
  Parameters<float> grads = shaped_like<float>(model_config);
  AdamW<float> optimizer(config.adamw, params);
  EpochSampler sampler(mix64(config.seed ^ kShuffleSeedSalt),
                       static_cast<std::uint32_t>(config.train_size));
  std::int64_t start_update = 0;

  const std::string resume_config_echo = echo_run_config(config).serialize();
  if (!resume_from.empty()) {
    Checkpoint checkpoint = load_checkpoint(resume_from);
    if (echo_run_config(checkpoint.config).serialize() != resume_config_echo)
      throw Error(ErrorCode::config,
                  "checkpoint config does not match the requested run");
    unflatten(checkpoint.params, params);
    unflatten_moments(checkpoint.first_moments, optimizer.first_moments());
    unflatten_moments(checkpoint.second_moments,
                      optimizer.second_moments());
    optimizer.set_step_count(checkpoint.optimizer_steps);
    sampler.restore(checkpoint.sampler_state, checkpoint.sampler_cursor);
    start_update = checkpoint.update;
    if (start_update >= config.max_updates)
      throw Error(ErrorCode::config,
                  "checkpoint is already at or past max_updates");
  }

  const std::vector<std::uint32_t> train_eval = sample_subset(
      mix64(config.seed ^ kEvalSeedSalt),
      static_cast<std::uint32_t>(config.train_size),
      static_cast<std::uint32_t>(std::min<std::int64_t>(
          config.eval_train_subset, std::int64_t(config.train_size))));
  const std::vector<std::uint32_t> val_eval = sample_subset(
      mix64(config.seed ^ kEvalSeedSalt ^ 1),
      static_cast<std::uint32_t>(config.val_size),
      static_cast<std::uint32_t>(
          config.eval_val_subset == 0
              ? std::int64_t(config.val_size)
              : std::min<std::int64_t>(config.eval_val_subset,
                                       std::int64_t(config.val_size))));

  const fs::path metrics_file = fs::path(out_dir) / "metrics.csv";
  MetricsWriter metrics(metrics_file, start_update > 0);
  const LRSchedule schedule{config.lr_max, config.lr_min, config.max_updates};
  const double effective = double(config.effective_batch());
  const bool has_suffix = config.task.suffix_bits > 0;

  const fs::path checkpoint_file = fs::path(out_dir) / "checkpoint.bin";
  auto snapshot = [&](std::int64_t update) {
    Checkpoint checkpoint;
    checkpoint.config = config;
    checkpoint.update = update;
    checkpoint.optimizer_steps = optimizer.step_count();
    sampler.capture(checkpoint.sampler_state, checkpoint.sampler_cursor);
    checkpoint.params = flatten(params);
    checkpoint.first_moments = flatten_moments(optimizer.first_moments());
    checkpoint.second_moments = flatten_moments(optimizer.second_moments());
    return checkpoint;
  };

  RunResult result;
  double loss_sum = 0;
  std::int64_t loss_count = 0;
  int streak = 0;
  std::int64_t last_update = start_update;

  try {
    for (std::int64_t u = start_update + 1; u <= config.max_updates; ++u) {
      const double lr = cosine_lr(u - 1, schedule);
      for (auto& ref : tensor_refs(grads)) ref.tensor->setZero();

      double update_loss = 0;
      for (int micro = 0; micro < config.accumulation; ++micro) {
        for (int b = 0; b < config.micro_batch; ++b) {
          const auto& example = train_set.examples[sampler.next()];
          Graph<float> g;
          auto nodes = bind_params(g, params, grads);
          const int logits =
              forward_logits_node(g, nodes, model_config, example.ids);
          const int loss = loss_on_regions_node(g, logits, example.ids,
                                                example.target, example.suffix);
          update_loss += double(g.value(loss)(0, 0));
          g.backward(loss);
        }
      }
      const float inv_batch = float(1.0 / effective);
      for (auto& ref : tensor_refs(grads)) *ref.tensor *= inv_batch;
      optimizer.step(params, grads, lr);
      loss_sum += update_loss / effective;
      ++loss_count;
      last_update = u;

      if (config.checkpoint_every > 0 && u % config.checkpoint_every == 0 &&
          u < config.max_updates) {
        char name[32];
        std::snprintf(name, sizeof(name), "checkpoint_u%08lld.bin",
                      static_cast<long long>(u));
        save_checkpoint((fs::path(out_dir) / name).string(), snapshot(u));
      }

      if (u % config.eval_every == 0) {
        const EvalOutcome train_eval_result =
            evaluate_exact_match(params, train_set, train_eval);
        const EvalOutcome val_eval_result =
            evaluate_exact_match(params, val_set, val_eval);
        const double mean_loss = loss_sum / double(loss_count);
        loss_sum = 0;
        loss_count = 0;

        metrics.row(config.run_id, u, "train", "loss", mean_loss);
        metrics.row(config.run_id, u, "train", "lr", lr);
        metrics.row(config.run_id, u, "train", "exact_match",
                    train_eval_result.matrix_accuracy);
        metrics.row(config.run_id, u, "train", "token_accuracy",
                    train_eval_result.token_accuracy);
        if (has_suffix) {
          metrics.row(config.run_id, u, "train", "suffix_exact_match",
                      train_eval_result.suffix_accuracy);
          metrics.row(config.run_id, u, "train", "suffix_bit_accuracy",
                      train_eval_result.suffix_bit_accuracy);
        }
        metrics.row(config.run_id, u, "val", "exact_match",
                    val_eval_result.matrix_accuracy);
        metrics.row(config.run_id, u, "val", "token_accuracy",
                    val_eval_result.token_accuracy);
        if (has_suffix)
          metrics.row(config.run_id, u, "val", "suffix_exact_match",
                      val_eval_result.suffix_accuracy);
        metrics.flush_checked();

        result.final_train = train_eval_result;
        result.final_val = val_eval_result;

        const bool reached =
            train_eval_result.matrix_accuracy >= config.early_stop_threshold &&
            (config.early_stop_train_only ||
             val_eval_result.matrix_accuracy >= config.early_stop_threshold);
        streak = reached ? streak + 1 : 0;
        if (config.early_stop && streak >= config.early_stop_patience) {
          result.early_stopped = true;
          break;
        }
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io) {
      save_checkpoint(checkpoint_file.string(), snapshot(last_update));
    }
    throw;
  }

  result.updates_run = last_update;
  result.censored = !result.early_stopped;
  save_checkpoint(checkpoint_file.string(), snapshot(last_update));
  result.metrics_path = metrics_file.string();
  result.checkpoint_path = checkpoint_file.string();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();

  KeyValueFile summary;
  summary.set("run_id", config.run_id);
  summary.set_int("updates_run", result.updates_run);
  summary.set("censored", result.censored ? "true" : "false");
  summary.set("early_stopped", result.early_stopped ? "true" : "false");
  summary.set_double("final_train_exact_match",
                     result.final_train.matrix_accuracy);
  summary.set_double("final_val_exact_match",
                     result.final_val.matrix_accuracy);
  if (has_suffix)
    summary.set_double("final_train_suffix_exact_match",
                       result.final_train.suffix_accuracy);
  if (!config.deterministic)
    summary.set_double("wall_seconds", result.wall_seconds);
  summary.save(fs::path(out_dir) / "run_result.meta");
  return result;
}

std::vector<SweepCell> run_sweep(const KeyValueFile& manifest,
                                 const std::string& out_root, int parallel,
                                 bool deterministic) {
  const auto train_sizes = manifest.get_int_list("train_sizes");
  const auto depths = manifest.get_int_list("depths");
  const auto seeds = manifest.get_int_list("seeds");
  if (train_sizes.empty() || depths.empty() || seeds.empty())
    throw Error(ErrorCode::config, "sweep grid must be non-empty");

  std::vector<SweepCell> cells;
  for (const auto n : train_sizes) {
    for (const auto depth : depths) {
      for (const auto seed : seeds) {
        if (n < 1 || depth < 1 || seed < 0)
          throw Error(ErrorCode::config, "sweep grid entries must be valid");
        KeyValueFile cell_file = manifest;
        cell_file.set_u64("train_size", std::uint64_t(n));
        cell_file.set_int("depth", depth);
        cell_file.set_u64("seed", std::uint64_t(seed));
        const std::string run_id =
            manifest.get_or("family", "nw") +
            manifest.get_or("length", "5") + "_N" + std::to_string(n) + "_D" +
            std::to_string(depth) + "_s" + std::to_string(seed);
        cell_file.set("run_id", run_id);
        if (deterministic) cell_file.set("deterministic", "true");

        SweepCell cell;
        cell.out_dir = (fs::path(out_root) / run_id).string();
        cell.status = "failed";
        // Oversubscribed or otherwise invalid cells are recorded, not fatal.
        try {
          cell.config = parse_run_config(cell_file);
          cell.config_hash =
              hex64(fnv1a64(echo_run_config(cell.config).serialize()));
        } catch (const std::exception& e) {
          cell.config.run_id = run_id;
          cell.config_hash = hex64(fnv1a64(cell_file.serialize()));
          cell.detail = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }

  fs::create_directories(out_root);
  write_text_file(fs::path(out_root) / "sweep_config.echo",
                  manifest.serialize());

  std::atomic<std::size_t> next_cell{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next_cell.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      if (!cell.detail.empty()) continue;  // config already failed
      try {
        const RunResult result = train_run(cell.config, cell.out_dir);
        cell.status = result.early_stopped ? "done" : "censored-budget";
        cell.detail = "updates=" + std::to_string(result.updates_run);
      } catch (const std::exception& e) {
        cell.status = "failed";
        cell.detail = e.what();
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      std::string line = "[sweep] " + cell.config.run_id + " " + cell.status;
      std::fputs((line + "\n").c_str(), stdout);
      std::fflush(stdout);
    }
  };

  const int workers = std::max(1, parallel);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& thread : pool) thread.join();

  std::string table = "run_id\tconfig_hash\tseed\tpath\tstatus\tdetail\n";
  for (auto& cell : cells) {
    std::string detail = cell.detail;
    for (auto& c : detail)
      if (c == '\t' || c == '\n') c = ' ';
    table += cell.config.run_id + "\t" + cell.config_hash + "\t" +
             std::to_string(cell.config.seed) + "\t" + cell.out_dir + "\t" +
             cell.status + "\t" + detail + "\n";
  }
  write_text_file(fs::path(out_root) / "manifest.tsv", table);
  return cells;
}

}  // namespace nwlab
