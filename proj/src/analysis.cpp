#include "nwlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

namespace nwlab {

namespace fs = std::filesystem;

void AccuracySeries::validate() const {
  if (t.size() != accuracy.size())
    throw Error(ErrorCode::shape_mismatch, "series fields differ in length");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && t[i] <= t[i - 1])
      throw Error(ErrorCode::verification, "series t must strictly increase");
    if (accuracy[i] < 0.0 || accuracy[i] > 1.0)
      throw Error(ErrorCode::verification, "accuracy outside [0, 1]");
  }
}

CrossingRecord crossing_time(const AccuracySeries& series, double tau) {
  if (series.empty())
    throw Error(ErrorCode::config, "crossing time of an empty series");
  if (!(tau > 0.0) || !(tau < 1.0))
    throw Error(ErrorCode::config, "threshold must lie in (0, 1)");
  series.validate();

  CrossingRecord record;
  record.tau = tau;
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    if (series.accuracy[i] >= tau) {
      record.censored = false;
      record.crossing = series.t[i];
      break;
    }
  }
  return record;
}

SeedAggregate aggregate_seeds(const std::vector<CrossingRecord>& records) {
  SeedAggregate aggregate;
  aggregate.n_seeds = static_cast<int>(records.size());
  double sum = 0;
  std::vector<double> crossings;
  for (const auto& record : records) {
    if (record.censored) {
      ++aggregate.n_censored;
    } else {
      crossings.push_back(double(record.crossing));
      sum += double(record.crossing);
    }
  }
  const int crossed = aggregate.n_seeds - aggregate.n_censored;
  aggregate.censored = !(2 * crossed > aggregate.n_seeds);
  if (!crossings.empty()) {
    aggregate.mean_crossing = sum / double(crossings.size());
    double sq = 0;
    for (double c : crossings) {
      const double d = c - aggregate.mean_crossing;
      sq += d * d;
    }
    aggregate.sd_crossing = std::sqrt(sq / double(crossings.size()));
  }
  return aggregate;
}

std::optional<std::uint64_t> critical_size(const SweepSummary& summary,
                                           double tau) {
  std::optional<std::uint64_t> best;
  for (const auto& row : summary.rows) {
    if (row.source != "val" || row.tau != tau || row.aggregate.censored)
      continue;
    if (!best || row.n < *best) best = row.n;
  }
  return best;
}

std::optional<std::uint64_t> sweet_spot(const SweepSummary& summary,
                                        double tau) {
  std::optional<std::uint64_t> best;
  double best_time = 0;
  for (const auto& row : summary.rows) {
    if (row.source != "val" || row.tau != tau || row.aggregate.censored)
      continue;
    const double time = row.aggregate.mean_crossing;
    if (!best || time < best_time || (time == best_time && row.n < *best)) {
      best = row.n;
      best_time = time;
    }
  }
  return best;
}

AccuracySeries gap_series(const AccuracySeries& train,
                          const AccuracySeries& suffix) {
  if (train.t != suffix.t)
    throw Error(ErrorCode::shape_mismatch, "gap series grids do not align");
  AccuracySeries gap;
  gap.t = train.t;
  gap.budget = train.budget;
  gap.accuracy.resize(train.accuracy.size());
  for (std::size_t i = 0; i < train.accuracy.size(); ++i)
    gap.accuracy[i] = train.accuracy[i] - suffix.accuracy[i];
  return gap;
}

double to_epochs(std::int64_t t, std::uint64_t n,
                 std::int64_t effective_batch) {
  if (n == 0 || effective_batch <= 0)
    throw Error(ErrorCode::config, "epoch conversion needs positive N and batch");
  return double(t) * double(effective_batch) / double(n);
}

double decomposition_residual(const AccuracySeries& train,
                              const AccuracySeries& suffix,
                              const AccuracySeries& val) {
  if (train.t != suffix.t || train.t != val.t)
    throw Error(ErrorCode::shape_mismatch, "residual grids do not align");
  bool val_reaches_half = false;
  for (double a : val.accuracy) val_reaches_half |= a > 0.5;
  double residual = 0;
  for (std::size_t i = 0; i < train.t.size(); ++i) {
    if (val_reaches_half && val.accuracy[i] > 0.5) continue;
    residual = std::max(
        residual,
        std::abs(train.accuracy[i] - (suffix.accuracy[i] + val.accuracy[i])));
  }
  return residual;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line =
        text.substr(pos, end == std::string::npos ? std::string::npos
                                                  : end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != "run_id,t,split,metric,value")
        throw Error(ErrorCode::verification,
                    "unexpected metrics header: " + line);
      continue;
    }
    MetricsRow row;
    std::size_t field_pos = 0;
    std::string fields[5];
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', field_pos);
      if (comma == std::string::npos)
        throw Error(ErrorCode::verification, "malformed metrics row: " + line);
      fields[f] = line.substr(field_pos, comma - field_pos);
      field_pos = comma + 1;
    }
    fields[4] = line.substr(field_pos);
    row.run_id = fields[0];
    row.t = std::stoll(fields[1]);
    row.split = fields[2];
    row.metric = fields[3];
    row.value = std::stod(fields[4]);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

AccuracySeries extract_series(const std::vector<MetricsRow>& rows,
                              const std::string& split,
                              const std::string& metric,
                              std::int64_t budget) {
  AccuracySeries series;
  series.budget = budget;
  for (const auto& row : rows) {
    if (row.split == split && row.metric == metric) {
      series.t.push_back(row.t);
      series.accuracy.push_back(row.value);
    }
  }
  return series;
}

}  // namespace

RunSeries load_run_series(const std::string& run_dir) {
  const fs::path dir(run_dir);
  RunSeries run;
  run.config = parse_run_config(KeyValueFile::load(dir / "config.echo"));
  const auto rows = parse_metrics_csv(read_text_file(dir / "metrics.csv"));
  run.train_em =
      extract_series(rows, "train", "exact_match", run.config.max_updates);
  run.val_em =
      extract_series(rows, "val", "exact_match", run.config.max_updates);
  run.train_suffix_em = extract_series(rows, "train", "suffix_exact_match",
                                       run.config.max_updates);
  run.train_em.validate();
  run.val_em.validate();
  run.train_suffix_em.validate();
  if (run.train_em.empty() || run.val_em.empty())
    throw Error(ErrorCode::verification,
                "run " + run_dir + " has no accuracy series");
  return run;
}

void analyze_runs(const std::string& runs_root, const std::string& out_dir,
                  const std::vector<double>& taus) {
  if (taus.empty())
    throw Error(ErrorCode::config, "at least one threshold is required");
  for (double tau : taus)
    if (!(tau > 0.0) || !(tau < 1.0))
      throw Error(ErrorCode::config, "thresholds must lie in (0, 1)");

  std::vector<fs::path> run_dirs;
  if (fs::is_directory(runs_root)) {
    for (const auto& entry : fs::directory_iterator(runs_root)) {
      if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv") &&
          fs::exists(entry.path() / "config.echo"))
        run_dirs.push_back(entry.path());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty())
    throw Error(ErrorCode::config,
                "no completed runs found under " + runs_root);

  std::vector<RunSeries> runs;
  runs.reserve(run_dirs.size());
  for (const auto& dir : run_dirs) runs.push_back(load_run_series(dir.string()));

  fs::create_directories(out_dir);

  // Per-run series and index.
  std::string index =
      "run_id,family,length,train_size,depth,seed,suffix_bits,max_updates,"
      "effective_batch,final_val_exact_match,decomposition_residual\n";
  for (const auto& run : runs) {
    const bool has_suffix = !run.train_suffix_em.empty();
    std::string series = "t,epochs,train_em,val_em,train_suffix_em,gap\n";
    AccuracySeries gap;
    if (has_suffix) gap = gap_series(run.train_em, run.train_suffix_em);
    for (std::size_t i = 0; i < run.train_em.t.size(); ++i) {
      const std::int64_t t = run.train_em.t[i];
      series += std::to_string(t) + "," +
                format_double(to_epochs(t, run.config.train_size,
                                        run.config.effective_batch())) +
                "," + format_double(run.train_em.accuracy[i]) + "," +
                format_double(run.val_em.accuracy[i]);
      if (has_suffix)
        series += "," + format_double(run.train_suffix_em.accuracy[i]) + "," +
                  format_double(gap.accuracy[i]);
      else
        series += ",,";
      series += "\n";
    }
    write_text_file(fs::path(out_dir) / ("series_" + run.config.run_id + ".csv"),
                    series);

    index += run.config.run_id + "," + family_name(run.config.task.family) +
             "," + std::to_string(run.config.task.length) + "," +
             u128_to_string(run.config.train_size) + "," +
             std::to_string(run.config.depth) + "," +
             std::to_string(run.config.seed) + "," +
             std::to_string(run.config.task.suffix_bits) + "," +
             std::to_string(run.config.max_updates) + "," +
             std::to_string(run.config.effective_batch()) + "," +
             format_double(run.val_em.accuracy.back()) + ",";
    if (has_suffix)
      index += format_double(decomposition_residual(
          run.train_em, run.train_suffix_em, run.val_em));
    index += "\n";
  }
  write_text_file(fs::path(out_dir) / "runs_index.csv", index);

  // Group by (family, length, depth); aggregate seeds per (N, tau, source).
  std::map<std::string, std::vector<const RunSeries*>> groups;
  for (const auto& run : runs) {
    const std::string key = family_name(run.config.task.family) +
                            std::to_string(run.config.task.length) + "_D" +
                            std::to_string(run.config.depth);
    groups[key].push_back(&run);
  }

  for (const auto& [key, members] : groups) {
    std::set<std::uint64_t> sizes;
    for (const auto* run : members) sizes.insert(run->config.train_size);

    SweepSummary summary;
    for (std::uint64_t n : sizes)
      summary.n_max = std::max(summary.n_max, n);
    for (const std::uint64_t n : sizes) {
      for (const double tau : taus) {
        for (const char* source : {"train", "val"}) {
          std::vector<CrossingRecord> records;
          for (const auto* run : members) {
            if (run->config.train_size != n) continue;
            const AccuracySeries& series =
                std::string(source) == "train" ? run->train_em : run->val_em;
            CrossingRecord record = crossing_time(series, tau);
            record.source = source;
            records.push_back(record);
          }
          SummaryRow row;
          row.n = n;
          row.tau = tau;
          row.source = source;
          row.aggregate = aggregate_seeds(records);
          summary.rows.push_back(std::move(row));
        }
      }
    }

    std::string table = "N,tau,source,mean_crossing,sd,n_censored,n_seeds\n";
    for (const auto& row : summary.rows) {
      table += u128_to_string(row.n) + "," + format_double(row.tau) + "," +
               row.source + ",";
      if (row.aggregate.censored)
        table += "censored," + format_double(row.aggregate.sd_crossing);
      else
        table += format_double(row.aggregate.mean_crossing) + "," +
                 format_double(row.aggregate.sd_crossing);
      table += "," + std::to_string(row.aggregate.n_censored) + "," +
               std::to_string(row.aggregate.n_seeds) + "\n";
    }
    write_text_file(fs::path(out_dir) / ("summary_" + key + ".csv"), table);

    KeyValueFile derived;
    derived.set("group", key);
    derived.set("aggregation_rule", kAggregationRule);
    derived.set_u64("n_max", summary.n_max);
    std::string tau_list;
    for (double tau : taus)
      tau_list += (tau_list.empty() ? "" : ",") + format_double(tau);
    derived.set("taus", tau_list);
    for (const double tau : taus) {
      const auto nc = critical_size(summary, tau);
      const auto ns = sweet_spot(summary, tau);
      derived.set("critical_size_" + format_double(tau),
                  nc ? u128_to_string(*nc) : "undefined");
      derived.set("sweet_spot_" + format_double(tau),
                  ns ? u128_to_string(*ns) : "undefined");
    }
    derived.save(fs::path(out_dir) / ("derived_" + key + ".kv"));
  }
}

}  // namespace nwlab
