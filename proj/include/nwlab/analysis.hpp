#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nwlab/runner.hpp"

namespace nwlab {

struct AccuracySeries {
  std::vector<std::int64_t> t;
  std::vector<double> accuracy;
  std::int64_t budget = 0;

  bool empty() const noexcept { return t.empty(); }
  void validate() const;
};

struct CrossingRecord {
  double tau = 0;
  bool censored = true;
  std::int64_t crossing = 0;  // meaningful only when not censored
  std::string source;         // "train" or "val"
};

// First sampled t with accuracy >= tau; crossings snap to the evaluation
// grid, never interpolated.
CrossingRecord crossing_time(const AccuracySeries& series, double tau);

struct SeedAggregate {
  int n_seeds = 0;
  int n_censored = 0;
  bool censored = true;  // majority rule: non-censored iff most seeds cross
  double mean_crossing = 0;  // over crossing seeds
  double sd_crossing = 0;    // population standard deviation
};

inline constexpr const char* kAggregationRule =
    "cell non-censored iff a strict majority of seeds cross; aggregate time "
    "is the mean over crossing seeds, spread is the population sd";

SeedAggregate aggregate_seeds(const std::vector<CrossingRecord>& records);

struct SummaryRow {
  std::uint64_t n = 0;
  double tau = 0;
  std::string source;
  SeedAggregate aggregate;
};

struct SweepSummary {
  std::vector<SummaryRow> rows;
  std::uint64_t n_max = 0;
};

// Smallest N whose aggregated validation crossing is non-censored.
std::optional<std::uint64_t> critical_size(const SweepSummary& summary,
                                           double tau);
// N minimizing the aggregated validation crossing time; ties break toward
// smaller N; censored cells are excluded.
std::optional<std::uint64_t> sweet_spot(const SweepSummary& summary,
                                        double tau);

// Pointwise A_T - A_R on a shared sample grid.
AccuracySeries gap_series(const AccuracySeries& train,
                          const AccuracySeries& suffix);

double to_epochs(std::int64_t t, std::uint64_t n, std::int64_t effective_batch);

// max_t |A_T - (A_R + A_V)| over the early-transition window (samples with
// A_V <= 0.5, or the whole series when validation never reaches 0.5).
// Reported as a diagnostic, never asserted.
double decomposition_residual(const AccuracySeries& train,
                              const AccuracySeries& suffix,
                              const AccuracySeries& val);

struct MetricsRow {
  std::string run_id;
  std::int64_t t = 0;
  std::string split;
  std::string metric;
  double value = 0;
};

std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct RunSeries {
  RunConfig config;
  AccuracySeries train_em;
  AccuracySeries val_em;
  AccuracySeries train_suffix_em;  // empty unless the task carries suffix bits
};

RunSeries load_run_series(const std::string& run_dir);

// Scans runs_root for run directories (metrics.csv + config.echo), groups
// them by (family, length, depth), and writes per-group summary_*.csv and
// derived_*.kv files plus per-run series_*.csv and a runs_index.csv under
// out_dir.
void analyze_runs(const std::string& runs_root, const std::string& out_dir,
                  const std::vector<double>& taus);

}  // namespace nwlab
