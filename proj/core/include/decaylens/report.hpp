// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decaylens/frequency.hpp"
#include "decaylens/metrics_log.hpp"
#include "decaylens/trainer.hpp"
#include "decaylens/ufm.hpp"

namespace decaylens {

enum class FigureKind {
  LossVsLambdaLowHigh,
  PerBinBoxplot,
  SpeedScatter,
  CoverageCurve,
  Histogram,
  UfmLossVsLambda,
};

FigureKind figure_kind_from_string(const std::string& name);
std::string figure_kind_name(FigureKind kind);

struct SeriesPoint {
  double x = 0.0;
  double y = 0.0;
};

struct Series {
  std::string name;
  std::vector<SeriesPoint> points;
};

// Five-number summary; whiskers at min/max within 1.5 IQR of the quartile
// box. Quartiles by linear interpolation on the sorted sample.
struct BoxStats {
  double whisker_lo = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_hi = 0.0;
  std::size_t count = 0;
};
BoxStats box_stats(std::vector<double> values);

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  bool scatter = false;  // points instead of polylines
};

// Writes <out>.svg plus a sidecar <out>.csv holding exactly the plotted
// numbers (series,x,y). Throws when every series is empty.
void emit_series_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                        std::span<const Series> series);

struct LabeledBox {
  std::string label;
  BoxStats stats;
};
void emit_boxplot_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                         std::span<const LabeledBox> boxes);

struct HistogramBar {
  std::string label;
  double value = 0.0;
};
void emit_histogram_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                           std::span<const HistogramBar> bars);

// Figure request referencing previously produced artifacts.
struct ReportSpec {
  FigureKind kind = FigureKind::CoverageCurve;
  std::vector<std::filesystem::path> run_logs;      // metric JSONL files
  std::optional<std::filesystem::path> stats_json;  // frequency table
  std::optional<std::filesystem::path> ufm_sweep_csv;
  FrequencyKind frequency_kind = FrequencyKind::NextToken;
  std::filesystem::path out_svg;
};
void emit_figure(const ReportSpec& spec);

// Aggregated sweep metrics, one row per lambda:
// lambda,runs,training_loss_mean,training_loss_std,per_token_loss_mean,
// per_token_loss_std,per_token_ppl_mean,per_token_ppl_std,
// per_token_accuracy_mean,per_token_accuracy_std
void write_sweep_summary_csv(const std::filesystem::path& path,
                             std::span<const SweepAggregate> aggregates);

// Per (lambda, seed, bin) breakdown of final-checkpoint statistics.
struct BinBreakdownRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int bin_index = 0;
  std::int64_t lower = 0;
  std::int64_t upper = 0;
  double token_fraction = 0.0;
  std::size_t tokens = 0;
  std::optional<double> mean_loss;
  std::optional<double> mean_acc;
  std::optional<double> mean_speed;
};
void write_bin_breakdown_csv(const std::filesystem::path& path,
                             std::span<const BinBreakdownRow> rows);

struct UfmSweepRow {
  double lambda = 0.0;
  int token = 0;
  std::int64_t n = 0;
  double gap = 0.0;
  bool neglected = false;
  double loss_scaled_own = 0.0;
  double loss_full_own = 0.0;
  double loss_gap_form = 0.0;
};
void write_ufm_sweep_csv(const std::filesystem::path& path, std::span<const UfmSweepRow> rows);
std::vector<UfmSweepRow> read_ufm_sweep_csv(const std::filesystem::path& path);

}  // namespace decaylens
