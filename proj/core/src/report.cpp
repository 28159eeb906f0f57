// SPDX-License-Identifier: Apache-2.0
#include "decaylens/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "decaylens/io.hpp"

namespace decaylens {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 500.0;
constexpr double kMarginLeft = 80.0;
constexpr double kMarginRight = 30.0;
constexpr double kMarginTop = 50.0;
constexpr double kMarginBottom = 60.0;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct AxisScale {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double map(double v, double pixel_lo, double pixel_hi) const {
    double t;
    if (log) {
      t = (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
    } else {
      t = (v - lo) / (hi - lo);
    }
    return pixel_lo + t * (pixel_hi - pixel_lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const int e_lo = static_cast<int>(std::floor(std::log10(lo)));
      const int e_hi = static_cast<int>(std::ceil(std::log10(hi)));
      for (int e = e_lo; e <= e_hi; ++e) {
        const double v = std::pow(10.0, e);
        if (v >= lo * 0.999 && v <= hi * 1.001) {
          out.push_back(v);
        }
      }
      if (out.size() < 2) {
        out = {lo, hi};
      }
      return out;
    }
    const double span = hi - lo;
    const double raw_step = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
    double step = mag;
    for (const double m : {1.0, 2.0, 5.0, 10.0}) {
      if (mag * m >= raw_step) {
        step = mag * m;
        break;
      }
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) {
      out.push_back(v);
    }
    return out;
  }
};

AxisScale make_scale(double lo, double hi, bool log) {
  AxisScale scale;
  scale.log = log;
  if (log) {
    if (!(lo > 0.0)) {
      lo = 1e-12;
    }
    if (hi <= lo) {
      hi = lo * 10.0;
    }
    scale.lo = lo;
    scale.hi = hi;
    return scale;
  }
  if (hi <= lo) {
    hi = lo + 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  scale.lo = lo - pad;
  scale.hi = hi + pad;
  return scale;
}

class SvgBuilder {
 public:
  SvgBuilder(const std::string& title, const std::string& x_label, const std::string& y_label) {
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
          << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    body_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    body_ << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          << "font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title) << "</text>\n";
    body_ << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
          << xml_escape(x_label) << "</text>\n";
    body_ << "<text x=\"18\" y=\"" << kHeight / 2
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          << "transform=\"rotate(-90 18 " << kHeight / 2 << ")\">" << xml_escape(y_label)
          << "</text>\n";
  }

  void axes(const AxisScale& x, const AxisScale& y) {
    body_ << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
          << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
          << "\" stroke=\"black\"/>\n";
    body_ << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
          << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    for (const double t : x.ticks()) {
      const double px = x.map(t, kMarginLeft, kWidth - kMarginRight);
      body_ << "<line x1=\"" << format_double(px) << "\" y1=\"" << kHeight - kMarginBottom
            << "\" x2=\"" << format_double(px) << "\" y2=\"" << kHeight - kMarginBottom + 5
            << "\" stroke=\"black\"/>\n";
      body_ << "<text x=\"" << format_double(px) << "\" y=\"" << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << format_double(t) << "</text>\n";
    }
    for (const double t : y.ticks()) {
      const double py = y.map(t, kHeight - kMarginBottom, kMarginTop);
      body_ << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << format_double(py) << "\" x2=\""
            << kMarginLeft << "\" y2=\"" << format_double(py) << "\" stroke=\"black\"/>\n";
      body_ << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << format_double(py + 3)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
            << format_double(t) << "</text>\n";
    }
  }

  void polyline(const std::vector<std::pair<double, double>>& pixels, const std::string& color) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [px, py] : pixels) {
      body_ << format_double(px) << "," << format_double(py) << " ";
    }
    body_ << "\"/>\n";
  }

  void circle(double px, double py, double r, const std::string& color) {
    body_ << "<circle cx=\"" << format_double(px) << "\" cy=\"" << format_double(py) << "\" r=\""
          << r << "\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
  }

  void rect(double px, double py, double w, double h, const std::string& fill) {
    body_ << "<rect x=\"" << format_double(px) << "\" y=\"" << format_double(py) << "\" width=\""
          << format_double(w) << "\" height=\"" << format_double(h) << "\" fill=\"" << fill
          << "\" stroke=\"black\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color) {
    body_ << "<line x1=\"" << format_double(x1) << "\" y1=\"" << format_double(y1) << "\" x2=\""
          << format_double(x2) << "\" y2=\"" << format_double(y2) << "\" stroke=\"" << color
          << "\"/>\n";
  }

  void legend(const std::vector<std::string>& names) {
    double y = kMarginTop + 6;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string color = kPalette[i % std::size(kPalette)];
      body_ << "<rect x=\"" << kWidth - kMarginRight - 150 << "\" y=\"" << format_double(y - 8)
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
      body_ << "<text x=\"" << kWidth - kMarginRight - 135 << "\" y=\"" << format_double(y + 1)
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << xml_escape(names[i])
            << "</text>\n";
      y += 16;
    }
  }

  void text_center(double px, double py, const std::string& content) {
    body_ << "<text x=\"" << format_double(px) << "\" y=\"" << format_double(py)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
          << xml_escape(content) << "</text>\n";
  }

  std::string finish() {
    body_ << "</svg>\n";
    return body_.str();
  }

 private:
  std::ostringstream body_;
};

std::filesystem::path sidecar_csv_path(const std::filesystem::path& svg) {
  std::filesystem::path p = svg;
  p.replace_extension(".csv");
  return p;
}

}  // namespace

FigureKind figure_kind_from_string(const std::string& name) {
  if (name == "loss_vs_lambda_low_high") return FigureKind::LossVsLambdaLowHigh;
  if (name == "per_bin_boxplot") return FigureKind::PerBinBoxplot;
  if (name == "speed_scatter") return FigureKind::SpeedScatter;
  if (name == "coverage_curve") return FigureKind::CoverageCurve;
  if (name == "histogram") return FigureKind::Histogram;
  if (name == "ufm_loss_vs_lambda") return FigureKind::UfmLossVsLambda;
  throw std::invalid_argument("unknown figure kind: " + name);
}

std::string figure_kind_name(FigureKind kind) {
  switch (kind) {
    case FigureKind::LossVsLambdaLowHigh: return "loss_vs_lambda_low_high";
    case FigureKind::PerBinBoxplot: return "per_bin_boxplot";
    case FigureKind::SpeedScatter: return "speed_scatter";
    case FigureKind::CoverageCurve: return "coverage_curve";
    case FigureKind::Histogram: return "histogram";
    case FigureKind::UfmLossVsLambda: return "ufm_loss_vs_lambda";
  }
  throw std::logic_error("figure_kind_name: unreachable");
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("box_stats: empty sample");
  }
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  BoxStats stats;
  stats.count = values.size();
  stats.q1 = quantile(0.25);
  stats.median = quantile(0.5);
  stats.q3 = quantile(0.75);
  const double iqr = stats.q3 - stats.q1;
  const double lo_fence = stats.q1 - 1.5 * iqr;
  const double hi_fence = stats.q3 + 1.5 * iqr;
  stats.whisker_lo = values.back();
  stats.whisker_hi = values.front();
  for (const double v : values) {
    if (v >= lo_fence) {
      stats.whisker_lo = std::min(stats.whisker_lo, v);
    }
    if (v <= hi_fence) {
      stats.whisker_hi = std::max(stats.whisker_hi, v);
    }
  }
  return stats;
}

void emit_series_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                        std::span<const Series> series) {
  std::size_t total_points = 0;
  for (const auto& s : series) {
    total_points += s.points.size();
  }
  if (series.empty() || total_points == 0) {
    throw std::invalid_argument("emit_series_figure: no data in any series for " +
                                out_svg.string());
  }
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      if (first) {
        x_lo = x_hi = p.x;
        y_lo = y_hi = p.y;
        first = false;
      }
      x_lo = std::min(x_lo, p.x);
      x_hi = std::max(x_hi, p.x);
      y_lo = std::min(y_lo, p.y);
      y_hi = std::max(y_hi, p.y);
    }
  }
  const AxisScale x = make_scale(x_lo, x_hi, options.log_x);
  const AxisScale y = make_scale(y_lo, y_hi, options.log_y);

  SvgBuilder svg(options.title, options.x_label, options.y_label);
  svg.axes(x, y);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::string color = kPalette[i % std::size(kPalette)];
    names.push_back(series[i].name);
    std::vector<std::pair<double, double>> pixels;
    pixels.reserve(series[i].points.size());
    for (const auto& p : series[i].points) {
      pixels.emplace_back(x.map(p.x, kMarginLeft, kWidth - kMarginRight),
                          y.map(p.y, kHeight - kMarginBottom, kMarginTop));
    }
    if (options.scatter) {
      for (const auto& [px, py] : pixels) {
        svg.circle(px, py, 2.5, color);
      }
    } else {
      svg.polyline(pixels, color);
      for (const auto& [px, py] : pixels) {
        svg.circle(px, py, 3.0, color);
      }
    }
  }
  if (series.size() > 1) {
    svg.legend(names);
  }
  atomic_write_file(out_svg, svg.finish());

  std::string csv = "series,x,y\n";
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      csv += csv_escape(s.name);
      csv += ',';
      csv += format_double(p.x);
      csv += ',';
      csv += format_double(p.y);
      csv += '\n';
    }
  }
  atomic_write_file(sidecar_csv_path(out_svg), csv);
}

void emit_boxplot_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                         std::span<const LabeledBox> boxes) {
  if (boxes.empty()) {
    throw std::invalid_argument("emit_boxplot_figure: no boxes for " + out_svg.string());
  }
  double y_lo = boxes[0].stats.whisker_lo;
  double y_hi = boxes[0].stats.whisker_hi;
  for (const auto& box : boxes) {
    y_lo = std::min(y_lo, box.stats.whisker_lo);
    y_hi = std::max(y_hi, box.stats.whisker_hi);
  }
  const AxisScale y = make_scale(y_lo, y_hi, options.log_y);
  SvgBuilder svg(options.title, options.x_label, options.y_label);
  const AxisScale x_dummy{0.0, 1.0, false};
  svg.axes(x_dummy, y);
  const double plot_width = kWidth - kMarginLeft - kMarginRight;
  const double slot = plot_width / static_cast<double>(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& stats = boxes[i].stats;
    const double cx = kMarginLeft + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(20.0, slot * 0.35);
    const auto py = [&](double v) { return y.map(v, kHeight - kMarginBottom, kMarginTop); };
    svg.line(cx, py(stats.whisker_lo), cx, py(stats.q1), "black");
    svg.line(cx, py(stats.q3), cx, py(stats.whisker_hi), "black");
    svg.rect(cx - half, py(stats.q3), 2 * half, py(stats.q1) - py(stats.q3), "#9ecae1");
    svg.line(cx - half, py(stats.median), cx + half, py(stats.median), "#08519c");
    svg.line(cx - half / 2, py(stats.whisker_lo), cx + half / 2, py(stats.whisker_lo), "black");
    svg.line(cx - half / 2, py(stats.whisker_hi), cx + half / 2, py(stats.whisker_hi), "black");
    svg.text_center(cx, kHeight - kMarginBottom + 18, boxes[i].label);
  }
  atomic_write_file(out_svg, svg.finish());

  std::string csv = "label,count,whisker_lo,q1,median,q3,whisker_hi\n";
  for (const auto& box : boxes) {
    csv += csv_escape(box.label);
    csv += ',' + std::to_string(box.stats.count);
    csv += ',' + format_double(box.stats.whisker_lo);
    csv += ',' + format_double(box.stats.q1);
    csv += ',' + format_double(box.stats.median);
    csv += ',' + format_double(box.stats.q3);
    csv += ',' + format_double(box.stats.whisker_hi);
    csv += '\n';
  }
  atomic_write_file(sidecar_csv_path(out_svg), csv);
}

void emit_histogram_figure(const std::filesystem::path& out_svg, const ChartOptions& options,
                           std::span<const HistogramBar> bars) {
  if (bars.empty()) {
    throw std::invalid_argument("emit_histogram_figure: no bars for " + out_svg.string());
  }
  double y_hi = 0.0;
  for (const auto& bar : bars) {
    y_hi = std::max(y_hi, bar.value);
  }
  const AxisScale y = make_scale(0.0, y_hi, options.log_y);
  SvgBuilder svg(options.title, options.x_label, options.y_label);
  const AxisScale x_dummy{0.0, 1.0, false};
  svg.axes(x_dummy, y);
  const double plot_width = kWidth - kMarginLeft - kMarginRight;
  const double slot = plot_width / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double cx = kMarginLeft + slot * (static_cast<double>(i) + 0.5);
    const double half = slot * 0.4;
    const double top = y.map(bars[i].value, kHeight - kMarginBottom, kMarginTop);
    svg.rect(cx - half, top, 2 * half, (kHeight - kMarginBottom) - top, "#74c476");
    svg.text_center(cx, kHeight - kMarginBottom + 18, bars[i].label);
  }
  atomic_write_file(out_svg, svg.finish());

  std::string csv = "label,value\n";
  for (const auto& bar : bars) {
    csv += csv_escape(bar.label);
    csv += ',' + format_double(bar.value);
    csv += '\n';
  }
  atomic_write_file(sidecar_csv_path(out_svg), csv);
}

namespace {

// Per-token final-checkpoint loss/acc and learning speed for one run log.
struct RunDigest {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<PerTokenRecord> final_tokens;
  std::vector<TokenTrajectory> trajectories;
};

RunDigest digest_log(const std::filesystem::path& path) {
  const auto records = read_metric_log(path);
  if (records.empty()) {
    throw std::invalid_argument("metric log is empty: " + path.string());
  }
  RunDigest digest;
  digest.lambda = records.back().lambda;
  digest.seed = records.back().seed;
  digest.final_tokens = records.back().per_token;
  digest.trajectories = trajectories_from_log(records);
  return digest;
}

std::pair<const FrequencyBin*, const FrequencyBin*> low_high_bins(
    const std::vector<FrequencyBin>& bins) {
  const FrequencyBin* low = nullptr;
  const FrequencyBin* high = nullptr;
  for (const auto& bin : bins) {
    if (bin.members.empty()) {
      continue;
    }
    if (low == nullptr) {
      low = &bin;
    }
    high = &bin;
  }
  if (low == nullptr) {
    throw std::invalid_argument("frequency table has no occupied bins");
  }
  return {low, high};
}

}  // namespace

void emit_figure(const ReportSpec& spec) {
  switch (spec.kind) {
    case FigureKind::CoverageCurve: {
      if (!spec.stats_json.has_value()) {
        throw std::invalid_argument("coverage_curve needs a frequency table input");
      }
      const auto table = load_frequency_json(*spec.stats_json);
      Series series;
      series.name = "coverage";
      for (double f = 1e-4; f < 1.0; f *= std::pow(10.0, 0.125)) {
        series.points.push_back({f, cumulative_coverage(table, spec.frequency_kind, f)});
      }
      series.points.push_back({1.0, cumulative_coverage(table, spec.frequency_kind, 1.0)});
      ChartOptions options;
      options.title = "Cumulative occurrence coverage by top token fraction";
      options.x_label = "top fraction of vocabulary";
      options.y_label = "coverage of total occurrences";
      options.log_x = true;
      emit_series_figure(spec.out_svg, options, std::span<const Series>(&series, 1));
      return;
    }
    case FigureKind::Histogram: {
      if (!spec.stats_json.has_value()) {
        throw std::invalid_argument("histogram needs a frequency table input");
      }
      const auto table = load_frequency_json(*spec.stats_json);
      const auto bins = histogram_base3(table, spec.frequency_kind);
      if (bins.empty()) {
        throw std::invalid_argument("histogram: frequency table has no occupied bins: " +
                                    spec.stats_json->string());
      }
      std::vector<HistogramBar> bars;
      for (const auto& bin : bins) {
        bars.push_back(HistogramBar{"[" + std::to_string(bin.lower) + "," +
                                        std::to_string(bin.upper) + ")",
                                    static_cast<double>(bin.members.size())});
      }
      ChartOptions options;
      options.title = "Unique tokens per frequency bin (powers of 3)";
      options.x_label = "token count bin";
      options.y_label = "unique tokens";
      emit_histogram_figure(spec.out_svg, options, bars);
      return;
    }
    case FigureKind::LossVsLambdaLowHigh: {
      if (spec.run_logs.empty() || !spec.stats_json.has_value()) {
        throw std::invalid_argument("loss_vs_lambda_low_high needs run logs and a frequency table");
      }
      const auto table = load_frequency_json(*spec.stats_json);
      const auto bins = histogram_base3(table, spec.frequency_kind);
      const auto [low, high] = low_high_bins(bins);
      // lambda -> mean over runs of bin-mean loss
      std::map<double, std::vector<double>> low_by_lambda;
      std::map<double, std::vector<double>> high_by_lambda;
      for (const auto& log : spec.run_logs) {
        RunDigest digest = digest_log(log);
        std::vector<double> loss_by_token(static_cast<std::size_t>(table.vocab_size),
                                          std::nan(""));
        for (const auto& row : digest.final_tokens) {
          loss_by_token[static_cast<std::size_t>(row.id)] = row.loss_mean;
        }
        const auto bin_mean = [&](const FrequencyBin& bin) {
          double sum = 0.0;
          std::size_t n = 0;
          for (const TokenId id : bin.members) {
            const double v = loss_by_token[static_cast<std::size_t>(id)];
            if (!std::isnan(v)) {
              sum += v;
              ++n;
            }
          }
          return n == 0 ? std::nan("") : sum / static_cast<double>(n);
        };
        const double lo_mean = bin_mean(*low);
        const double hi_mean = bin_mean(*high);
        if (!std::isnan(lo_mean)) {
          low_by_lambda[digest.lambda].push_back(lo_mean);
        }
        if (!std::isnan(hi_mean)) {
          high_by_lambda[digest.lambda].push_back(hi_mean);
        }
      }
      const auto to_series = [](const std::map<double, std::vector<double>>& by_lambda,
                                const std::string& name) {
        Series series;
        series.name = name;
        for (const auto& [lambda, values] : by_lambda) {
          double sum = 0.0;
          for (const double v : values) {
            sum += v;
          }
          series.points.push_back({lambda, sum / static_cast<double>(values.size())});
        }
        return series;
      };
      std::vector<Series> series;
      series.push_back(to_series(low_by_lambda,
                                 "low frequency [" + std::to_string(low->lower) + "," +
                                     std::to_string(low->upper) + ")"));
      series.push_back(to_series(high_by_lambda,
                                 "high frequency [" + std::to_string(high->lower) + "," +
                                     std::to_string(high->upper) + ")"));
      ChartOptions options;
      options.title = "Per-token loss vs weight decay, low vs high frequency";
      options.x_label = "weight decay";
      options.y_label = "mean per-token loss";
      emit_series_figure(spec.out_svg, options, series);
      return;
    }
    case FigureKind::PerBinBoxplot: {
      if (spec.run_logs.empty() || !spec.stats_json.has_value()) {
        throw std::invalid_argument("per_bin_boxplot needs run logs and a frequency table");
      }
      const auto table = load_frequency_json(*spec.stats_json);
      const auto bins = histogram_base3(table, spec.frequency_kind);
      // token -> mean loss across provided logs
      std::map<TokenId, std::pair<double, int>> pooled;
      for (const auto& log : spec.run_logs) {
        RunDigest digest = digest_log(log);
        for (const auto& row : digest.final_tokens) {
          auto& slot = pooled[row.id];
          slot.first += row.loss_mean;
          slot.second += 1;
        }
      }
      std::vector<LabeledBox> boxes;
      for (const auto& bin : bins) {
        std::vector<double> values;
        for (const TokenId id : bin.members) {
          const auto it = pooled.find(id);
          if (it != pooled.end()) {
            values.push_back(it->second.first / it->second.second);
          }
        }
        if (values.empty()) {
          continue;
        }
        boxes.push_back(LabeledBox{
            "[" + std::to_string(bin.lower) + "," + std::to_string(bin.upper) + ")",
            box_stats(std::move(values))});
      }
      if (boxes.empty()) {
        throw std::invalid_argument("per_bin_boxplot: no occupied bin carries data");
      }
      ChartOptions options;
      options.title = "Per-token loss distribution by frequency bin";
      options.x_label = "token count bin";
      options.y_label = "per-token loss";
      emit_boxplot_figure(spec.out_svg, options, boxes);
      return;
    }
    case FigureKind::SpeedScatter: {
      if (spec.run_logs.empty() || !spec.stats_json.has_value()) {
        throw std::invalid_argument("speed_scatter needs run logs and a frequency table");
      }
      const auto table = load_frequency_json(*spec.stats_json);
      const auto& counts = table.counts(spec.frequency_kind);
      std::map<TokenId, std::pair<double, int>> pooled;  // token -> summed speed, runs
      for (const auto& log : spec.run_logs) {
        RunDigest digest = digest_log(log);
        for (const auto& trajectory : digest.trajectories) {
          if (trajectory.checkpoints.size() < 2) {
            continue;
          }
          auto& slot = pooled[trajectory.token];
          slot.first += learning_speed(trajectory);
          slot.second += 1;
        }
      }
      Series series;
      series.name = "learning speed";
      for (const auto& [id, slot] : pooled) {
        const auto count = counts[static_cast<std::size_t>(id)];
        if (count > 0) {
          series.points.push_back(
              {static_cast<double>(count), slot.first / slot.second});
        }
      }
      if (series.points.empty()) {
        throw std::invalid_argument("speed_scatter: no token has a usable trajectory");
      }
      ChartOptions options;
      options.title = "Per-token learning speed vs frequency";
      options.x_label = "token count";
      options.y_label = "learning speed";
      options.log_x = true;
      options.scatter = true;
      emit_series_figure(spec.out_svg, options, std::span<const Series>(&series, 1));
      return;
    }
    case FigureKind::UfmLossVsLambda: {
      if (!spec.ufm_sweep_csv.has_value()) {
        throw std::invalid_argument("ufm_loss_vs_lambda needs a sweep csv input");
      }
      const auto rows = read_ufm_sweep_csv(*spec.ufm_sweep_csv);
      if (rows.empty()) {
        throw std::invalid_argument("ufm sweep csv is empty: " + spec.ufm_sweep_csv->string());
      }
      std::map<int, Series> by_token;
      std::map<int, std::int64_t> count_of;
      for (const auto& row : rows) {
        count_of[row.token] = row.n;
        by_token[row.token].points.push_back({row.lambda, row.loss_full_own});
      }
      std::vector<Series> series;
      for (auto& [token, s] : by_token) {
        s.name = "n=" + std::to_string(count_of[token]);
        std::sort(s.points.begin(), s.points.end(),
                  [](const SeriesPoint& a, const SeriesPoint& b) { return a.x < b.x; });
        series.push_back(std::move(s));
      }
      ChartOptions options;
      options.title = "Closed-form per-token loss vs weight decay";
      options.x_label = "lambda";
      options.y_label = "per-token loss";
      options.log_x = true;
      emit_series_figure(spec.out_svg, options, series);
      return;
    }
  }
  throw std::logic_error("emit_figure: unreachable");
}

void write_sweep_summary_csv(const std::filesystem::path& path,
                             std::span<const SweepAggregate> aggregates) {
  std::string csv =
      "lambda,runs,training_loss_mean,training_loss_std,per_token_loss_mean,per_token_loss_std,"
      "per_token_ppl_mean,per_token_ppl_std,per_token_accuracy_mean,per_token_accuracy_std\n";
  for (const auto& agg : aggregates) {
    csv += format_double(agg.lambda);
    csv += ',' + std::to_string(agg.runs);
    csv += ',' + format_double(agg.avg_loss_mean);
    csv += ',' + format_double(agg.avg_loss_std);
    csv += ',' + format_double(agg.tok_bal_loss_mean);
    csv += ',' + format_double(agg.tok_bal_loss_std);
    csv += ',' + format_double(agg.ppl_mean);
    csv += ',' + format_double(agg.ppl_std);
    csv += ',' + format_double(agg.acc_mean);
    csv += ',' + format_double(agg.acc_std);
    csv += '\n';
  }
  atomic_write_file(path, csv);
}

void write_bin_breakdown_csv(const std::filesystem::path& path,
                             std::span<const BinBreakdownRow> rows) {
  std::string csv =
      "lambda,seed,bin_index,lower,upper,token_fraction,tokens,mean_loss,mean_acc,mean_speed\n";
  const auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? format_double(*v) : std::string();
  };
  for (const auto& row : rows) {
    csv += format_double(row.lambda);
    csv += ',' + std::to_string(row.seed);
    csv += ',' + std::to_string(row.bin_index);
    csv += ',' + std::to_string(row.lower);
    csv += ',' + std::to_string(row.upper);
    csv += ',' + format_double(row.token_fraction);
    csv += ',' + std::to_string(row.tokens);
    csv += ',' + opt(row.mean_loss);
    csv += ',' + opt(row.mean_acc);
    csv += ',' + opt(row.mean_speed);
    csv += '\n';
  }
  atomic_write_file(path, csv);
}

void write_ufm_sweep_csv(const std::filesystem::path& path, std::span<const UfmSweepRow> rows) {
  std::string csv = "lambda,token,n,logit_gap,neglected,loss_scaled_own,loss_full_own,loss_gap_form\n";
  for (const auto& row : rows) {
    csv += format_double(row.lambda);
    csv += ',' + std::to_string(row.token);
    csv += ',' + std::to_string(row.n);
    csv += ',' + format_double(row.gap);
    csv += ',' + std::string(row.neglected ? "1" : "0");
    csv += ',' + format_double(row.loss_scaled_own);
    csv += ',' + format_double(row.loss_full_own);
    csv += ',' + format_double(row.loss_gap_form);
    csv += '\n';
  }
  atomic_write_file(path, csv);
}

std::vector<UfmSweepRow> read_ufm_sweep_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) {
    throw std::invalid_argument("ufm sweep csv is empty: " + path.string());
  }
  std::vector<UfmSweepRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    std::istringstream ss(lines[i]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) {
      fields.push_back(field);
    }
    if (fields.size() != 8) {
      throw std::invalid_argument("ufm sweep csv: malformed line " + std::to_string(i + 1) +
                                  " in " + path.string());
    }
    UfmSweepRow row;
    row.lambda = std::stod(fields[0]);
    row.token = std::stoi(fields[1]);
    row.n = std::stoll(fields[2]);
    row.gap = std::stod(fields[3]);
    row.neglected = fields[4] == "1";
    row.loss_scaled_own = std::stod(fields[5]);
    row.loss_full_own = std::stod(fields[6]);
    row.loss_gap_form = std::stod(fields[7]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace decaylens
