#include "nwlab/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "nwlab/configfile.hpp"

namespace nwlab {

namespace fs = std::filesystem;

std::string escape_xml(const std::string& text) {
  std::string out;
  out.reserve(text.size());
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

SvgCanvas::SvgCanvas(int width, int height) : width_(width), height_(height) {
  body_ += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width_) +
           "\" height=\"" + std::to_string(height_) +
           "\" fill=\"#ffffff\"/>\n";
}

void SvgCanvas::line(double x1, double y1, double x2, double y2,
                     const std::string& stroke, double stroke_width,
                     const std::string& dash) {
  body_ += "<line x1=\"" + format_double(x1) + "\" y1=\"" + format_double(y1) +
           "\" x2=\"" + format_double(x2) + "\" y2=\"" + format_double(y2) +
           "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           format_double(stroke_width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += "/>\n";
}

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& points,
                         const std::string& stroke, double stroke_width,
                         const std::string& dash) {
  if (points.size() < 2) return;
  body_ += "<polyline points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0) body_ += " ";
    body_ += format_double(points[i].first) + "," +
             format_double(points[i].second);
  }
  body_ += "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
           format_double(stroke_width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += "/>\n";
}

void SvgCanvas::circle(double cx, double cy, double r,
                       const std::string& fill) {
  body_ += "<circle cx=\"" + format_double(cx) + "\" cy=\"" +
           format_double(cy) + "\" r=\"" + format_double(r) + "\" fill=\"" +
           fill + "\"/>\n";
}

void SvgCanvas::cross(double cx, double cy, double half,
                      const std::string& stroke) {
  line(cx - half, cy - half, cx + half, cy + half, stroke, 1.6);
  line(cx - half, cy + half, cx + half, cy - half, stroke, 1.6);
}

void SvgCanvas::text(double x, double y, const std::string& content,
                     double size, const std::string& anchor,
                     const std::string& fill) {
  body_ += "<text x=\"" + format_double(x) + "\" y=\"" + format_double(y) +
           "\" font-size=\"" + format_double(size) +
           "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
           "\" fill=\"" + fill + "\">" + escape_xml(content) + "</text>\n";
}

std::string SvgCanvas::finish() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width_) + "\" height=\"" + std::to_string(height_) +
         "\" viewBox=\"0 0 " + std::to_string(width_) + " " +
         std::to_string(height_) + "\">\n" + body_ + "</svg>\n";
}

std::vector<double> linear_ticks(double lo, double hi, int target) {
  if (!(hi > lo) || target < 1) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step =
      (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0) * mag;
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9;
       v += step)
    ticks.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
  return ticks;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
constexpr int kPaletteSize = 8;

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr double kLeft = 70, kRight = 24, kTop = 44, kBottom = 52;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path,
                                               const std::string& header) {
  const std::string text = read_text_file(path);
  std::vector<std::vector<std::string>> rows;
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
      if (line != header)
        throw Error(ErrorCode::verification,
                    path.string() + ": unexpected header " + line);
      continue;
    }
    rows.push_back(split_fields(line));
  }
  return rows;
}

struct SummaryCell {
  std::uint64_t n = 0;
  double tau = 0;
  std::string source;
  bool censored = false;
  double mean = 0, sd = 0;
};

struct SeriesTable {
  std::vector<double> t, train, val, suffix, gap;
  bool has_suffix = false;
};

struct IndexRow {
  std::string run_id;
  std::string group;
  int suffix_bits = 0;
};

std::vector<SummaryCell> load_summary(const fs::path& path) {
  std::vector<SummaryCell> cells;
  for (const auto& f :
       read_csv(path, "N,tau,source,mean_crossing,sd,n_censored,n_seeds")) {
    if (f.size() != 7)
      throw Error(ErrorCode::verification,
                  path.string() + ": malformed summary row");
    SummaryCell cell;
    cell.n = std::stoull(f[0]);
    cell.tau = std::stod(f[1]);
    cell.source = f[2];
    cell.censored = f[3] == "censored";
    if (!cell.censored) cell.mean = std::stod(f[3]);
    cell.sd = std::stod(f[4]);
    cells.push_back(std::move(cell));
  }
  return cells;
}

SeriesTable load_series(const fs::path& path) {
  SeriesTable table;
  for (const auto& f :
       read_csv(path, "t,epochs,train_em,val_em,train_suffix_em,gap")) {
    if (f.size() != 6)
      throw Error(ErrorCode::verification,
                  path.string() + ": malformed series row");
    table.t.push_back(std::stod(f[0]));
    table.train.push_back(std::stod(f[2]));
    table.val.push_back(std::stod(f[3]));
    if (!f[4].empty()) {
      table.has_suffix = true;
      table.suffix.push_back(std::stod(f[4]));
      table.gap.push_back(std::stod(f[5]));
    }
  }
  return table;
}

std::vector<IndexRow> load_index(const fs::path& path) {
  std::vector<IndexRow> rows;
  for (const auto& f : read_csv(
           path,
           "run_id,family,length,train_size,depth,seed,suffix_bits,"
           "max_updates,effective_batch,final_val_exact_match,"
           "decomposition_residual")) {
    if (f.size() != 11)
      throw Error(ErrorCode::verification,
                  path.string() + ": malformed index row");
    IndexRow row;
    row.run_id = f[0];
    row.group = f[1] + f[2] + "_D" + f[4];
    row.suffix_bits = std::stoi(f[6]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void draw_frame(SvgCanvas& canvas, const std::string& title) {
  canvas.line(kLeft, kTop, kLeft, kHeight - kBottom, "#444444", 1);
  canvas.line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom,
              "#444444", 1);
  canvas.text(kWidth / 2.0, kTop - 18, title, 14, "middle", "#111111");
}

void draw_y_ticks(SvgCanvas& canvas, const AxisMap& y_map,
                  const std::vector<double>& ticks) {
  for (double v : ticks) {
    const double py = y_map(v);
    canvas.line(kLeft - 4, py, kLeft, py, "#444444", 1);
    canvas.line(kLeft, py, kWidth - kRight, py, "#dddddd", 0.5);
    canvas.text(kLeft - 8, py + 4, format_double(v), 11, "end");
  }
}

// Crossing time vs N, log x. Censored cells sit on the top edge as
// crosses; they never contribute a fabricated finite time.
void plot_crossing_figure(const std::vector<SummaryCell>& cells,
                          const std::string& group, const fs::path& out) {
  std::set<double> tau_set;
  std::set<std::uint64_t> n_set;
  double max_time = 0;
  for (const auto& cell : cells) {
    tau_set.insert(cell.tau);
    n_set.insert(cell.n);
    if (!cell.censored) max_time = std::max(max_time, cell.mean + cell.sd);
  }
  if (max_time <= 0) max_time = 1;

  double lx0 = std::log10(double(*n_set.begin()));
  double lx1 = std::log10(double(*n_set.rbegin()));
  if (lx1 - lx0 < 1e-9) {
    lx0 -= 0.5;
    lx1 += 0.5;
  }
  const AxisMap x_map{lx0, lx1, kLeft, double(kWidth - kRight)};
  const AxisMap y_map{0, max_time * 1.08, double(kHeight - kBottom),
                      double(kTop)};

  SvgCanvas canvas(kWidth, kHeight);
  draw_frame(canvas, "crossing time vs N  (" + group + ")");
  draw_y_ticks(canvas, y_map, linear_ticks(0, max_time * 1.08));

  for (int d = int(std::floor(lx0)); d <= int(std::ceil(lx1)); ++d) {
    if (d < lx0 - 1e-9 || d > lx1 + 1e-9) continue;
    const double px = x_map(double(d));
    canvas.line(px, kHeight - kBottom, px, kHeight - kBottom + 4, "#444444",
                1);
    canvas.text(px, kHeight - kBottom + 18,
                "1e" + std::to_string(d), 11, "middle");
  }
  for (std::uint64_t n : n_set) {
    const double px = x_map(std::log10(double(n)));
    canvas.line(px, kHeight - kBottom, px, kHeight - kBottom + 3, "#999999",
                1);
  }
  canvas.text(kWidth - kRight, kHeight - 12, "train set size N", 12, "end");
  canvas.text(kLeft, kTop - 4, "updates to cross", 11, "start");

  int tau_index = 0;
  for (double tau : tau_set) {
    const std::string color = kPalette[tau_index % kPaletteSize];
    for (const char* source : {"val", "train"}) {
      const bool is_val = std::string(source) == "val";
      const std::string dash = is_val ? "" : "7 4";
      std::vector<std::pair<double, double>> points;
      for (std::uint64_t n : n_set) {
        for (const auto& cell : cells) {
          if (cell.n != n || cell.tau != tau || cell.source != source)
            continue;
          const double px = x_map(std::log10(double(n)));
          if (cell.censored) {
            canvas.cross(px, kTop + 8, 5, color);
          } else {
            const double py = y_map(cell.mean);
            points.emplace_back(px, py);
            canvas.circle(px, py, is_val ? 3.0 : 2.4, color);
            if (cell.sd > 0)
              canvas.line(px, y_map(cell.mean - cell.sd), px,
                          y_map(cell.mean + cell.sd), color, 1);
          }
        }
      }
      canvas.polyline(points, color, is_val ? 1.8 : 1.2, dash);
    }
    const double ly = kTop + 16 + 16.0 * tau_index;
    canvas.line(kWidth - kRight - 150, ly, kWidth - kRight - 126, ly, color,
                1.8);
    canvas.text(kWidth - kRight - 120, ly + 4, "tau=" + format_double(tau),
                11);
    ++tau_index;
  }
  const double ly = kTop + 16 + 16.0 * tau_index;
  canvas.text(kWidth - kRight - 150, ly + 4,
              "solid val, dashed train, x censored", 10, "start", "#666666");

  write_text_file(out, canvas.finish());
}

void plot_accuracy_figure(const SeriesTable& table, const std::string& run_id,
                          const fs::path& out) {
  const double t_max = table.t.empty() ? 1.0 : table.t.back();
  const AxisMap x_map{0, std::max(t_max, 1.0), kLeft,
                      double(kWidth - kRight)};
  const AxisMap y_map{0, 1.0, double(kHeight - kBottom), double(kTop)};

  SvgCanvas canvas(kWidth, kHeight);
  draw_frame(canvas, "exact match vs updates  (" + run_id + ")");
  draw_y_ticks(canvas, y_map, {0, 0.25, 0.5, 0.75, 1.0});
  for (double v : linear_ticks(0, t_max)) {
    const double px = x_map(v);
    canvas.line(px, kHeight - kBottom, px, kHeight - kBottom + 4, "#444444",
                1);
    canvas.text(px, kHeight - kBottom + 18, format_double(v), 11, "middle");
  }
  canvas.text(kWidth - kRight, kHeight - 12, "updates", 12, "end");

  struct Curve {
    const std::vector<double>* values;
    const char* label;
    const char* color;
  };
  std::vector<Curve> curves = {{&table.train, "train", kPalette[0]},
                               {&table.val, "val", kPalette[1]}};
  if (table.has_suffix)
    curves.push_back({&table.suffix, "random suffix", kPalette[2]});

  double ly = kTop + 16;
  for (const auto& curve : curves) {
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < curve.values->size(); ++i)
      points.emplace_back(x_map(table.t[i]), y_map((*curve.values)[i]));
    canvas.polyline(points, curve.color, 1.8);
    canvas.line(kLeft + 12, ly, kLeft + 36, ly, curve.color, 1.8);
    canvas.text(kLeft + 42, ly + 4, curve.label, 11);
    ly += 16;
  }

  write_text_file(out, canvas.finish());
}

void plot_gap_figure(
    const std::vector<std::pair<std::string, const SeriesTable*>>& runs,
    const std::string& group, const fs::path& out) {
  double gap_lo = 0, gap_hi = 0;
  for (const auto& [run_id, table] : runs) {
    for (double g : table->gap) {
      gap_lo = std::min(gap_lo, g);
      gap_hi = std::max(gap_hi, g);
    }
  }
  if (gap_hi - gap_lo < 0.1) gap_hi = gap_lo + 0.1;

  const AxisMap x_map{0, 1.0, kLeft, double(kWidth - kRight)};
  const AxisMap y_map{gap_lo, gap_hi * 1.05, double(kHeight - kBottom),
                      double(kTop)};

  SvgCanvas canvas(kWidth, kHeight);
  draw_frame(canvas, "train-random gap vs validation accuracy  (" + group +
                         ")");
  draw_y_ticks(canvas, y_map, linear_ticks(gap_lo, gap_hi * 1.05));
  for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double px = x_map(v);
    canvas.line(px, kHeight - kBottom, px, kHeight - kBottom + 4, "#444444",
                1);
    canvas.text(px, kHeight - kBottom + 18, format_double(v), 11, "middle");
  }
  canvas.text(kWidth - kRight, kHeight - 12, "validation exact match", 12,
              "end");
  canvas.text(kLeft, kTop - 4, "A_T - A_R", 11, "start");

  int run_index = 0;
  for (const auto& [run_id, table] : runs) {
    const std::string color = kPalette[run_index % kPaletteSize];
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < table->gap.size(); ++i)
      points.emplace_back(x_map(table->val[i]), y_map(table->gap[i]));
    canvas.polyline(points, color, 1.4);
    for (const auto& [px, py] : points) canvas.circle(px, py, 2, color);
    const double ly = kTop + 16 + 14.0 * run_index;
    canvas.line(kLeft + 12, ly, kLeft + 30, ly, color, 1.4);
    canvas.text(kLeft + 36, ly + 4, run_id, 10);
    ++run_index;
  }

  write_text_file(out, canvas.finish());
}

}  // namespace

int plot_analysis_dir(const std::string& analysis_dir,
                      const std::string& out_dir) {
  const fs::path in(analysis_dir);
  std::vector<fs::path> summaries;
  if (fs::is_directory(in)) {
    for (const auto& entry : fs::directory_iterator(in)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("summary_", 0) == 0 &&
          entry.path().extension() == ".csv")
        summaries.push_back(entry.path());
    }
  }
  std::sort(summaries.begin(), summaries.end());
  if (summaries.empty())
    throw Error(ErrorCode::config,
                "no analysis summaries under " + analysis_dir);

  fs::create_directories(out_dir);
  int written = 0;

  for (const auto& path : summaries) {
    const std::string stem = path.stem().string();
    const std::string group = stem.substr(std::string("summary_").size());
    plot_crossing_figure(load_summary(path), group,
                         fs::path(out_dir) / ("crossing_" + group + ".svg"));
    ++written;
  }

  const auto index = load_index(in / "runs_index.csv");
  std::map<std::string, SeriesTable> tables;
  std::map<std::string, std::vector<std::pair<std::string, const SeriesTable*>>>
      gap_groups;
  for (const auto& row : index) {
    auto [it, inserted] = tables.emplace(
        row.run_id, SeriesTable{});
    if (inserted)
      it->second = load_series(in / ("series_" + row.run_id + ".csv"));
    plot_accuracy_figure(it->second, row.run_id,
                         fs::path(out_dir) /
                             ("accuracy_" + row.run_id + ".svg"));
    ++written;
    if (it->second.has_suffix)
      gap_groups[row.group].emplace_back(row.run_id, &it->second);
  }
  for (const auto& [group, runs] : gap_groups) {
    plot_gap_figure(runs, group,
                    fs::path(out_dir) / ("gap_" + group + ".svg"));
    ++written;
  }
  return written;
}

}  // namespace nwlab
