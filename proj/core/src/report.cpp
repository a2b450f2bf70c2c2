#include "longctx/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace longctx {

namespace {

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void append_record_fields(std::ostringstream& out, const EvalRecord& r) {
  out << r.doc_id << ',' << r.anchor << ',' << r.target_index << ',' << r.token_id << ','
      << r.prefix_len << ',' << fmt(r.nll) << ',' << to_string(r.cats.frequency) << ','
      << to_string(r.cats.subword) << ',' << to_string(r.cats.copy) << ',';
  if (r.cats.copy != CopyClass::Absent) out << r.cats.copy_distance;
  out << ',';
  if (r.cats.labels) {
    out << to_string(r.cats.labels->genre) << ',' << to_string(r.cats.labels->continuity) << ','
        << to_string(r.cats.labels->authorship);
  } else {
    out << ",,";
  }
  out << ',' << r.perturb_kind << ',';
  if (r.perturbed) out << r.perturb_m;
  out << ',' << r.run_index << ',';
  if (r.perturbed) out << r.seed;
}

}  // namespace

std::string records_to_csv(std::span<const EvalRecord> records) {
  std::ostringstream out;
  out << kRecordCsvHeader << '\n';
  for (const EvalRecord& r : records) {
    append_record_fields(out, r);
    out << '\n';
  }
  return out.str();
}

std::string probe_records_to_csv(std::span<const EvalRecord> records,
                                 const std::string& probe_kind) {
  std::ostringstream out;
  out << kProbeCsvHeader << '\n';
  for (const EvalRecord& r : records) {
    append_record_fields(out, r);
    out << ',' << probe_kind << ',' << r.perturb_m << ",\n";
  }
  return out.str();
}

std::string suffix_results_to_csv(std::span<const SuffixExample> examples,
                                  std::span<const SuffixExampleResult> results, int prefix_len,
                                  int suffix_len) {
  if (examples.size() != results.size())
    throw std::invalid_argument("suffix_results_to_csv: size mismatch");
  std::ostringstream out;
  out << kProbeCsvHeader << '\n';
  for (size_t e = 0; e < examples.size(); ++e) {
    const SuffixExample& ex = examples[e];
    for (const SuffixCandidateScore& s : results[e].scores) {
      out << ex.doc_id << ',' << ex.gold_span.first << ',' << s.candidate << ",," << prefix_len
          << ',' << fmt(s.nll) << ",,,,,,,,,," << 0 << ",,suffix," << suffix_len << ','
          << s.rank << '\n';
    }
  }
  return out.str();
}

std::string curves_to_csv(std::span<const AggregateCurve> curves, const std::string& x_name) {
  std::ostringstream out;
  out << "group," << x_name << ",ppl,token_count\n";
  for (const AggregateCurve& c : curves)
    for (const CurvePoint& p : c.points)
      out << c.group << ',' << fmt(p.x) << ',' << fmt(p.ppl) << ',' << p.token_count << '\n';
  return out.str();
}

std::string overlap_to_csv(const OverlapMatrix& m) {
  std::ostringstream out;
  out << "set,size";
  for (const char* name : OverlapMatrix::kNames) out << ',' << name;
  out << '\n';
  for (int a = 0; a < 3; ++a) {
    out << OverlapMatrix::kNames[a] << ',' << m.sizes[a];
    for (int b = 0; b < 3; ++b) {
      out << ',';
      if (std::isnan(m.ratio[a][b]))
        out << "n/a";
      else
        out << fmt(m.ratio[a][b], "%.4g");
    }
    out << '\n';
  }
  return out.str();
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kMarginL = 70;
constexpr int kMarginR = 170;
constexpr int kMarginT = 46;
constexpr int kMarginB = 56;

std::string f6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string render_chart(std::span<const AggregateCurve> curves, const AxesConfig& axes) {
  if (curves.empty()) throw std::invalid_argument("render_chart: no curves");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  size_t n_points = 0;
  for (const AggregateCurve& c : curves) {
    if (c.points.empty()) throw std::invalid_argument("render_chart: empty curve " + c.group);
    for (const CurvePoint& p : c.points) {
      const double x = axes.log_x ? std::log10(p.x) : p.x;
      if (!std::isfinite(x))
        throw std::invalid_argument("render_chart: non-positive x with log_x");
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, p.ppl);
      ymax = std::max(ymax, p.ppl);
      ++n_points;
    }
  }
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax == ymin) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double ypad = (ymax - ymin) * 0.06;
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kMarginL - kMarginR;
  const double plot_h = kHeight - kMarginT - kMarginB;
  auto sx = [&](double x) {
    const double v = axes.log_x ? std::log10(x) : x;
    return kMarginL + (v - xmin) / (xmax - xmin) * plot_w;
  };
  auto sy = [&](double y) { return kMarginT + (ymax - y) / (ymax - ymin) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << axes.title << "</text>\n";

  // Axes and ticks.
  svg << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\"" << f6(plot_w)
      << "\" height=\"" << f6(plot_h) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  const int n_ticks = 5;
  for (int t = 0; t < n_ticks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / (n_ticks - 1);
    const double label = axes.log_x ? std::pow(10.0, fx) : fx;
    const double px = kMarginL + (fx - xmin) / (xmax - xmin) * plot_w;
    svg << "<line x1=\"" << f6(px) << "\" y1=\"" << kMarginT + plot_h << "\" x2=\"" << f6(px)
        << "\" y2=\"" << f6(kMarginT + plot_h + 5) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << f6(px) << "\" y=\"" << f6(kMarginT + plot_h + 20)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << f6(label)
        << "</text>\n";
    const double fy = ymin + (ymax - ymin) * t / (n_ticks - 1);
    const double py = sy(fy);
    svg << "<line x1=\"" << kMarginL - 5 << "\" y1=\"" << f6(py) << "\" x2=\"" << kMarginL
        << "\" y2=\"" << f6(py) << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << kMarginL - 8 << "\" y=\"" << f6(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << f6(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << kMarginL + plot_w / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << axes.x_label
      << "</text>\n";
  svg << "<text x=\"18\" y=\"" << f6(kMarginT + plot_h / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
      << f6(kMarginT + plot_h / 2) << ")\">" << axes.y_label << "</text>\n";

  for (size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (curves[c].points.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const CurvePoint& p : curves[c].points)
        svg << f6(sx(p.x)) << ',' << f6(sy(p.ppl)) << ' ';
      svg << "\"/>\n";
    }
    for (const CurvePoint& p : curves[c].points)
      svg << "<circle cx=\"" << f6(sx(p.x)) << "\" cy=\"" << f6(sy(p.ppl))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = kMarginT + 14.0 + 18.0 * static_cast<double>(c);
    svg << "<line x1=\"" << kWidth - kMarginR + 12 << "\" y1=\"" << f6(ly - 4) << "\" x2=\""
        << kWidth - kMarginR + 34 << "\" y2=\"" << f6(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kMarginR + 40 << "\" y=\"" << f6(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << curves[c].group << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace longctx
