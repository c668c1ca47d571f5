#include "capfuse/evaluation.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "capfuse/util.hpp"

namespace capfuse {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw LengthMismatch(std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw EmptyInput("accuracy of an empty split");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int num_classes) {
  if (predictions.size() != labels.size())
    throw LengthMismatch(std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  ConfusionMatrix m = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i], p = predictions[i];
    if (l < 0 || l >= num_classes || p < 0 || p >= num_classes)
      throw IndexOutOfRange("class index outside [0, " + std::to_string(num_classes) +
                            ") at position " + std::to_string(i));
    ++m(l, p);
  }
  return m;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw EmptyInput("mean of nothing");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::optional<double> sample_std(std::span<const double> values) {
  if (values.size() < 2) return std::nullopt;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

SystemRow summarize(std::string system_tag, std::span<const double> trial_accuracies) {
  return {std::move(system_tag), mean(trial_accuracies), sample_std(trial_accuracies),
          trial_accuracies.size()};
}

std::string format_percent(double fraction) { return format_fixed(fraction * 100.0, 2); }

namespace {

constexpr const char* kNoStd = "—";

std::string std_cell(const SystemRow& row) {
  return row.accuracy_std ? format_percent(*row.accuracy_std) : kNoStd;
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string emit_report(const EvalReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Csv) {
    out << "task,system,accuracy_mean_pct,accuracy_std_pct,n_trials\n";
    for (const auto& row : report.rows) {
      out << csv_escape(report.task_id) << ',' << csv_escape(row.system_tag) << ','
          << format_percent(row.accuracy_mean) << ',' << std_cell(row) << ',' << row.n_trials
          << '\n';
    }
  } else {
    out << "| task | system | accuracy_mean_pct | accuracy_std_pct | n_trials |\n";
    out << "|---|---|---:|---:|---:|\n";
    for (const auto& row : report.rows) {
      out << "| " << md_cell(report.task_id) << " | " << md_cell(row.system_tag) << " | "
          << format_percent(row.accuracy_mean) << " | " << std_cell(row) << " | "
          << row.n_trials << " |\n";
    }
  }
  return out.str();
}

std::string emit_confusion(const EvalReport& report) {
  if (!report.confusion) return {};
  const auto& m = *report.confusion;
  std::ostringstream out;
  out << "label\\predicted";
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    out << ',';
    out << (static_cast<std::size_t>(c) < report.class_names.size()
                ? csv_escape(report.class_names[c])
                : std::to_string(c));
  }
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << (static_cast<std::size_t>(r) < report.class_names.size()
                ? csv_escape(report.class_names[r])
                : std::to_string(r));
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
  return out.str();
}

std::string emit_fusion_curve(const FusionSweepResult& result) {
  std::ostringstream out;
  out << "w,accuracy_mean";
  for (std::size_t t = 0; t < result.per_trial.size(); ++t) out << ",accuracy_trial_" << t + 1;
  out << '\n';
  for (std::size_t i = 0; i < result.grid.size(); ++i) {
    out << format_significant(result.grid[i], 9) << ','
        << format_significant(result.accuracy_per_w.at(i), 9);
    for (const auto& trial : result.per_trial) out << ',' << format_significant(trial.at(i), 9);
    out << '\n';
  }
  return out.str();
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string SvgCurveRenderer::render(const std::vector<NamedCurve>& curves,
                                     const std::string& title) const {
  constexpr double kW = 640, kH = 420, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
  constexpr double kPlotW = kW - kLeft - kRight, kPlotH = kH - kTop - kBottom;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#ff7f0e", "#9467bd", "#8c564b"};

  double lo = 1.0, hi = 0.0;
  for (const auto& c : curves)
    for (double a : c.result.accuracy_per_w) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  if (curves.empty() || hi < lo) lo = 0.0, hi = 1.0;
  lo = std::floor(lo * 20.0) / 20.0;
  hi = std::ceil(hi * 20.0) / 20.0;
  if (hi - lo < 0.05) hi = std::min(1.0, lo + 0.05), lo = hi - 0.05;

  auto x_of = [&](double w) { return kLeft + w * kPlotW; };
  auto y_of = [&](double a) { return kTop + (hi - a) / (hi - lo) * kPlotH; };
  auto num = [](double v) { return format_fixed(v, 2); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\">" << xml_escape(title)
      << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW << "\" height=\""
      << kPlotH << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double w = i / 4.0;
    svg << "<text x=\"" << num(x_of(w)) << "\" y=\"" << kTop + kPlotH + 18
        << "\" text-anchor=\"middle\">" << format_fixed(w, 2) << "</text>\n";
    const double a = lo + (hi - lo) * i / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(y_of(a) + 4)
        << "\" text-anchor=\"end\">" << format_percent(a) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kH - 10
      << "\" text-anchor=\"middle\">fusion weight w (text)</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + kPlotH / 2 << "\" transform=\"rotate(-90 16 "
      << kTop + kPlotH / 2 << ")\" text-anchor=\"middle\">accuracy (%)</text>\n";

  for (std::size_t s = 0; s < curves.size(); ++s) {
    const auto& r = curves[s].result;
    const char* color = kColors[s % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
      if (i) svg << ' ';
      svg << num(x_of(r.grid[i])) << ',' << num(y_of(r.accuracy_per_w[i]));
    }
    svg << "\"/>\n";
    const double ly = kTop + 16 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kLeft + kPlotW + 10 << "\" y1=\"" << ly << "\" x2=\""
        << kLeft + kPlotW + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + kPlotW + 36 << "\" y=\"" << ly + 4 << "\">"
        << xml_escape(curves[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> write_fusion_curves(const std::vector<NamedCurve>& curves,
                                                       const std::filesystem::path& stem,
                                                       const CurveRenderer* renderer,
                                                       const std::string& title) {
  std::vector<std::filesystem::path> written;
  for (const auto& c : curves) {
    auto path = stem;
    path += "_" + c.name + ".csv";
    write_file_atomic(path, emit_fusion_curve(c.result));
    written.push_back(path);
  }
  if (renderer && !curves.empty()) {
    for (const auto& c : curves) {
      if (c.result.grid != curves.front().result.grid)
        throw GridMismatch("overlaid curves must share one grid");
    }
    auto path = stem;
    path += renderer->file_extension();
    write_file_atomic(path, renderer->render(curves, title));
    written.push_back(path);
  }
  return written;
}

}  // namespace capfuse
