#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capfuse/fusion.hpp"

namespace capfuse {

using ConfusionMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// Fraction of exact matches. Throws LengthMismatch or EmptyInput.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Entry (i, j) counts samples labeled i and predicted j. Throws IndexOutOfRange.
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int num_classes);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1); empty for fewer than two values.
std::optional<double> sample_std(std::span<const double> values);

struct SystemRow {
  std::string system_tag;
  double accuracy_mean = 0.0;
  std::optional<double> accuracy_std;
  std::size_t n_trials = 0;
};

/// Builds a row from per-trial accuracies.
SystemRow summarize(std::string system_tag, std::span<const double> trial_accuracies);

struct EvalReport {
  std::string task_id;
  std::vector<SystemRow> rows;
  std::optional<ConfusionMatrix> confusion;
  std::string confusion_system;
  std::vector<std::string> class_names;
};

enum class ReportFormat { Csv, Markdown };

/// Percent with two decimals, e.g. 0.8528 -> "85.28".
std::string format_percent(double fraction);

/// Pure function of the report: same input, same bytes.
std::string emit_report(const EvalReport& report, ReportFormat format);
/// Confusion counts as CSV: `label\predicted,<class...>` header, one row per label.
std::string emit_confusion(const EvalReport& report);

/// `w,accuracy_mean,accuracy_trial_1,...`, one data row per grid point.
std::string emit_fusion_curve(const FusionSweepResult& result);

struct NamedCurve {
  std::string name;
  FusionSweepResult result;
};

/// Pluggable plot backend so headless runs need no graphics stack.
class CurveRenderer {
public:
  virtual ~CurveRenderer() = default;
  virtual std::string file_extension() const = 0;
  virtual std::string render(const std::vector<NamedCurve>& curves, const std::string& title) const = 0;
};

/// Self-contained SVG line chart, one polyline per curve.
class SvgCurveRenderer final : public CurveRenderer {
public:
  std::string file_extension() const override { return ".svg"; }
  std::string render(const std::vector<NamedCurve>& curves, const std::string& title) const override;
};

/// Writes `<stem>_<name>.csv` for each curve and, with a renderer, one overlay plot
/// `<stem><ext>`. Returns the files written. Throws GridMismatch when plotted curves
/// disagree on the grid.
std::vector<std::filesystem::path> write_fusion_curves(const std::vector<NamedCurve>& curves,
                                                       const std::filesystem::path& stem,
                                                       const CurveRenderer* renderer,
                                                       const std::string& title = {});

}  // namespace capfuse
