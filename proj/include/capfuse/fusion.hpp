#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capfuse/dataset.hpp"
#include "capfuse/errors.hpp"
#include "capfuse/prob.hpp"

namespace capfuse {

/// Score-level fusion (1 - w) * p_image + w * p_text, where w weights the text
/// classifier. Works on vectors and, row by row, on whole posterior matrices.
template <typename DerivedImage, typename DerivedText>
Eigen::Matrix<typename DerivedImage::Scalar, DerivedImage::RowsAtCompileTime,
              DerivedImage::ColsAtCompileTime>
fuse(const Eigen::MatrixBase<DerivedImage>& p_image, const Eigen::MatrixBase<DerivedText>& p_text,
     typename DerivedImage::Scalar w) {
  using Scalar = typename DerivedImage::Scalar;
  if (p_image.rows() != p_text.rows() || p_image.cols() != p_text.cols())
    throw LengthMismatch("cannot fuse posteriors of shape " + std::to_string(p_image.rows()) +
                         "x" + std::to_string(p_image.cols()) + " and " +
                         std::to_string(p_text.rows()) + "x" + std::to_string(p_text.cols()));
  if (!(w >= Scalar(0) && w <= Scalar(1))) throw WeightOutOfRange(static_cast<double>(w));
  return (Scalar(1) - w) * p_image + w * p_text;
}

/// Ascending, duplicate-free, within [0, 1], containing both endpoints.
void validate_grid(std::span<const double> grid);

/// {0, step, 2*step, ..., 1}; 1/step must be an integer. Points are i / n, not sums.
std::vector<double> weight_grid(int intervals = 20);

struct FusionConfig {
  double w = 0.5;
  std::vector<double> grid = weight_grid();
  Split selection_split = Split::Dev;

  /// Throws WeightOutOfRange or InvalidGrid.
  void validate() const;
};

/// Accuracy as a function of w.
struct FusionSweepResult {
  std::vector<double> grid;
  std::vector<double> accuracy_per_w;
  /// One curve per trial; a single sweep carries itself as the only trial.
  std::vector<std::vector<double>> per_trial;
  std::vector<std::int64_t> trial_seeds;
  std::string split_name;
};

/// Text rows reordered to follow the image matrix's sample order. Throws
/// SampleSetMismatch when the id sets differ and LengthMismatch when class counts do.
ProbMatrix align_to(const ProbMatrix& image, const ProbMatrix& text);

/// For each grid point, accuracy of argmax(fuse(...)) against `labels`, which follow
/// the image matrix's row order.
template <typename DerivedImage, typename DerivedText>
std::vector<double> sweep_accuracy(const Eigen::MatrixBase<DerivedImage>& image,
                                   const Eigen::MatrixBase<DerivedText>& text,
                                   std::span<const int> labels, std::span<const double> grid) {
  using Scalar = typename DerivedImage::Scalar;
  if (static_cast<Eigen::Index>(labels.size()) != image.rows())
    throw LengthMismatch("label count differs from matrix rows");
  if (labels.empty()) throw EmptyInput("cannot sweep an empty split");
  std::vector<double> acc;
  acc.reserve(grid.size());
  for (double w : grid) {
    const auto fused = fuse(image, text, static_cast<Scalar>(w));
    std::size_t hits = 0;
    for (Eigen::Index r = 0; r < fused.rows(); ++r) hits += argmax(fused.row(r)) == labels[r];
    acc.push_back(static_cast<double>(hits) / static_cast<double>(labels.size()));
  }
  return acc;
}

/// Aligns the text matrix to the image matrix by sample_id, takes labels from the
/// manifest and sweeps `grid`.
FusionSweepResult sweep(const ProbMatrix& image, const ProbMatrix& text,
                        const SplitManifest& manifest, std::span<const double> grid);
FusionSweepResult sweep(const ProbMatrix& image, const ProbMatrix& text,
                        std::span<const int> labels, std::span<const double> grid);

/// Grid point with the highest accuracy; ties go to the smaller w.
double select_weight(const FusionSweepResult& result);
/// Accuracy at grid point `w` (must be on the grid).
double accuracy_at(const FusionSweepResult& result, double w);

/// Pointwise mean of the curves' accuracies. Per-trial curves and seeds are
/// concatenated. Throws GridMismatch when grids differ.
FusionSweepResult multi_trial_average(const std::vector<FusionSweepResult>& curves);

}  // namespace capfuse
