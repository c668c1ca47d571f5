#include "capfuse/fusion.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace capfuse {

void validate_grid(std::span<const double> grid) {
  if (grid.empty()) throw InvalidGrid("fusion grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
      throw InvalidGrid("grid point " + std::to_string(grid[i]) + " outside [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw InvalidGrid("grid must be strictly ascending");
  }
  if (grid.front() != 0.0 || grid.back() != 1.0)
    throw InvalidGrid("grid must contain 0 and 1");
}

std::vector<double> weight_grid(int intervals) {
  if (intervals < 1) throw InvalidGrid("grid needs at least one interval");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) grid.push_back(static_cast<double>(i) / intervals);
  return grid;
}

void FusionConfig::validate() const {
  if (!(w >= 0.0 && w <= 1.0)) throw WeightOutOfRange(w);
  validate_grid(grid);
}

ProbMatrix align_to(const ProbMatrix& image, const ProbMatrix& text) {
  if (image.values.cols() != text.values.cols())
    throw LengthMismatch("image matrix has " + std::to_string(image.values.cols()) +
                         " classes, text matrix has " + std::to_string(text.values.cols()));
  const auto text_index = text.row_index();
  const auto image_index = image.row_index();
  std::vector<std::string> only_image, only_text;
  for (const auto& id : image.sample_ids)
    if (!text_index.contains(id)) only_image.push_back(id);
  for (const auto& id : text.sample_ids)
    if (!image_index.contains(id)) only_text.push_back(id);
  if (!only_image.empty() || !only_text.empty())
    throw SampleSetMismatch(std::move(only_image), std::move(only_text));

  ProbMatrix out = text;
  out.sample_ids = image.sample_ids;
  for (std::size_t r = 0; r < image.sample_ids.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) =
        text.values.row(text_index.at(image.sample_ids[r]));
  }
  return out;
}

FusionSweepResult sweep(const ProbMatrix& image, const ProbMatrix& text,
                        std::span<const int> labels, std::span<const double> grid) {
  validate_grid(grid);
  const auto aligned = align_to(image, text);
  FusionSweepResult result;
  result.grid.assign(grid.begin(), grid.end());
  result.accuracy_per_w = sweep_accuracy(image.values, aligned.values, labels, grid);
  result.per_trial = {result.accuracy_per_w};
  result.trial_seeds = {image.trial_seed};
  result.split_name = image.split_name;
  return result;
}

FusionSweepResult sweep(const ProbMatrix& image, const ProbMatrix& text,
                        const SplitManifest& manifest, std::span<const double> grid) {
  std::unordered_map<std::string_view, int> label_of;
  for (const auto& s : manifest.samples()) label_of.emplace(s.sample_id, s.label_index);
  std::vector<int> labels;
  labels.reserve(image.sample_ids.size());
  std::vector<std::string> unlabeled;
  for (const auto& id : image.sample_ids) {
    auto it = label_of.find(id);
    if (it == label_of.end()) {
      unlabeled.push_back(id);
      continue;
    }
    labels.push_back(it->second);
  }
  if (!unlabeled.empty()) throw SampleSetMismatch(std::move(unlabeled), {});
  return sweep(image, text, std::span<const int>(labels), grid);
}

double select_weight(const FusionSweepResult& result) {
  if (result.accuracy_per_w.empty() || result.grid.size() != result.accuracy_per_w.size())
    throw EmptyInput("cannot select a weight from an empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.accuracy_per_w.size(); ++i) {
    if (result.accuracy_per_w[i] > result.accuracy_per_w[best]) best = i;
  }
  return result.grid[best];
}

double accuracy_at(const FusionSweepResult& result, double w) {
  auto it = std::find(result.grid.begin(), result.grid.end(), w);
  if (it == result.grid.end()) throw InvalidGrid("w = " + std::to_string(w) + " is not on the grid");
  return result.accuracy_per_w.at(static_cast<std::size_t>(it - result.grid.begin()));
}

FusionSweepResult multi_trial_average(const std::vector<FusionSweepResult>& curves) {
  if (curves.empty()) throw EmptyInput("no curves to average");
  FusionSweepResult out;
  out.grid = curves.front().grid;
  out.split_name = curves.front().split_name;
  const auto n = out.grid.size();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (const auto& c : curves) {
    if (c.grid != out.grid) throw GridMismatch("curves were swept over different grids");
    if (c.accuracy_per_w.size() != n) throw GridMismatch("curve length differs from its grid");
    total += Eigen::Map<const Eigen::VectorXd>(c.accuracy_per_w.data(),
                                               static_cast<Eigen::Index>(n));
    if (c.per_trial.empty()) {
      out.per_trial.push_back(c.accuracy_per_w);
    } else {
      out.per_trial.insert(out.per_trial.end(), c.per_trial.begin(), c.per_trial.end());
    }
    out.trial_seeds.insert(out.trial_seeds.end(), c.trial_seeds.begin(), c.trial_seeds.end());
  }
  if (curves.size() == 1) {
    out.accuracy_per_w = curves.front().accuracy_per_w;
  } else {
    total /= static_cast<double>(curves.size());
    out.accuracy_per_w.assign(total.data(), total.data() + total.size());
  }
  return out;
}

}  // namespace capfuse
