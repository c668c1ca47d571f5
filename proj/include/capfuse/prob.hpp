#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "capfuse/dataset.hpp"
#include "capfuse/errors.hpp"

namespace capfuse {

/// Class posterior for one sample.
template <typename Scalar>
using ProbVectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using ProbVector = ProbVectorT<double>;

inline constexpr double kSimplexTolerance = 1e-6;
inline constexpr double kRenormalizeThreshold = 1e-9;

/// True when every entry is finite and in [0, 1] and the sum is within `tol` of 1.
template <typename Derived>
bool on_simplex(const Eigen::MatrixBase<Derived>& p, double tol = kSimplexTolerance) {
  using std::abs;
  if (p.size() == 0) return false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const auto v = p(i);
    if (!std::isfinite(static_cast<double>(v)) || v < 0 || v > 1) return false;
  }
  return abs(static_cast<double>(p.sum()) - 1.0) <= tol;
}

/// Rejects negative or non-finite entries, rescales when the sum drifts past 1e-9.
template <typename Scalar>
ProbVectorT<Scalar> enforce_simplex(ProbVectorT<Scalar> p) {
  if (p.size() == 0) throw InvalidProbVector("empty probability vector");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(static_cast<double>(p(i))))
      throw InvalidProbVector("non-finite probability");
    if (p(i) < 0) throw InvalidProbVector("negative probability");
  }
  const Scalar total = p.sum();
  if (!(total > 0)) throw InvalidProbVector("probabilities sum to zero");
  if (std::abs(static_cast<double>(total) - 1.0) > kRenormalizeThreshold) p /= total;
  return p;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& p) {
  int best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = static_cast<int>(i);
  }
  return best;
}

/// Row-wise argmax with lowest-index ties.
template <typename Derived>
std::vector<int> argmax_rows(const Eigen::MatrixBase<Derived>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[r] = argmax(m.row(r));
  return out;
}

/// Classifier outputs for one split: one row per sample in manifest order.
struct ProbMatrix {
  TaskDefinition task;
  std::string split_name;
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd values;  // samples x classes
  std::string model_tag;
  std::int64_t trial_seed = 0;

  Eigen::Index rows() const { return values.rows(); }
  auto row(Eigen::Index i) const { return values.row(i); }
  std::unordered_map<std::string, Eigen::Index> row_index() const;
};

/// Checks shape, id uniqueness and that each row is on the simplex (1e-6).
void validate(const ProbMatrix& m);

/// CSV `sample_id,<class_0>,...` with 9 significant digits, plus a sidecar JSON
/// (same path, `.json` extension) holding task_id, split_name, model_tag, trial_seed.
void write_prob_matrix(const std::filesystem::path& csv_path, const ProbMatrix& m);
std::string format_prob_matrix_csv(const ProbMatrix& m);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
/// Rows are renormalized on load when the 9-digit rounding pushes the sum past 1e-9.
ProbMatrix read_prob_matrix(const std::filesystem::path& csv_path);

}  // namespace capfuse
