#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "capfuse") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  std::filesystem::path path_;
};

// Uniform draw from the simplex (normalized exponentials).
inline Eigen::VectorXd random_simplex(int C, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd p(C);
  for (int i = 0; i < C; ++i) p(i) = e(rng);
  return p / p.sum();
}

inline Eigen::MatrixXd random_posteriors(int n, int C, std::mt19937_64& rng) {
  Eigen::MatrixXd m(n, C);
  for (int r = 0; r < n; ++r) m.row(r) = random_simplex(C, rng).transpose();
  return m;
}

}  // namespace testing_support
