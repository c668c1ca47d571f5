#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capfuse/dataset.hpp"
#include "json.hpp"

namespace capfuse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitValidation = 2;

struct ClassifierSpec {
  std::string backend;
  std::string model_tag;
  nlohmann::json train_config = nlohmann::json::object();
};

struct SubsampleSpec {
  std::size_t n_per_class = 0;
  std::uint64_t seed = 0;
};

/// One JSON document that fully determines a run. Paths are stored resolved.
struct RunConfig {
  std::filesystem::path base_dir;
  TaskDefinition task = TaskDefinition("unset", {"a", "b"});
  std::map<Split, std::filesystem::path> manifests;
  std::map<Split, std::size_t> expected_counts;
  nlohmann::json captioner;
  ClassifierSpec image_classifier{"pixel-histogram", "pixel-histogram"};
  ClassifierSpec text_classifier{"token-count", "token-count"};
  std::vector<double> grid;
  std::vector<std::int64_t> trial_seeds{11, 22, 33, 44, 55};
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;
  std::optional<SubsampleSpec> subsample;
  bool render_plots = false;
  std::size_t jobs = 1;
  std::size_t parallel_trials = 1;
};

inline const std::vector<std::int64_t> kDefaultTrialSeeds{11, 22, 33, 44, 55};

/// Relative paths resolve against `base_dir`. CAPFUSE_CACHE_DIR, when set, replaces
/// the cache directory. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);
/// Seeds non-empty and unique, grid valid, manifest files present.
void validate(const RunConfig& config);
/// Fully resolved form, archived with every run.
nlohmann::ordered_json to_json(const RunConfig& config);

struct IngestOptions {
  bool allow_count_mismatch = false;
  std::optional<SubsampleSpec> subsample;
};

struct CaptionOptions {
  std::vector<Split> splits{Split::Train, Split::Dev, Split::Test};
  bool regenerate = false;
};

struct SweepOptions {
  Split sweep_split = Split::Dev;
  /// Explicit matrices (single trial) instead of the run directory's per-seed files.
  std::optional<std::filesystem::path> image_matrix;
  std::optional<std::filesystem::path> text_matrix;
};

struct RunOptions {
  bool allow_count_mismatch = false;
};

enum class ReportFormats { Csv, Markdown, Both };

int cmd_ingest(const RunConfig& config, const IngestOptions& options, std::ostream& log);
int cmd_caption(const RunConfig& config, const CaptionOptions& options, std::ostream& log);
int cmd_train(const RunConfig& config, std::optional<std::int64_t> seed, std::ostream& log);
int cmd_predict(const RunConfig& config, Split split, std::optional<std::int64_t> seed,
                std::ostream& log);
int cmd_sweep(const RunConfig& config, const SweepOptions& options, std::ostream& log);
int cmd_run(const RunConfig& config, const RunOptions& options, std::ostream& log);
/// Re-renders the report from a finished run's results.json.
int cmd_report(const std::filesystem::path& output_dir, ReportFormats formats, std::ostream& log);
/// Recomputes the SHA-256 of every declared output. Mismatch exits 2.
int cmd_verify(const std::filesystem::path& output_dir, std::ostream& log);

/// Output locations inside a run directory.
std::filesystem::path model_path(const RunConfig& config, std::string_view modality,
                                 std::int64_t seed);
std::filesystem::path matrix_path(const RunConfig& config, std::string_view modality, Split split,
                                  std::int64_t seed);
std::filesystem::path caption_cache_path(const RunConfig& config);

}  // namespace capfuse
