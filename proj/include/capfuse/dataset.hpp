#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capfuse {

enum class Split { Train, Dev, Test };

std::string_view to_string(Split split);
/// Throws ConfigError on anything other than "train", "dev" or "test".
Split parse_split(std::string_view name);

/// A classification task: an id and an ordered class inventory (C >= 2, names unique).
class TaskDefinition {
public:
  TaskDefinition(std::string task_id, std::vector<std::string> class_names);

  const std::string& task_id() const { return task_id_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  const std::string& class_name(int index) const { return class_names_.at(index); }

  /// Exact, case-sensitive lookup.
  std::optional<int> index_of(std::string_view name) const;

  friend bool operator==(const TaskDefinition&, const TaskDefinition&) = default;

private:
  std::string task_id_;
  std::vector<std::string> class_names_;
};

/// Built-in CrisisNLP task inventories.
TaskDefinition disaster_types_task();
TaskDefinition damage_severity_task();
/// Looks up "disaster_types" or "damage_severity".
std::optional<TaskDefinition> builtin_task(std::string_view task_id);

/// Published Train/Dev/Test sizes for the two CrisisNLP tasks.
std::map<Split, std::size_t> crisisnlp_split_counts(std::string_view task_id);

struct SampleRecord {
  std::string sample_id;
  std::filesystem::path image_path;
  int label_index = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

class SplitManifest {
public:
  /// Validates label ranges and sample_id uniqueness.
  SplitManifest(TaskDefinition task, Split split, std::vector<SampleRecord> samples);

  const TaskDefinition& task() const { return task_; }
  Split split() const { return split_; }
  const std::vector<SampleRecord>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }

  std::vector<int> labels() const;
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;

private:
  TaskDefinition task_;
  Split split_;
  std::vector<SampleRecord> samples_;
};

/// Reads a headerless UTF-8 TSV of `sample_id<TAB>image_path<TAB>class`. The class
/// column holds an exact class name or, failing that, a decimal class index.
/// Relative image paths are kept as written.
SplitManifest load_manifest(const std::filesystem::path& path, const TaskDefinition& task,
                            Split split);
SplitManifest parse_manifest(std::string_view text, const TaskDefinition& task, Split split);

/// Canonical form: class names (never indices), one row per sample, trailing newline.
void write_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
std::string format_manifest(const SplitManifest& manifest);

struct SplitCountEntry {
  Split split;
  std::size_t actual = 0;
  std::size_t expected = 0;
  long long delta = 0;  // actual - expected
  bool passed = false;
};

struct ValidationReport {
  std::string task_id;
  std::vector<SplitCountEntry> entries;
  bool passed = true;
};

/// Compares manifest sizes against expected counts. Mismatches are reported, not thrown.
/// Throws MixedTasks when manifests disagree on task_id.
ValidationReport validate_split_counts(const std::vector<SplitManifest>& manifests,
                                       const std::map<Split, std::size_t>& expected);

std::map<Split, std::size_t> counts_of(const std::vector<SplitManifest>& manifests);

/// At most n_per_class samples of each class. Each sample gets a draw key from a
/// seeded hash of its sample_id; the output keeps the lowest keys per class, in key
/// order. Re-applying with the same arguments returns the same manifest.
SplitManifest stratified_subsample(const SplitManifest& manifest, std::size_t n_per_class,
                                   std::uint64_t seed);

/// Copy with every relative image path prefixed by `root`.
SplitManifest with_image_root(const SplitManifest& manifest, const std::filesystem::path& root);

}  // namespace capfuse
