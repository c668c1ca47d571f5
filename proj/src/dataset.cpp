#include "capfuse/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>
#include <unordered_set>

#include "capfuse/errors.hpp"
#include "capfuse/util.hpp"

namespace capfuse {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

TaskDefinition::TaskDefinition(std::string task_id, std::vector<std::string> class_names)
    : task_id_(std::move(task_id)), class_names_(std::move(class_names)) {
  if (task_id_.empty()) throw InvalidTask("task_id must be non-empty");
  if (class_names_.size() < 2) throw InvalidTask("a task needs at least two classes");
  std::set<std::string_view> seen;
  for (const auto& name : class_names_) {
    if (name.empty()) throw InvalidTask("class names must be non-empty");
    if (!seen.insert(name).second) throw InvalidTask("duplicate class name '" + name + "'");
  }
}

std::optional<int> TaskDefinition::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < class_names_.size(); ++i) {
    if (class_names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

TaskDefinition disaster_types_task() {
  return {"disaster_types",
          {"earthquake", "fire", "flood", "hurricane", "landslide", "other disaster",
           "not disaster"}};
}

TaskDefinition damage_severity_task() {
  return {"damage_severity", {"severe damage", "mild damage", "little or none"}};
}

std::optional<TaskDefinition> builtin_task(std::string_view task_id) {
  if (task_id == "disaster_types") return disaster_types_task();
  if (task_id == "damage_severity") return damage_severity_task();
  return std::nullopt;
}

std::map<Split, std::size_t> crisisnlp_split_counts(std::string_view task_id) {
  if (task_id == "disaster_types")
    return {{Split::Train, 12724}, {Split::Dev, 1574}, {Split::Test, 3213}};
  if (task_id == "damage_severity")
    return {{Split::Train, 26898}, {Split::Dev, 2898}, {Split::Test, 5100}};
  return {};
}

SplitManifest::SplitManifest(TaskDefinition task, Split split, std::vector<SampleRecord> samples)
    : task_(std::move(task)), split_(split), samples_(std::move(samples)) {
  std::unordered_set<std::string_view> ids;
  ids.reserve(samples_.size());
  for (const auto& s : samples_) {
    if (s.label_index < 0 || s.label_index >= task_.num_classes()) {
      throw IndexOutOfRange("label index " + std::to_string(s.label_index) + " of sample '" +
                            s.sample_id + "' outside [0, " +
                            std::to_string(task_.num_classes()) + ")");
    }
    if (!ids.insert(s.sample_id).second) throw DuplicateSampleId(s.sample_id);
  }
}

std::vector<int> SplitManifest::labels() const {
  std::vector<int> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label_index);
  return out;
}

std::vector<std::size_t> SplitManifest::class_counts() const {
  std::vector<std::size_t> counts(task_.num_classes(), 0);
  for (const auto& s : samples_) ++counts[s.label_index];
  return counts;
}

SplitManifest parse_manifest(std::string_view text, const TaskDefinition& task, Split split) {
  std::vector<SampleRecord> samples;
  std::unordered_set<std::string> ids;
  auto lines = capfuse::split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    const std::size_t line_no = i + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cols = capfuse::split(line, '\t');
    if (cols.size() != 3) {
      throw MalformedRow(line_no, "expected 3 tab-separated columns, got " +
                                      std::to_string(cols.size()));
    }
    if (cols[0].empty()) throw MalformedRow(line_no, "empty sample_id");
    if (cols[1].empty()) throw MalformedRow(line_no, "empty image_path");
    if (cols[2].empty()) throw MalformedRow(line_no, "empty class");

    int label = 0;
    if (auto idx = task.index_of(cols[2])) {
      label = *idx;
    } else {
      auto [ptr, ec] = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), label);
      bool numeric = ec == std::errc{} && ptr == cols[2].data() + cols[2].size();
      if (!numeric) throw UnknownClassName(std::string(cols[2]));
      if (label < 0 || label >= task.num_classes()) {
        throw MalformedRow(line_no, "class index " + std::string(cols[2]) + " out of range");
      }
    }
    std::string id(cols[0]);
    if (!ids.insert(id).second) throw DuplicateSampleId(id);
    samples.push_back({std::move(id), std::filesystem::path(std::string(cols[1])), label});
  }
  return SplitManifest(task, split, std::move(samples));
}

SplitManifest load_manifest(const std::filesystem::path& path, const TaskDefinition& task,
                            Split split) {
  return parse_manifest(read_file(path), task, split);
}

std::string format_manifest(const SplitManifest& manifest) {
  std::ostringstream out;
  for (const auto& s : manifest.samples()) {
    out << s.sample_id << '\t' << s.image_path.string() << '\t'
        << manifest.task().class_name(s.label_index) << '\n';
  }
  return out.str();
}

void write_manifest(const std::filesystem::path& path, const SplitManifest& manifest) {
  write_file_atomic(path, format_manifest(manifest));
}

std::map<Split, std::size_t> counts_of(const std::vector<SplitManifest>& manifests) {
  std::map<Split, std::size_t> counts;
  for (const auto& m : manifests) counts[m.split()] += m.size();
  return counts;
}

ValidationReport validate_split_counts(const std::vector<SplitManifest>& manifests,
                                       const std::map<Split, std::size_t>& expected) {
  ValidationReport report;
  for (const auto& m : manifests) {
    if (report.task_id.empty()) {
      report.task_id = m.task().task_id();
    } else if (m.task().task_id() != report.task_id) {
      throw MixedTasks("manifests belong to different tasks: '" + report.task_id + "' and '" +
                       m.task().task_id() + "'");
    }
  }
  const auto actual = counts_of(manifests);
  for (const auto& [split, want] : expected) {
    SplitCountEntry e{split};
    auto it = actual.find(split);
    e.actual = it == actual.end() ? 0 : it->second;
    e.expected = want;
    e.delta = static_cast<long long>(e.actual) - static_cast<long long>(e.expected);
    e.passed = e.delta == 0;
    report.passed = report.passed && e.passed;
    report.entries.push_back(e);
  }
  return report;
}

SplitManifest stratified_subsample(const SplitManifest& manifest, std::size_t n_per_class,
                                   std::uint64_t seed) {
  if (n_per_class == 0) throw Error("n_per_class must be at least 1");
  struct Draw {
    std::uint64_t key;
    std::size_t pos;
  };
  const auto& samples = manifest.samples();
  std::vector<std::vector<Draw>> per_class(manifest.task().num_classes());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto key = splitmix64(splitmix64(seed) ^ fnv1a64(samples[i].sample_id));
    per_class[samples[i].label_index].push_back({key, i});
  }
  auto by_key = [](const Draw& a, const Draw& b) {
    return a.key != b.key ? a.key < b.key : a.pos < b.pos;
  };
  std::vector<Draw> chosen;
  for (auto& draws : per_class) {
    std::sort(draws.begin(), draws.end(), by_key);
    if (draws.size() > n_per_class) draws.resize(n_per_class);
    chosen.insert(chosen.end(), draws.begin(), draws.end());
  }
  std::sort(chosen.begin(), chosen.end(), by_key);
  std::vector<SampleRecord> out;
  out.reserve(chosen.size());
  for (const auto& d : chosen) out.push_back(samples[d.pos]);
  return SplitManifest(manifest.task(), manifest.split(), std::move(out));
}

SplitManifest with_image_root(const SplitManifest& manifest, const std::filesystem::path& root) {
  auto samples = manifest.samples();
  for (auto& s : samples) {
    if (s.image_path.is_relative()) s.image_path = root / s.image_path;
  }
  return SplitManifest(manifest.task(), manifest.split(), std::move(samples));
}

}  // namespace capfuse
