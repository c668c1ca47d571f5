#pragma once

#include <cstddef>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "capfuse/captioning.hpp"
#include "capfuse/dataset.hpp"

namespace capfuse {

struct CacheKey {
  std::string sample_id;
  std::string backend_id;
  std::string params_hash;

  auto operator<=>(const CacheKey&) const = default;
};

nlohmann::ordered_json to_json(const CaptionRecord& record);
/// Throws std::invalid_argument describing the first schema violation.
CaptionRecord caption_record_from_json(const nlohmann::json& j);

/// Append-only JSON-lines store of CaptionRecords keyed by (sample_id, backend_id,
/// params_hash). A single writer serializes appends; each key is generated at most once
/// per process even under concurrent callers. When a file holds the same key twice
/// (e.g. after concatenating caches) the first record wins.
class CaptionCache {
public:
  /// Loads an existing file or starts empty. Throws CacheCorrupt(line) on bad lines.
  explicit CaptionCache(std::filesystem::path file);

  CaptionCache(const CaptionCache&) = delete;
  CaptionCache& operator=(const CaptionCache&) = delete;

  const std::filesystem::path& path() const { return file_; }

  std::optional<CaptionRecord> find(const CacheKey& key) const;
  std::size_t size() const;
  /// Records in file order.
  std::vector<CaptionRecord> records() const;
  /// Backend invocations made through this handle.
  std::size_t generated_count() const;

  /// Cache hit returns the stored record untouched. A miss (or `regenerate`) invokes
  /// the backend, durably appends the record and returns it. Regenerating an existing
  /// key rewrites the file so the key stays unique.
  CaptionRecord get_or_generate(const CaptionerBackend& backend, const SampleRecord& sample,
                                bool regenerate = false);

  /// Inserts a record produced elsewhere; an existing key is left alone.
  void put(const CaptionRecord& record);

private:
  void append_locked(const CaptionRecord& record);
  void rewrite_locked();

  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::map<CacheKey, std::size_t> index_;
  std::vector<CaptionRecord> records_;
  std::map<CacheKey, std::shared_future<CaptionRecord>> in_flight_;
  std::size_t generated_ = 0;
  bool needs_newline_ = false;
};

}  // namespace capfuse
