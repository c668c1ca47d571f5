#include "capfuse/caption_cache.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "capfuse/errors.hpp"
#include "capfuse/util.hpp"

namespace capfuse {

nlohmann::ordered_json to_json(const CaptionRecord& r) {
  nlohmann::ordered_json j;
  j["sample_id"] = r.sample_id;
  j["backend_id"] = r.backend_id;
  j["params_hash"] = r.params_hash;
  j["text"] = r.text;
  j["created_at"] = r.created_at;
  j["deterministic"] = r.deterministic;
  return j;
}

CaptionRecord caption_record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw std::invalid_argument(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  CaptionRecord r;
  r.sample_id = str("sample_id");
  r.backend_id = str("backend_id");
  r.params_hash = str("params_hash");
  r.text = str("text");
  r.created_at = str("created_at");
  auto it = j.find("deterministic");
  if (it == j.end() || !it->is_boolean())
    throw std::invalid_argument("missing boolean field 'deterministic'");
  r.deterministic = it->get<bool>();
  if (r.text.empty()) throw std::invalid_argument("empty caption text");
  if (r.sample_id.empty()) throw std::invalid_argument("empty sample_id");
  return r;
}

namespace {

CacheKey key_of(const CaptionRecord& r) { return {r.sample_id, r.backend_id, r.params_hash}; }

void append_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open cache '" + path.string() + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw Error("cache append failed: " + std::string(std::strerror(err)));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

CaptionCache::CaptionCache(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(file_)) return;
  const auto bytes = read_file(file_);
  const auto lines = split(bytes, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (trim(line).empty()) continue;
    CaptionRecord rec;
    try {
      rec = caption_record_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw CacheCorrupt(i + 1, e.what());
    }
    auto key = key_of(rec);
    if (index_.contains(key)) continue;
    index_.emplace(std::move(key), records_.size());
    records_.push_back(std::move(rec));
  }
  needs_newline_ = !bytes.empty() && bytes.back() != '\n';
}

std::optional<CaptionRecord> CaptionCache::find(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

std::size_t CaptionCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<CaptionRecord> CaptionCache::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t CaptionCache::generated_count() const {
  std::lock_guard lock(mutex_);
  return generated_;
}

void CaptionCache::append_locked(const CaptionRecord& record) {
  std::string line = needs_newline_ ? "\n" : "";
  line += to_json(record).dump();
  line += '\n';
  append_bytes(file_, line);
  needs_newline_ = false;
}

void CaptionCache::rewrite_locked() {
  std::string out;
  for (const auto& r : records_) {
    out += to_json(r).dump();
    out += '\n';
  }
  write_file_atomic(file_, out);
  needs_newline_ = false;
}

void CaptionCache::put(const CaptionRecord& record) {
  std::lock_guard lock(mutex_);
  auto key = key_of(record);
  if (index_.contains(key)) return;
  append_locked(record);
  index_.emplace(std::move(key), records_.size());
  records_.push_back(record);
}

CaptionRecord CaptionCache::get_or_generate(const CaptionerBackend& backend,
                                            const SampleRecord& sample, bool regenerate) {
  CacheKey key{sample.sample_id, backend.backend_id(), backend.params_hash()};
  std::promise<CaptionRecord> promise;
  {
    std::unique_lock lock(mutex_);
    if (auto pending = in_flight_.find(key); pending != in_flight_.end()) {
      auto fut = pending->second;
      lock.unlock();
      return fut.get();
    }
    if (!regenerate) {
      if (auto it = index_.find(key); it != index_.end()) return records_[it->second];
    }
    in_flight_.emplace(key, promise.get_future().share());
    ++generated_;
  }

  CaptionRecord record;
  try {
    record = caption_image(backend, sample.image_path, sample.sample_id);
  } catch (...) {
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    promise.set_exception(std::current_exception());
    throw;
  }

  std::lock_guard lock(mutex_);
  try {
    if (auto it = index_.find(key); it != index_.end()) {
      records_[it->second] = record;
      rewrite_locked();
    } else {
      append_locked(record);
      index_.emplace(key, records_.size());
      records_.push_back(record);
    }
  } catch (...) {
    in_flight_.erase(key);
    promise.set_exception(std::current_exception());
    throw;
  }
  in_flight_.erase(key);
  promise.set_value(record);
  return record;
}

}  // namespace capfuse
