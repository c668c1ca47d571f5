#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace capfuse {

/// Opaque handle to an image as seen by scorers and captioners.
struct ImageRef {
  std::filesystem::path path;
};

/// Image-to-text backend. Implementations must tolerate concurrent `describe` calls.
class CaptionerBackend {
public:
  virtual ~CaptionerBackend() = default;

  virtual const std::string& backend_id() const = 0;
  /// Everything that can change the output, decoding parameters included.
  virtual const nlohmann::json& params() const = 0;
  virtual bool deterministic() const = 0;
  virtual std::string describe(const ImageRef& image) const = 0;

  /// SHA-256 over the canonical dump of {backend_id, params}.
  std::string params_hash() const;
};

struct CaptionRecord {
  std::string sample_id;
  std::string backend_id;
  std::string params_hash;
  std::string text;
  std::string created_at;
  bool deterministic = true;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

/// Runs the backend on one image. Missing or unreadable files raise UnreadableImage;
/// any other backend exception (or an empty caption) becomes BackendFailure.
CaptionRecord caption_image(const CaptionerBackend& backend,
                            const std::filesystem::path& image_path,
                            std::string sample_id = {});

/// Ordered, whitespace-normalized, duplicate-free phrase list.
class PhraseBank {
public:
  /// Throws Error on empty or duplicate phrases (after whitespace normalization).
  explicit PhraseBank(const std::vector<std::string>& phrases);

  const std::vector<std::string>& phrases() const { return phrases_; }
  std::size_t size() const { return phrases_.size(); }
  bool empty() const { return phrases_.empty(); }
  std::string digest() const;

private:
  std::vector<std::string> phrases_;
};

/// One phrase per line; blank lines are skipped and later duplicates dropped.
PhraseBank load_phrase_bank(const std::filesystem::path& path);

/// Image/text match score. Higher is better; results must be finite and deterministic.
class SimilarityScorer {
public:
  virtual ~SimilarityScorer() = default;
  virtual std::string scorer_id() const = 0;
  virtual double score(const ImageRef& image, std::string_view text) const = 0;
  /// Scores every phrase for one image. Override when per-image setup is expensive.
  virtual std::vector<double> score_all(const ImageRef& image,
                                        const std::vector<std::string>& texts) const;
};

/// Image-independent lookup table; phrases absent from the table get `fallback`.
class TableScorer final : public SimilarityScorer {
public:
  explicit TableScorer(std::map<std::string, double> table, double fallback = 0.0);
  std::string scorer_id() const override;
  double score(const ImageRef& image, std::string_view text) const override;

private:
  std::map<std::string, double> table_;
  double fallback_;
};

/// Reads `phrase<TAB>score` lines.
TableScorer load_table_scorer(const std::filesystem::path& path, double fallback = 0.0);

/// Scores a phrase by the fraction of image pixels close to any color word it names
/// ("red", "blue", "purple", ...). Phrases without color words score 0.
class ColorScorer final : public SimilarityScorer {
public:
  std::string scorer_id() const override { return "color-v1"; }
  double score(const ImageRef& image, std::string_view text) const override;
  std::vector<double> score_all(const ImageRef& image,
                                const std::vector<std::string>& texts) const override;
};

/// Greedy top-`budget` phrases by descending score; ties go to the earlier bank entry.
/// Returns min(budget, |bank|) phrases in selection order.
std::vector<std::string> select_flavors(const ImageRef& image, std::string_view base_caption,
                                        const PhraseBank& bank, const SimilarityScorer& scorer,
                                        std::size_t budget);

/// base, p1, p2, ... joined by ", ". Phrases are not escaped.
std::string compose_prompt(std::string_view base_caption, const std::vector<std::string>& phrases);

// Backends -------------------------------------------------------------------

/// Returns the same text for every image. Test stub.
class FixedTextCaptioner final : public CaptionerBackend {
public:
  explicit FixedTextCaptioner(std::string text, std::string backend_id = "fixed");
  const std::string& backend_id() const override { return id_; }
  const nlohmann::json& params() const override { return params_; }
  bool deterministic() const override { return true; }
  std::string describe(const ImageRef& image) const override;

private:
  std::string id_;
  std::string text_;
  nlohmann::json params_;
};

/// Describes the salient blob in a PPM image by its outline: how much of its bounding
/// box it fills ("round" vs "boxy") and how large it is. Color is never mentioned.
/// With `sampling` on, a randomly drawn filler word is appended and the backend is
/// nondeterministic.
class RuleBasedCaptioner final : public CaptionerBackend {
public:
  explicit RuleBasedCaptioner(nlohmann::json params = nlohmann::json::object());
  const std::string& backend_id() const override { return id_; }
  const nlohmann::json& params() const override { return params_; }
  bool deterministic() const override { return !sampling_; }
  std::string describe(const ImageRef& image) const override;

private:
  std::string id_ = "rule-based";
  nlohmann::json params_;
  double fill_threshold_;
  int min_spread_;
  bool sampling_;
};

/// Looks captions up by image file name in a `file_name<TAB>caption` TSV, for captions
/// produced offline by an external model.
class PrecomputedCaptioner final : public CaptionerBackend {
public:
  PrecomputedCaptioner(const std::filesystem::path& table, std::string label);
  const std::string& backend_id() const override { return id_; }
  const nlohmann::json& params() const override { return params_; }
  bool deterministic() const override { return true; }
  std::string describe(const ImageRef& image) const override;

private:
  std::string id_ = "precomputed";
  nlohmann::json params_;
  std::map<std::string, std::string, std::less<>> captions_;
};

/// Base caption from another backend, then flavor phrases picked by a scorer.
class PromptInversionCaptioner final : public CaptionerBackend {
public:
  PromptInversionCaptioner(std::shared_ptr<const CaptionerBackend> base, PhraseBank bank,
                           std::shared_ptr<const SimilarityScorer> scorer, std::size_t budget);
  const std::string& backend_id() const override { return id_; }
  const nlohmann::json& params() const override { return params_; }
  bool deterministic() const override { return base_->deterministic(); }
  std::string describe(const ImageRef& image) const override;

private:
  std::string id_ = "prompt-inversion";
  std::shared_ptr<const CaptionerBackend> base_;
  PhraseBank bank_;
  std::shared_ptr<const SimilarityScorer> scorer_;
  std::size_t budget_;
  nlohmann::json params_;
};

inline constexpr std::size_t kDefaultFlavorBudget = 16;

/// Builds a backend from a JSON spec such as
/// {"backend": "prompt-inversion", "base": {...}, "phrase_bank": "...", "budget": 16}.
/// Relative paths resolve against `base_dir`.
std::shared_ptr<const CaptionerBackend> make_captioner(const nlohmann::json& spec,
                                                       const std::filesystem::path& base_dir);

}  // namespace capfuse
