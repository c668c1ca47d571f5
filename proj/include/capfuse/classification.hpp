#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capfuse/caption_cache.hpp"
#include "capfuse/dataset.hpp"
#include "capfuse/prob.hpp"
#include "json.hpp"

namespace capfuse {

enum class Modality { Image, Text };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view name);

/// An image path (image modality) or a caption (text modality).
struct ClassifierInput {
  Modality modality;
  std::string payload;
};

struct LabeledInput {
  std::string sample_id;
  std::string payload;
  int label = 0;
};

/// Provenance stamped onto every trained model.
struct ModelInfo {
  std::string backend;
  Modality modality;
  std::string model_tag;
  nlohmann::json train_config;
  std::int64_t trial_seed = 0;
  TaskDefinition task;
};

class TrainedModel {
public:
  virtual ~TrainedModel() = default;

  const ModelInfo& info() const { return info_; }
  int num_classes() const { return info_.task.num_classes(); }

  /// Throws ModalityMismatch for inputs of the other modality. Output passes through
  /// enforce_simplex.
  ProbVector predict_proba(const ClassifierInput& input) const;

  /// Backend-specific parameters; round-trips through the backend's loader.
  virtual nlohmann::json state() const = 0;

protected:
  explicit TrainedModel(ModelInfo info) : info_(std::move(info)) {}
  virtual ProbVector posterior(const std::string& payload) const = 0;

private:
  ModelInfo info_;
};

using ModelHandle = std::shared_ptr<const TrainedModel>;

/// Throws NotTrained on an empty handle.
ProbVector predict_proba(const ModelHandle& model, const ClassifierInput& input);

class ClassifierBackend {
public:
  virtual ~ClassifierBackend() = default;

  virtual std::string_view backend_name() const = 0;
  virtual Modality modality() const = 0;
  virtual const std::string& model_tag() const = 0;
  /// Fully resolved configuration, defaults included.
  virtual const nlohmann::json& train_config() const = 0;

  /// Backend-specific fit. Callers go through capfuse::train, which checks inputs.
  /// `dev` may steer model selection but never parameter updates.
  virtual ModelHandle fit(const TaskDefinition& task, const std::vector<LabeledInput>& train,
                          const std::vector<LabeledInput>& dev, std::int64_t trial_seed) const = 0;
};

/// Throws MissingClassInTrain when some class has no training sample; backend errors
/// other than capfuse::Error are wrapped in BackendFailure.
ModelHandle train(const ClassifierBackend& backend, const TaskDefinition& task,
                  const std::vector<LabeledInput>& train_split,
                  const std::vector<LabeledInput>& dev_split, std::int64_t trial_seed);

using CaptionLookup = std::unordered_map<std::string, std::string>;

/// Image modality: one row per manifest sample, payload = image path.
ProbMatrix predict_matrix(const ModelHandle& model, const SplitManifest& manifest,
                          std::size_t jobs = 1);
/// Text modality: payload = caption of each sample. Throws MissingCaption naming every
/// sample without one before predicting anything.
ProbMatrix predict_matrix(const ModelHandle& model, const SplitManifest& manifest,
                          const CaptionLookup& captions, std::size_t jobs = 1);

struct TextSample {
  std::string sample_id;
  std::string text;
  int label = 0;
};

/// Captions for one (backend_id, params_hash) key, aligned with the manifest.
std::vector<TextSample> text_features_from_captions(const CaptionCache& cache,
                                                    const SplitManifest& manifest,
                                                    const std::string& backend_id,
                                                    const std::string& params_hash);

std::vector<LabeledInput> labeled_images(const SplitManifest& manifest);
std::vector<LabeledInput> labeled_texts(const std::vector<TextSample>& samples);
CaptionLookup caption_lookup(const std::vector<TextSample>& samples);

// Backends ---------------------------------------------------------------------

/// Lowercased tokens split at anything that is not an ASCII letter/digit or a UTF-8
/// continuation byte.
std::vector<std::string> tokenize(std::string_view text);

/// Multinomial token-count classifier with additive smoothing (alpha = 1 by default).
/// Prior = class document frequency. Tokens unseen in training are ignored.
class TokenCountBackend final : public ClassifierBackend {
public:
  explicit TokenCountBackend(const nlohmann::json& config = nlohmann::json::object(),
                             std::string model_tag = "token-count");
  std::string_view backend_name() const override { return "token-count"; }
  Modality modality() const override { return Modality::Text; }
  const std::string& model_tag() const override { return tag_; }
  const nlohmann::json& train_config() const override { return config_; }
  ModelHandle fit(const TaskDefinition& task, const std::vector<LabeledInput>& train,
                  const std::vector<LabeledInput>& dev, std::int64_t trial_seed) const override;

private:
  std::string tag_;
  nlohmann::json config_;
};

/// Softmax regression on standardized joint RGB histograms, trained by full-batch
/// gradient descent from a seeded random start. The checkpoint with the best dev
/// accuracy (earliest on ties) is kept.
class PixelHistogramBackend final : public ClassifierBackend {
public:
  explicit PixelHistogramBackend(const nlohmann::json& config = nlohmann::json::object(),
                                 std::string model_tag = "pixel-histogram");
  std::string_view backend_name() const override { return "pixel-histogram"; }
  Modality modality() const override { return Modality::Image; }
  const std::string& model_tag() const override { return tag_; }
  const nlohmann::json& train_config() const override { return config_; }
  ModelHandle fit(const TaskDefinition& task, const std::vector<LabeledInput>& train,
                  const std::vector<LabeledInput>& dev, std::int64_t trial_seed) const override;

private:
  std::string tag_;
  nlohmann::json config_;
};

// Registry -----------------------------------------------------------------------

struct ClassifierRegistration {
  std::function<std::unique_ptr<ClassifierBackend>(const nlohmann::json& config,
                                                   const std::string& model_tag)>
      make;
  std::function<ModelHandle(ModelInfo info, const nlohmann::json& state)> load;
};

/// Adds or replaces a backend. "token-count" and "pixel-histogram" are built in.
void register_classifier_backend(const std::string& name, ClassifierRegistration registration);
std::unique_ptr<ClassifierBackend> make_classifier_backend(const std::string& name,
                                                           const nlohmann::json& config,
                                                           const std::string& model_tag = {});

nlohmann::json save_model(const TrainedModel& model);
ModelHandle load_model(const nlohmann::json& saved);

nlohmann::json to_json(const TaskDefinition& task);
TaskDefinition task_from_json(const nlohmann::json& j);

}  // namespace capfuse
