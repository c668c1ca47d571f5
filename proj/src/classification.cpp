#include "capfuse/classification.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <mutex>
#include <random>

#include "capfuse/image.hpp"
#include "capfuse/parallel.hpp"

namespace capfuse {

std::string_view to_string(Modality modality) {
  return modality == Modality::Image ? "image" : "text";
}

Modality parse_modality(std::string_view name) {
  if (name == "image") return Modality::Image;
  if (name == "text") return Modality::Text;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

nlohmann::json to_json(const TaskDefinition& task) {
  return {{"task_id", task.task_id()}, {"class_names", task.class_names()}};
}

TaskDefinition task_from_json(const nlohmann::json& j) {
  return {j.at("task_id").get<std::string>(), j.at("class_names").get<std::vector<std::string>>()};
}

ProbVector TrainedModel::predict_proba(const ClassifierInput& input) const {
  if (input.modality != info_.modality) {
    throw ModalityMismatch("model '" + info_.model_tag + "' takes " +
                           std::string(to_string(info_.modality)) + " input, got " +
                           std::string(to_string(input.modality)));
  }
  auto p = enforce_simplex(posterior(input.payload));
  if (p.size() != num_classes())
    throw LengthMismatch("posterior has " + std::to_string(p.size()) + " entries, expected " +
                         std::to_string(num_classes()));
  return p;
}

ProbVector predict_proba(const ModelHandle& model, const ClassifierInput& input) {
  if (!model) throw NotTrained();
  return model->predict_proba(input);
}

ModelHandle train(const ClassifierBackend& backend, const TaskDefinition& task,
                  const std::vector<LabeledInput>& train_split,
                  const std::vector<LabeledInput>& dev_split, std::int64_t trial_seed) {
  std::vector<bool> present(task.num_classes(), false);
  for (const auto& s : train_split) {
    if (s.label < 0 || s.label >= task.num_classes())
      throw IndexOutOfRange("training label " + std::to_string(s.label) + " out of range");
    present[s.label] = true;
  }
  for (const auto& s : dev_split) {
    if (s.label < 0 || s.label >= task.num_classes())
      throw IndexOutOfRange("dev label " + std::to_string(s.label) + " out of range");
  }
  for (int c = 0; c < task.num_classes(); ++c) {
    if (!present[c]) throw MissingClassInTrain(task.class_name(c));
  }
  try {
    auto model = backend.fit(task, train_split, dev_split, trial_seed);
    if (!model) throw BackendFailure(std::string(backend.backend_name()), "fit returned no model");
    return model;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendFailure(std::string(backend.backend_name()), e.what());
  }
}

namespace {

ProbMatrix predict_rows(const ModelHandle& model, const SplitManifest& manifest,
                        const std::vector<ClassifierInput>& inputs, std::size_t jobs) {
  if (!model) throw NotTrained();
  if (model->info().task.task_id() != manifest.task().task_id())
    throw MixedTasks("model task '" + model->info().task.task_id() + "' vs manifest task '" +
                     manifest.task().task_id() + "'");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd values(n, model->num_classes());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    values.row(static_cast<Eigen::Index>(i)) = model->predict_proba(inputs[i]).transpose();
  });
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& s : manifest.samples()) ids.push_back(s.sample_id);
  return {manifest.task(), std::string(to_string(manifest.split())), std::move(ids),
          std::move(values), model->info().model_tag, model->info().trial_seed};
}

}  // namespace

ProbMatrix predict_matrix(const ModelHandle& model, const SplitManifest& manifest,
                          std::size_t jobs) {
  if (!model) throw NotTrained();
  std::vector<ClassifierInput> inputs;
  inputs.reserve(manifest.size());
  for (const auto& s : manifest.samples())
    inputs.push_back({Modality::Image, s.image_path.string()});
  return predict_rows(model, manifest, inputs, jobs);
}

ProbMatrix predict_matrix(const ModelHandle& model, const SplitManifest& manifest,
                          const CaptionLookup& captions, std::size_t jobs) {
  if (!model) throw NotTrained();
  std::vector<std::string> missing;
  std::vector<ClassifierInput> inputs;
  inputs.reserve(manifest.size());
  for (const auto& s : manifest.samples()) {
    auto it = captions.find(s.sample_id);
    if (it == captions.end()) {
      missing.push_back(s.sample_id);
      continue;
    }
    inputs.push_back({Modality::Text, it->second});
  }
  if (!missing.empty()) throw MissingCaption(std::move(missing));
  return predict_rows(model, manifest, inputs, jobs);
}

std::vector<TextSample> text_features_from_captions(const CaptionCache& cache,
                                                    const SplitManifest& manifest,
                                                    const std::string& backend_id,
                                                    const std::string& params_hash) {
  std::vector<TextSample> out;
  std::vector<std::string> missing;
  out.reserve(manifest.size());
  for (const auto& s : manifest.samples()) {
    auto rec = cache.find({s.sample_id, backend_id, params_hash});
    if (!rec) {
      missing.push_back(s.sample_id);
      continue;
    }
    out.push_back({s.sample_id, std::move(rec->text), s.label_index});
  }
  if (!missing.empty()) throw MissingCaption(std::move(missing));
  return out;
}

std::vector<LabeledInput> labeled_images(const SplitManifest& manifest) {
  std::vector<LabeledInput> out;
  out.reserve(manifest.size());
  for (const auto& s : manifest.samples())
    out.push_back({s.sample_id, s.image_path.string(), s.label_index});
  return out;
}

std::vector<LabeledInput> labeled_texts(const std::vector<TextSample>& samples) {
  std::vector<LabeledInput> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.sample_id, s.text, s.label});
  return out;
}

CaptionLookup caption_lookup(const std::vector<TextSample>& samples) {
  CaptionLookup out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.emplace(s.sample_id, s.text);
  return out;
}

// Token-count backend ----------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

class TokenCountModel final : public TrainedModel {
public:
  TokenCountModel(ModelInfo info, double alpha, std::vector<double> class_docs,
                  std::map<std::string, std::vector<double>> token_counts)
      : TrainedModel(std::move(info)),
        alpha_(alpha),
        class_docs_(std::move(class_docs)),
        counts_(std::move(token_counts)) {
    const auto C = class_docs_.size();
    totals_.assign(C, 0.0);
    for (const auto& [tok, per_class] : counts_) {
      if (per_class.size() != C) throw Error("token count vector has wrong length");
      for (std::size_t c = 0; c < C; ++c) totals_[c] += per_class[c];
    }
  }

  static ModelHandle load(ModelInfo info, const nlohmann::json& state) {
    return std::make_shared<TokenCountModel>(
        std::move(info), state.at("alpha").get<double>(),
        state.at("class_docs").get<std::vector<double>>(),
        state.at("token_counts").get<std::map<std::string, std::vector<double>>>());
  }

  nlohmann::json state() const override {
    return {{"alpha", alpha_}, {"class_docs", class_docs_}, {"token_counts", counts_}};
  }

protected:
  ProbVector posterior(const std::string& payload) const override {
    const auto C = static_cast<Eigen::Index>(class_docs_.size());
    const double n_docs = std::accumulate(class_docs_.begin(), class_docs_.end(), 0.0);
    const double vocab = static_cast<double>(counts_.size());

    std::map<std::string, double> bag;
    for (auto& t : tokenize(payload)) bag[std::move(t)] += 1.0;

    ProbVector log_post(C);
    for (Eigen::Index c = 0; c < C; ++c) log_post(c) = std::log(class_docs_[c] / n_docs);
    for (const auto& [tok, n] : bag) {
      auto it = counts_.find(tok);
      if (it == counts_.end()) continue;
      for (Eigen::Index c = 0; c < C; ++c) {
        log_post(c) += n * std::log((it->second[c] + alpha_) / (totals_[c] + alpha_ * vocab));
      }
    }
    ProbVector p = (log_post.array() - log_post.maxCoeff()).exp();
    return p / p.sum();
  }

private:
  double alpha_;
  std::vector<double> class_docs_;
  std::map<std::string, std::vector<double>> counts_;
  std::vector<double> totals_;
};

nlohmann::json merged_config(const nlohmann::json& defaults, const nlohmann::json& overrides) {
  nlohmann::json out = defaults;
  if (overrides.is_null()) return out;
  if (!overrides.is_object()) throw ConfigError("train_config must be a JSON object");
  for (const auto& [k, v] : overrides.items()) {
    if (!defaults.contains(k)) throw ConfigError("unknown train_config key '" + k + "'");
    out[k] = v;
  }
  return out;
}

}  // namespace

TokenCountBackend::TokenCountBackend(const nlohmann::json& config, std::string model_tag)
    : tag_(std::move(model_tag)),
      config_(merged_config({{"alpha", 1.0}, {"checkpoint_rule", "closed-form (dev unused)"}},
                            config)) {
  if (!(config_.at("alpha").get<double>() > 0)) throw ConfigError("alpha must be positive");
}

ModelHandle TokenCountBackend::fit(const TaskDefinition& task,
                                   const std::vector<LabeledInput>& train,
                                   const std::vector<LabeledInput>&, std::int64_t trial_seed) const {
  const auto C = static_cast<std::size_t>(task.num_classes());
  std::vector<double> class_docs(C, 0.0);
  std::map<std::string, std::vector<double>> counts;
  for (const auto& s : train) {
    class_docs[s.label] += 1.0;
    for (auto& t : tokenize(s.payload)) {
      auto& per_class = counts[std::move(t)];
      if (per_class.empty()) per_class.assign(C, 0.0);
      per_class[s.label] += 1.0;
    }
  }
  ModelInfo info{"token-count", Modality::Text, tag_, config_, trial_seed, task};
  return std::make_shared<TokenCountModel>(std::move(info), config_.at("alpha").get<double>(),
                                           std::move(class_docs), std::move(counts));
}

// Pixel-histogram backend ------------------------------------------------------------

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  return p.array().colwise() / p.rowwise().sum().array();
}

class PixelHistogramModel final : public TrainedModel {
public:
  PixelHistogramModel(ModelInfo info, int bins, Eigen::VectorXd mean, Eigen::VectorXd scale,
                      Eigen::MatrixXd weights, Eigen::VectorXd bias, nlohmann::json selection)
      : TrainedModel(std::move(info)),
        bins_(bins),
        mean_(std::move(mean)),
        scale_(std::move(scale)),
        weights_(std::move(weights)),
        bias_(std::move(bias)),
        selection_(std::move(selection)) {}

  static ModelHandle load(ModelInfo info, const nlohmann::json& state) {
    auto vec = [](const nlohmann::json& j) {
      auto v = j.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    auto rows = state.at("weights").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return std::make_shared<PixelHistogramModel>(std::move(info), state.at("bins").get<int>(),
                                                 vec(state.at("mean")), vec(state.at("scale")),
                                                 std::move(w), vec(state.at("bias")),
                                                 state.value("selection", nlohmann::json{}));
  }

  nlohmann::json state() const override {
    auto vec = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < weights_.rows(); ++r)
      rows.push_back(vec(weights_.row(r).transpose()));
    return {{"bins", bins_},         {"mean", vec(mean_)}, {"scale", vec(scale_)},
            {"weights", rows},       {"bias", vec(bias_)}, {"selection", selection_}};
  }

protected:
  ProbVector posterior(const std::string& payload) const override {
    Eigen::VectorXd x = standardize(color_histogram(read_ppm(payload), bins_));
    Eigen::MatrixXd logits = (weights_ * x + bias_).transpose();
    return softmax_rows(logits).row(0).transpose();
  }

private:
  Eigen::VectorXd standardize(const Eigen::VectorXd& h) const {
    return (h - mean_).cwiseQuotient(scale_);
  }

  int bins_;
  Eigen::VectorXd mean_, scale_;
  Eigen::MatrixXd weights_;  // classes x features
  Eigen::VectorXd bias_;
  nlohmann::json selection_;
};

Eigen::MatrixXd histogram_rows(const std::vector<LabeledInput>& inputs, int bins) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(inputs.size()), bins * bins * bins);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) = color_histogram(read_ppm(inputs[i].payload), bins).transpose();
  return X;
}

double accuracy_of(const Eigen::MatrixXd& logits, const std::vector<LabeledInput>& inputs) {
  auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) hits += pred[i] == inputs[i].label;
  return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

}  // namespace

PixelHistogramBackend::PixelHistogramBackend(const nlohmann::json& config, std::string model_tag)
    : tag_(std::move(model_tag)),
      config_(merged_config({{"bins", 4},
                             {"epochs", 300},
                             {"learning_rate", 0.5},
                             {"l2", 1e-3},
                             {"init_scale", 0.01},
                             {"eval_every", 10},
                             {"checkpoint_rule", "best-dev-accuracy"}},
                            config)) {
  if (config_.at("bins").get<int>() < 1 || config_.at("bins").get<int>() > 16)
    throw ConfigError("bins must be in [1, 16]");
  if (config_.at("epochs").get<int>() < 1) throw ConfigError("epochs must be positive");
  if (config_.at("eval_every").get<int>() < 1) throw ConfigError("eval_every must be positive");
  if (config_.at("init_scale").get<double>() < 0) throw ConfigError("init_scale must be >= 0");
  const auto rule = config_.at("checkpoint_rule").get<std::string>();
  if (rule != "best-dev-accuracy" && rule != "last")
    throw ConfigError("checkpoint_rule must be best-dev-accuracy or last");
}

ModelHandle PixelHistogramBackend::fit(const TaskDefinition& task,
                                       const std::vector<LabeledInput>& train,
                                       const std::vector<LabeledInput>& dev,
                                       std::int64_t trial_seed) const {
  const int bins = config_.at("bins").get<int>();
  const int epochs = config_.at("epochs").get<int>();
  const double lr = config_.at("learning_rate").get<double>();
  const double l2 = config_.at("l2").get<double>();
  const double init_scale = config_.at("init_scale").get<double>();
  const int eval_every = config_.at("eval_every").get<int>();
  const bool use_dev = config_.at("checkpoint_rule").get<std::string>() == "best-dev-accuracy" &&
                       !dev.empty();
  const Eigen::Index C = task.num_classes();

  Eigen::MatrixXd X = histogram_rows(train, bins);
  const Eigen::Index N = X.rows(), F = X.cols();
  Eigen::VectorXd mean = X.colwise().mean().transpose();
  Eigen::VectorXd scale =
      ((X.rowwise() - mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
  for (Eigen::Index f = 0; f < F; ++f)
    if (scale(f) < 1e-9) scale(f) = 1.0;
  X = (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

  Eigen::MatrixXd Xdev;
  if (use_dev) {
    Xdev = histogram_rows(dev, bins);
    Xdev = (Xdev.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(N, C);
  for (Eigen::Index i = 0; i < N; ++i) Y(i, train[i].label) = 1.0;

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(C, F);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(C);
  if (init_scale > 0) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial_seed));
    std::normal_distribution<double> normal(0.0, init_scale);
    for (Eigen::Index r = 0; r < C; ++r)
      for (Eigen::Index f = 0; f < F; ++f) W(r, f) = normal(rng);
  }

  Eigen::MatrixXd best_W = W;
  Eigen::VectorXd best_b = b;
  double best_dev = -1.0;
  int best_epoch = 0;
  auto checkpoint = [&](int epoch) {
    if (!use_dev) return;
    Eigen::MatrixXd logits = (Xdev * W.transpose()).rowwise() + b.transpose();
    double acc = accuracy_of(logits, dev);
    if (acc > best_dev) {
      best_dev = acc;
      best_epoch = epoch;
      best_W = W;
      best_b = b;
    }
  };

  checkpoint(0);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Eigen::MatrixXd logits = (X * W.transpose()).rowwise() + b.transpose();
    Eigen::MatrixXd residual = softmax_rows(logits) - Y;
    W -= lr * ((residual.transpose() * X) / static_cast<double>(N) + l2 * W);
    b -= lr * (residual.colwise().sum().transpose() / static_cast<double>(N));
    if (epoch % eval_every == 0 || epoch == epochs) checkpoint(epoch);
  }

  nlohmann::json selection;
  if (use_dev) {
    W = best_W;
    b = best_b;
    selection = {{"epoch", best_epoch}, {"dev_accuracy", best_dev}};
  } else {
    selection = {{"epoch", epochs}};
  }
  ModelInfo info{"pixel-histogram", Modality::Image, tag_, config_, trial_seed, task};
  return std::make_shared<PixelHistogramModel>(std::move(info), bins, std::move(mean),
                                               std::move(scale), std::move(W), std::move(b),
                                               std::move(selection));
}

// Registry ---------------------------------------------------------------------------

namespace {

struct Registry {
  Registry();
  std::mutex mutex;
  std::map<std::string, ClassifierRegistration> entries;
};

Registry::Registry() {
  entries["token-count"] = {
      [](const nlohmann::json& cfg, const std::string& tag) {
        return std::make_unique<TokenCountBackend>(cfg, tag.empty() ? "token-count" : tag);
      },
      &TokenCountModel::load};
  entries["pixel-histogram"] = {
      [](const nlohmann::json& cfg, const std::string& tag) {
        return std::make_unique<PixelHistogramBackend>(cfg,
                                                       tag.empty() ? "pixel-histogram" : tag);
      },
      &PixelHistogramModel::load};
}

Registry& registry() {
  static Registry r;
  return r;
}

ClassifierRegistration lookup(const std::string& name) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  auto it = r.entries.find(name);
  if (it == r.entries.end()) throw ConfigError("unknown classifier backend '" + name + "'");
  return it->second;
}

}  // namespace

void register_classifier_backend(const std::string& name, ClassifierRegistration registration) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.entries[name] = std::move(registration);
}

std::unique_ptr<ClassifierBackend> make_classifier_backend(const std::string& name,
                                                           const nlohmann::json& config,
                                                           const std::string& model_tag) {
  return lookup(name).make(config, model_tag);
}

nlohmann::json save_model(const TrainedModel& model) {
  const auto& info = model.info();
  return {{"backend", info.backend},
          {"modality", to_string(info.modality)},
          {"model_tag", info.model_tag},
          {"train_config", info.train_config},
          {"trial_seed", info.trial_seed},
          {"task", to_json(info.task)},
          {"state", model.state()}};
}

ModelHandle load_model(const nlohmann::json& saved) {
  const auto backend = saved.at("backend").get<std::string>();
  ModelInfo info{backend,
                 parse_modality(saved.at("modality").get<std::string>()),
                 saved.at("model_tag").get<std::string>(),
                 saved.at("train_config"),
                 saved.at("trial_seed").get<std::int64_t>(),
                 task_from_json(saved.at("task"))};
  return lookup(backend).load(std::move(info), saved.at("state"));
}

}  // namespace capfuse
