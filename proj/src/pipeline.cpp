#include "capfuse/pipeline.hpp"

#include <cstdlib>
#include <future>
#include <mutex>
#include <ostream>
#include <set>

#include "capfuse/caption_cache.hpp"
#include "capfuse/captioning.hpp"
#include "capfuse/classification.hpp"
#include "capfuse/evaluation.hpp"
#include "capfuse/fusion.hpp"
#include "capfuse/parallel.hpp"
#include "capfuse/util.hpp"

namespace capfuse {

namespace fs = std::filesystem;

// Configuration -------------------------------------------------------------------

namespace {

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

ClassifierSpec parse_classifier(const nlohmann::json& j, const std::string& fallback_backend) {
  ClassifierSpec spec;
  spec.backend = j.value("backend", fallback_backend);
  spec.model_tag = j.value("model_tag", spec.backend);
  spec.train_config = j.value("train_config", nlohmann::json::object());
  if (!spec.train_config.is_object()) throw ConfigError("train_config must be an object");
  return spec;
}

std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "_" : out;
}

std::string seed_suffix(std::int64_t seed) { return "_seed" + std::to_string(seed); }

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("run configuration must be a JSON object");
  RunConfig cfg;
  cfg.base_dir = fs::absolute(base_dir).lexically_normal();
  try {
    const auto& task = doc.at("task");
    if (task.is_string()) {
      auto t = builtin_task(task.get<std::string>());
      if (!t) throw ConfigError("unknown built-in task '" + task.get<std::string>() + "'");
      cfg.task = *t;
    } else {
      cfg.task = task_from_json(task);
    }

    for (const auto& [name, path] : doc.at("manifests").items())
      cfg.manifests[parse_split(name)] = resolve_path(cfg.base_dir, path.get<std::string>());
    for (auto split : {Split::Train, Split::Dev, Split::Test}) {
      if (!cfg.manifests.contains(split))
        throw ConfigError("manifests." + std::string(to_string(split)) + " is required");
    }

    if (auto it = doc.find("expected_counts"); it != doc.end()) {
      if (it->is_string()) {
        cfg.expected_counts = crisisnlp_split_counts(it->get<std::string>());
        if (cfg.expected_counts.empty())
          throw ConfigError("no published counts for '" + it->get<std::string>() + "'");
      } else {
        for (const auto& [name, n] : it->items())
          cfg.expected_counts[parse_split(name)] = n.get<std::size_t>();
      }
    }

    cfg.captioner = doc.value("captioner", nlohmann::json{{"backend", "rule-based"}});
    cfg.image_classifier =
        parse_classifier(doc.value("image_classifier", nlohmann::json::object()), "pixel-histogram");
    cfg.text_classifier =
        parse_classifier(doc.value("text_classifier", nlohmann::json::object()), "token-count");

    const auto fusion = doc.value("fusion", nlohmann::json::object());
    if (fusion.contains("grid")) {
      cfg.grid = fusion.at("grid").get<std::vector<double>>();
    } else {
      cfg.grid = weight_grid(fusion.value("intervals", 20));
    }

    cfg.trial_seeds = doc.value("trial_seeds", kDefaultTrialSeeds);
    cfg.output_dir = resolve_path(cfg.base_dir, doc.value("output_dir", std::string{"out"}));
    if (const char* env = std::getenv("CAPFUSE_CACHE_DIR"); env && *env) {
      cfg.cache_dir = fs::absolute(env).lexically_normal();
    } else if (doc.contains("cache_dir")) {
      cfg.cache_dir = resolve_path(cfg.base_dir, doc.at("cache_dir").get<std::string>());
    } else {
      cfg.cache_dir = cfg.output_dir / "cache";
    }
    if (auto it = doc.find("subsample"); it != doc.end() && !it->is_null()) {
      cfg.subsample = SubsampleSpec{it->at("n_per_class").get<std::size_t>(),
                                    it->value("seed", std::uint64_t{0})};
    }
    cfg.render_plots = doc.value("render_plots", false);
    cfg.jobs = doc.value("jobs", std::size_t{1});
    cfg.parallel_trials = doc.value("parallel_trials", std::size_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run configuration: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& file) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse '" + file.string() + "': " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  auto cfg = parse_run_config(doc, fs::absolute(file).parent_path());
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.trial_seeds.empty()) throw ConfigError("trial_seeds must be non-empty");
  std::set<std::int64_t> seen(cfg.trial_seeds.begin(), cfg.trial_seeds.end());
  if (seen.size() != cfg.trial_seeds.size()) throw ConfigError("trial_seeds must be unique");
  try {
    validate_grid(cfg.grid);
  } catch (const InvalidGrid& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [split, path] : cfg.manifests) {
    if (!fs::is_regular_file(path))
      throw ConfigError("manifest for " + std::string(to_string(split)) + " not found: " +
                        path.string());
  }
  if (cfg.subsample && cfg.subsample->n_per_class == 0)
    throw ConfigError("subsample.n_per_class must be at least 1");
  if (cfg.jobs == 0 || cfg.parallel_trials == 0) throw ConfigError("jobs must be at least 1");
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["task"] = {{"task_id", cfg.task.task_id()}, {"class_names", cfg.task.class_names()}};
  nlohmann::ordered_json manifests = nlohmann::ordered_json::object();
  for (const auto& [split, path] : cfg.manifests) manifests[std::string(to_string(split))] = path.string();
  j["manifests"] = manifests;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [split, n] : cfg.expected_counts) counts[std::string(to_string(split))] = n;
  j["expected_counts"] = counts;
  j["captioner"] = cfg.captioner;
  auto classifier = [](const ClassifierSpec& s) {
    return nlohmann::ordered_json{
        {"backend", s.backend}, {"model_tag", s.model_tag}, {"train_config", s.train_config}};
  };
  j["image_classifier"] = classifier(cfg.image_classifier);
  j["text_classifier"] = classifier(cfg.text_classifier);
  j["fusion"] = {{"grid", cfg.grid}};
  j["trial_seeds"] = cfg.trial_seeds;
  j["output_dir"] = cfg.output_dir.string();
  j["cache_dir"] = cfg.cache_dir.string();
  if (cfg.subsample)
    j["subsample"] = {{"n_per_class", cfg.subsample->n_per_class}, {"seed", cfg.subsample->seed}};
  j["render_plots"] = cfg.render_plots;
  j["jobs"] = cfg.jobs;
  j["parallel_trials"] = cfg.parallel_trials;
  return j;
}

fs::path model_path(const RunConfig& cfg, std::string_view modality, std::int64_t seed) {
  return cfg.output_dir / "models" / (std::string(modality) + seed_suffix(seed) + ".json");
}

fs::path matrix_path(const RunConfig& cfg, std::string_view modality, Split split,
                     std::int64_t seed) {
  return cfg.output_dir / "matrices" /
         (std::string(modality) + "_" + std::string(to_string(split)) + seed_suffix(seed) + ".csv");
}

fs::path caption_cache_path(const RunConfig& cfg) { return cfg.cache_dir / "captions.jsonl"; }

// Shared steps --------------------------------------------------------------------

namespace {

using ManifestSet = std::map<Split, SplitManifest>;

ManifestSet load_manifests(const RunConfig& cfg, bool apply_subsample = true) {
  ManifestSet out;
  for (const auto& [split, path] : cfg.manifests) {
    auto m = with_image_root(load_manifest(path, cfg.task, split), path.parent_path());
    if (apply_subsample && cfg.subsample)
      m = stratified_subsample(m, cfg.subsample->n_per_class, cfg.subsample->seed);
    out.emplace(split, std::move(m));
  }
  return out;
}

std::vector<SplitManifest> as_list(const ManifestSet& set) {
  std::vector<SplitManifest> out;
  for (const auto& [split, m] : set) out.push_back(m);
  return out;
}

nlohmann::ordered_json to_json(const ValidationReport& report) {
  nlohmann::ordered_json j;
  j["task_id"] = report.task_id;
  j["passed"] = report.passed;
  j["splits"] = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    j["splits"].push_back({{"split", to_string(e.split)},
                           {"actual", e.actual},
                           {"expected", e.expected},
                           {"delta", e.delta},
                           {"passed", e.passed}});
  }
  return j;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

/// Returns false (after logging) when the counts fail and mismatches are not allowed.
bool check_counts(const RunConfig& cfg, const ManifestSet& manifests, bool allow_mismatch,
                  std::ostream& log) {
  const auto report = validate_split_counts(as_list(manifests), cfg.expected_counts);
  write_json(cfg.output_dir / "ingest_report.json", to_json(report));
  for (const auto& e : report.entries) {
    log << "ingest: " << to_string(e.split) << " " << e.actual << " samples (expected "
        << e.expected << ", delta " << e.delta << ")" << (e.passed ? "" : " MISMATCH") << "\n";
  }
  if (!report.passed && !allow_mismatch) {
    log << "ingest: split counts do not match; pass --allow-count-mismatch to continue\n";
    return false;
  }
  return true;
}

struct CaptionSummary {
  std::size_t samples = 0;
  std::size_t generated = 0;
  std::vector<std::pair<std::string, std::string>> failures;
};

CaptionSummary caption_manifest(CaptionCache& cache, const CaptionerBackend& backend,
                                const SplitManifest& manifest, bool regenerate, std::size_t jobs) {
  CaptionSummary summary;
  summary.samples = manifest.size();
  const auto before = cache.generated_count();
  std::mutex failures_mutex;
  parallel_for(manifest.size(), jobs, [&](std::size_t i) {
    const auto& sample = manifest.samples()[i];
    try {
      cache.get_or_generate(backend, sample, regenerate);
    } catch (const Error& e) {
      std::lock_guard lock(failures_mutex);
      summary.failures.emplace_back(sample.sample_id, e.what());
    }
  });
  std::sort(summary.failures.begin(), summary.failures.end());
  summary.generated = cache.generated_count() - before;
  return summary;
}

/// Captions every listed split; returns false when any sample failed.
bool caption_splits(const RunConfig& cfg, const ManifestSet& manifests,
                    const std::vector<Split>& splits, bool regenerate, std::ostream& log) {
  auto backend = make_captioner(cfg.captioner, cfg.base_dir);
  CaptionCache cache(caption_cache_path(cfg));
  bool ok = true;
  for (auto split : splits) {
    auto s = caption_manifest(cache, *backend, manifests.at(split), regenerate, cfg.jobs);
    log << "caption[" << to_string(split) << "]: " << s.samples << " samples, "
        << s.samples - s.generated << " cached, " << s.generated << " backend invocations, "
        << s.failures.size() << " failed\n";
    for (const auto& [id, why] : s.failures) log << "  " << id << ": " << why << "\n";
    ok = ok && s.failures.empty();
  }
  return ok;
}

std::map<Split, std::vector<TextSample>> load_texts(const RunConfig& cfg,
                                                    const ManifestSet& manifests) {
  auto backend = make_captioner(cfg.captioner, cfg.base_dir);
  CaptionCache cache(caption_cache_path(cfg));
  std::map<Split, std::vector<TextSample>> out;
  for (const auto& [split, m] : manifests) {
    out[split] = text_features_from_captions(cache, m, backend->backend_id(), backend->params_hash());
  }
  return out;
}

struct TrialModels {
  ModelHandle image;
  ModelHandle text;
};

TrialModels train_models(const RunConfig& cfg, const ManifestSet& manifests,
                         const std::map<Split, std::vector<TextSample>>& texts,
                         std::int64_t seed) {
  auto image_backend = make_classifier_backend(cfg.image_classifier.backend,
                                               cfg.image_classifier.train_config,
                                               cfg.image_classifier.model_tag);
  auto text_backend = make_classifier_backend(cfg.text_classifier.backend,
                                              cfg.text_classifier.train_config,
                                              cfg.text_classifier.model_tag);
  if (image_backend->modality() != Modality::Image)
    throw ModalityMismatch("image_classifier backend is not an image model");
  if (text_backend->modality() != Modality::Text)
    throw ModalityMismatch("text_classifier backend is not a text model");
  TrialModels models;
  models.image = train(*image_backend, cfg.task, labeled_images(manifests.at(Split::Train)),
                       labeled_images(manifests.at(Split::Dev)), seed);
  models.text = train(*text_backend, cfg.task, labeled_texts(texts.at(Split::Train)),
                      labeled_texts(texts.at(Split::Dev)), seed);
  write_json(model_path(cfg, "image", seed), save_model(*models.image));
  write_json(model_path(cfg, "text", seed), save_model(*models.text));
  return models;
}

ModelHandle read_model(const fs::path& path) {
  return load_model(nlohmann::json::parse(read_file(path)));
}

struct SplitMatrices {
  ProbMatrix image;
  ProbMatrix text;
};

SplitMatrices predict_split(const RunConfig& cfg, const TrialModels& models,
                            const SplitManifest& manifest, const std::vector<TextSample>& texts) {
  SplitMatrices out{predict_matrix(models.image, manifest, cfg.jobs),
                    predict_matrix(models.text, manifest, caption_lookup(texts), cfg.jobs)};
  const auto seed = models.image->info().trial_seed;
  write_prob_matrix(matrix_path(cfg, "image", manifest.split(), seed), out.image);
  write_prob_matrix(matrix_path(cfg, "text", manifest.split(), seed), out.text);
  return out;
}

std::string captioner_tag(const RunConfig& cfg) {
  return cfg.captioner.value("backend", std::string{"captioner"});
}

fs::path sweep_stem(const RunConfig& cfg) {
  return cfg.output_dir / "sweeps" /
         (safe_name(cfg.task.task_id()) + "__" + safe_name(cfg.image_classifier.model_tag) +
          "__" + safe_name(cfg.text_classifier.model_tag + "+" + captioner_tag(cfg)));
}

constexpr const char* kAveraging = "per-trial accuracy computed after argmax, then averaged";

void write_sweep_outputs(const RunConfig& cfg, const std::vector<NamedCurve>& curves,
                         const nlohmann::ordered_json& meta) {
  SvgCurveRenderer svg;
  const auto stem = sweep_stem(cfg);
  write_fusion_curves(curves, stem, cfg.render_plots ? &svg : nullptr,
                      cfg.task.task_id() + ": " + cfg.image_classifier.model_tag + " + " +
                          cfg.text_classifier.model_tag);
  auto meta_path = stem;
  meta_path += ".json";
  write_json(meta_path, meta);
}

nlohmann::ordered_json sweep_meta(const RunConfig& cfg) {
  nlohmann::ordered_json meta;
  meta["task_id"] = cfg.task.task_id();
  meta["image_model"] = cfg.image_classifier.model_tag;
  meta["text_model"] = cfg.text_classifier.model_tag;
  meta["captioner"] = captioner_tag(cfg);
  meta["averaging"] = kAveraging;
  return meta;
}

nlohmann::ordered_json curve_json(const FusionSweepResult& r) {
  return {{"split", r.split_name},
          {"trial_seeds", r.trial_seeds},
          {"best_w", select_weight(r)},
          {"best_accuracy", accuracy_at(r, select_weight(r))}};
}

// Run bookkeeping ------------------------------------------------------------------

struct TrialOutcome {
  std::int64_t seed = 0;
  bool ok = false;
  std::string error;
  FusionSweepResult dev, test;
  double selected_w = 0, oracle_w = 0;
  double image_only = 0, text_only = 0, fused_selected = 0, fused_oracle = 0;
  ConfusionMatrix confusion;
};

TrialOutcome run_trial(const RunConfig& cfg, const ManifestSet& manifests,
                       const std::map<Split, std::vector<TextSample>>& texts, std::int64_t seed) {
  TrialOutcome t;
  t.seed = seed;
  try {
    auto models = train_models(cfg, manifests, texts, seed);
    auto dev = predict_split(cfg, models, manifests.at(Split::Dev), texts.at(Split::Dev));
    auto test = predict_split(cfg, models, manifests.at(Split::Test), texts.at(Split::Test));
    t.dev = sweep(dev.image, dev.text, manifests.at(Split::Dev), cfg.grid);
    t.test = sweep(test.image, test.text, manifests.at(Split::Test), cfg.grid);
    t.selected_w = select_weight(t.dev);
    t.oracle_w = select_weight(t.test);
    t.image_only = t.test.accuracy_per_w.front();
    t.text_only = t.test.accuracy_per_w.back();
    t.fused_selected = accuracy_at(t.test, t.selected_w);
    t.fused_oracle = accuracy_at(t.test, t.oracle_w);

    const auto aligned = align_to(test.image, test.text);
    const auto preds = argmax_rows(fuse(test.image.values, aligned.values, t.selected_w));
    const auto labels = manifests.at(Split::Test).labels();
    t.confusion = confusion_matrix(preds, labels, cfg.task.num_classes());
    t.ok = true;
  } catch (const std::exception& e) {
    t.error = e.what();
  }
  return t;
}

std::vector<std::pair<std::string, std::vector<double>>> system_rows(
    const RunConfig& cfg, const std::vector<TrialOutcome>& ok) {
  std::vector<double> image, text, fused, oracle;
  for (const auto& t : ok) {
    image.push_back(t.image_only);
    text.push_back(t.text_only);
    fused.push_back(t.fused_selected);
    oracle.push_back(t.fused_oracle);
  }
  return {
      {"image-only: " + cfg.image_classifier.model_tag, image},
      {"text-only: " + cfg.text_classifier.model_tag + " on " + captioner_tag(cfg), text},
      {"fusion: dev-selected w", fused},
      {"fusion: oracle w (selected on test)", oracle},
  };
}

EvalReport report_from_results(const nlohmann::json& results) {
  EvalReport report;
  report.task_id = results.at("task_id").get<std::string>();
  report.class_names = results.at("class_names").get<std::vector<std::string>>();
  for (const auto& s : results.at("systems")) {
    auto acc = s.at("trial_accuracies").get<std::vector<double>>();
    report.rows.push_back(summarize(s.at("system").get<std::string>(), acc));
  }
  if (auto it = results.find("confusion"); it != results.end() && !it->is_null()) {
    auto rows = it->at("matrix").get<std::vector<std::vector<long long>>>();
    ConfusionMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    report.confusion = m;
    report.confusion_system = it->at("system").get<std::string>();
  }
  return report;
}

void write_reports(const fs::path& dir, const EvalReport& report, ReportFormats formats) {
  if (formats != ReportFormats::Markdown)
    write_file_atomic(dir / "report.csv", emit_report(report, ReportFormat::Csv));
  if (formats != ReportFormats::Csv)
    write_file_atomic(dir / "report.md", emit_report(report, ReportFormat::Markdown));
  if (report.confusion) write_file_atomic(dir / "confusion.csv", emit_confusion(report));
}

constexpr const char* kChecksumFile = "outputs.sha256.json";
constexpr const char* kRunMetaFile = "run_meta.json";

void write_checksums(const fs::path& dir) {
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir);
    const auto name = rel.generic_string();
    if (name == kChecksumFile || name == kRunMetaFile || rel.extension() == ".tmp") continue;
    if (name.rfind("cache/", 0) == 0) continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& rel : paths) files[rel.generic_string()] = sha256_file(dir / rel);
  write_json(dir / kChecksumFile, {{"algorithm", "sha256"}, {"files", files}});
}

}  // namespace

// Subcommands ----------------------------------------------------------------------

int cmd_ingest(const RunConfig& cfg, const IngestOptions& options, std::ostream& log) {
  auto manifests = load_manifests(cfg, false);
  fs::create_directories(cfg.output_dir);
  if (!check_counts(cfg, manifests, options.allow_count_mismatch, log)) return kExitValidation;
  if (options.subsample) {
    for (const auto& [split, m] : manifests) {
      const auto& src = cfg.manifests.at(split);
      auto sub = stratified_subsample(load_manifest(src, cfg.task, split),
                                      options.subsample->n_per_class, options.subsample->seed);
      auto dst = src.parent_path() /
                 (src.stem().string() + ".sub" + std::to_string(options.subsample->n_per_class) +
                  ".seed" + std::to_string(options.subsample->seed) + src.extension().string());
      write_manifest(dst, sub);
      log << "ingest: wrote " << sub.size() << " subsampled " << to_string(split) << " rows to "
          << dst.string() << "\n";
    }
  }
  return kExitOk;
}

int cmd_caption(const RunConfig& cfg, const CaptionOptions& options, std::ostream& log) {
  auto manifests = load_manifests(cfg);
  return caption_splits(cfg, manifests, options.splits, options.regenerate, log) ? kExitOk
                                                                                  : kExitPartial;
}

int cmd_train(const RunConfig& cfg, std::optional<std::int64_t> seed, std::ostream& log) {
  auto manifests = load_manifests(cfg);
  auto texts = load_texts(cfg, manifests);
  std::vector<std::int64_t> seeds = seed ? std::vector<std::int64_t>{*seed} : cfg.trial_seeds;
  int status = kExitOk;
  for (auto s : seeds) {
    try {
      train_models(cfg, manifests, texts, s);
      log << "train: seed " << s << " -> " << model_path(cfg, "image", s).string() << ", "
          << model_path(cfg, "text", s).string() << "\n";
    } catch (const Error& e) {
      log << "train: seed " << s << " failed: " << e.what() << "\n";
      status = kExitPartial;
    }
  }
  return status;
}

int cmd_predict(const RunConfig& cfg, Split split, std::optional<std::int64_t> seed,
                std::ostream& log) {
  auto manifests = load_manifests(cfg);
  auto texts = load_texts(cfg, manifests);
  std::vector<std::int64_t> seeds = seed ? std::vector<std::int64_t>{*seed} : cfg.trial_seeds;
  int status = kExitOk;
  for (auto s : seeds) {
    try {
      TrialModels models{read_model(model_path(cfg, "image", s)),
                         read_model(model_path(cfg, "text", s))};
      predict_split(cfg, models, manifests.at(split), texts.at(split));
      log << "predict: seed " << s << " " << to_string(split) << " -> "
          << matrix_path(cfg, "image", split, s).string() << ", "
          << matrix_path(cfg, "text", split, s).string() << "\n";
    } catch (const Error& e) {
      log << "predict: seed " << s << " failed: " << e.what() << "\n";
      status = kExitPartial;
    }
  }
  return status;
}

int cmd_sweep(const RunConfig& cfg, const SweepOptions& options, std::ostream& log) {
  auto manifests = load_manifests(cfg);
  const auto& manifest = manifests.at(options.sweep_split);
  std::vector<FusionSweepResult> curves;
  if (options.image_matrix || options.text_matrix) {
    if (!options.image_matrix || !options.text_matrix)
      throw ConfigError("--image-matrix and --text-matrix go together");
    curves.push_back(sweep(read_prob_matrix(*options.image_matrix),
                           read_prob_matrix(*options.text_matrix), manifest, cfg.grid));
  } else {
    for (auto s : cfg.trial_seeds) {
      auto image = matrix_path(cfg, "image", options.sweep_split, s);
      auto text = matrix_path(cfg, "text", options.sweep_split, s);
      if (!fs::exists(image) || !fs::exists(text)) {
        log << "sweep: no matrices for seed " << s << ", skipped\n";
        continue;
      }
      curves.push_back(sweep(read_prob_matrix(image), read_prob_matrix(text), manifest, cfg.grid));
    }
  }
  if (curves.empty()) {
    log << "sweep: nothing to sweep\n";
    return kExitPartial;
  }
  auto avg = multi_trial_average(curves);
  auto meta = sweep_meta(cfg);
  meta["weight_mode"] = options.sweep_split == Split::Test ? "oracle weight (selected on test)"
                                                           : "selected on dev";
  meta[std::string(to_string(options.sweep_split))] = curve_json(avg);
  write_sweep_outputs(cfg, {{std::string(to_string(options.sweep_split)), avg}}, meta);
  const double w = select_weight(avg);
  log << "sweep[" << to_string(options.sweep_split) << "]: " << curves.size()
      << " trial(s), best w = " << format_significant(w, 6) << " ("
      << format_percent(accuracy_at(avg, w)) << "%)"
      << (options.sweep_split == Split::Test ? " [oracle weight]" : "") << "\n";
  return kExitOk;
}

int cmd_run(const RunConfig& cfg, const RunOptions& options, std::ostream& log) {
  fs::create_directories(cfg.output_dir);
  write_json(cfg.output_dir / "resolved_config.json", to_json(cfg));

  auto manifests = load_manifests(cfg);
  if (!check_counts(cfg, manifests, options.allow_count_mismatch, log)) return kExitValidation;

  if (!caption_splits(cfg, manifests, {Split::Train, Split::Dev, Split::Test}, false, log)) {
    log << "run: captioning incomplete, aborting\n";
    return kExitPartial;
  }
  const auto texts = load_texts(cfg, manifests);

  std::vector<TrialOutcome> outcomes(cfg.trial_seeds.size());
  std::mutex log_mutex;
  parallel_for(cfg.trial_seeds.size(), cfg.parallel_trials, [&](std::size_t i) {
    outcomes[i] = run_trial(cfg, manifests, texts, cfg.trial_seeds[i]);
    std::lock_guard lock(log_mutex);
    const auto& t = outcomes[i];
    if (t.ok) {
      log << "run: seed " << t.seed << ": image " << format_percent(t.image_only) << "%, text "
          << format_percent(t.text_only) << "%, fused@w*=" << format_significant(t.selected_w, 6)
          << " " << format_percent(t.fused_selected) << "%\n";
    } else {
      log << "run: seed " << t.seed << " failed: " << t.error << "\n";
    }
  });

  std::vector<TrialOutcome> ok;
  for (const auto& t : outcomes)
    if (t.ok) ok.push_back(t);

  nlohmann::ordered_json results;
  results["task_id"] = cfg.task.task_id();
  results["class_names"] = cfg.task.class_names();
  results["image_model"] = cfg.image_classifier.model_tag;
  results["text_model"] = cfg.text_classifier.model_tag;
  results["captioner"] = captioner_tag(cfg);
  results["grid"] = cfg.grid;
  results["averaging"] = kAveraging;
  results["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : outcomes) {
    nlohmann::ordered_json tj;
    tj["seed"] = t.seed;
    tj["status"] = t.ok ? "ok" : "failed";
    if (t.ok) {
      tj["selected_w"] = t.selected_w;
      tj["oracle_w"] = t.oracle_w;
      tj["image_only"] = t.image_only;
      tj["text_only"] = t.text_only;
      tj["fused_selected"] = t.fused_selected;
      tj["fused_oracle"] = t.fused_oracle;
    } else {
      tj["error"] = t.error;
    }
    results["trials"].push_back(tj);
  }
  results["n_trials"] = ok.size();

  if (!ok.empty()) {
    std::vector<FusionSweepResult> dev_curves, test_curves;
    for (const auto& t : ok) {
      dev_curves.push_back(t.dev);
      test_curves.push_back(t.test);
    }
    const auto dev = multi_trial_average(dev_curves);
    const auto test = multi_trial_average(test_curves);
    auto meta = sweep_meta(cfg);
    meta["dev"] = curve_json(dev);
    meta["test"] = curve_json(test);
    meta["test"]["weight_mode"] = "oracle weight (selected on test)";
    write_sweep_outputs(cfg, {{"dev", dev}, {"test", test}}, meta);

    results["systems"] = nlohmann::ordered_json::array();
    for (const auto& [tag, acc] : system_rows(cfg, ok))
      results["systems"].push_back({{"system", tag}, {"trial_accuracies", acc}});
    std::vector<std::vector<long long>> rows;
    for (Eigen::Index r = 0; r < ok.front().confusion.rows(); ++r) {
      rows.emplace_back();
      for (Eigen::Index c = 0; c < ok.front().confusion.cols(); ++c)
        rows.back().push_back(ok.front().confusion(r, c));
    }
    results["confusion"] = {{"system", "fusion: dev-selected w"},
                            {"trial_seed", ok.front().seed},
                            {"matrix", rows}};
    write_json(cfg.output_dir / "results.json", results);
    write_reports(cfg.output_dir, report_from_results(nlohmann::json::parse(results.dump())),
                  ReportFormats::Both);
  } else {
    results["systems"] = nlohmann::ordered_json::array();
    results["confusion"] = nullptr;
    write_json(cfg.output_dir / "results.json", results);
  }

  const int status = ok.size() == outcomes.size() ? kExitOk : kExitPartial;
  log << "run: " << ok.size() << "/" << outcomes.size() << " trials succeeded\n";
  write_checksums(cfg.output_dir);
  write_json(cfg.output_dir / kRunMetaFile,
             {{"finished_at", utc_timestamp()}, {"exit_code", status}});
  return status;
}

int cmd_report(const fs::path& output_dir, ReportFormats formats, std::ostream& log) {
  const auto results = nlohmann::json::parse(read_file(output_dir / "results.json"));
  auto report = report_from_results(results);
  if (report.rows.empty()) {
    log << "report: no successful trials in " << output_dir.string() << "\n";
    return kExitPartial;
  }
  write_reports(output_dir, report, formats);
  log << emit_report(report, ReportFormat::Markdown);
  return kExitOk;
}

int cmd_verify(const fs::path& output_dir, std::ostream& log) {
  const auto declared = nlohmann::json::parse(read_file(output_dir / kChecksumFile));
  std::size_t bad = 0, checked = 0;
  for (const auto& [rel, digest] : declared.at("files").items()) {
    ++checked;
    const auto path = output_dir / rel;
    if (!fs::exists(path)) {
      log << "verify: missing " << rel << "\n";
      ++bad;
      continue;
    }
    if (sha256_file(path) != digest.get<std::string>()) {
      log << "verify: checksum mismatch " << rel << "\n";
      ++bad;
    }
  }
  log << "verify: " << checked - bad << "/" << checked << " outputs match\n";
  return bad == 0 ? kExitOk : kExitValidation;
}

}  // namespace capfuse
