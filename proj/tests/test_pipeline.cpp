#include "doctest.h"

#include <cstdlib>
#include <sstream>

#include "capfuse/classification.hpp"
#include "capfuse/errors.hpp"
#include "capfuse/pipeline.hpp"
#include "capfuse/synthetic.hpp"
#include "capfuse/util.hpp"
#include "support.hpp"

using namespace capfuse;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  TempDir dir{"capfuse-pipeline"};
  SyntheticCorpus corpus = generate_synthetic_corpus(dir.path(), {.n_images = 48, .seed = 9});
  nlohmann::json doc = nlohmann::json::parse(read_file(dir / "config.json"));

  RunConfig config() const {
    auto cfg = parse_run_config(doc, dir.path());
    validate(cfg);
    return cfg;
  }
};

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

// Throws for one seed so a single trial fails.
class FlakyBackend final : public ClassifierBackend {
public:
  explicit FlakyBackend(std::string tag) : tag_(std::move(tag)) {}
  std::string_view backend_name() const override { return "flaky"; }
  Modality modality() const override { return Modality::Text; }
  const std::string& model_tag() const override { return tag_; }
  const nlohmann::json& train_config() const override { return inner_.train_config(); }
  ModelHandle fit(const TaskDefinition& task, const std::vector<LabeledInput>& train,
                  const std::vector<LabeledInput>& dev, std::int64_t seed) const override {
    if (seed == 33) throw std::runtime_error("simulated crash");
    return inner_.fit(task, train, dev, seed);
  }

private:
  std::string tag_;
  TokenCountBackend inner_;
};

}  // namespace

TEST_CASE("parse_run_config resolves paths and defaults") {
  Fixture f;
  auto cfg = f.config();
  CHECK(cfg.task == synthetic_task());
  CHECK(cfg.manifests.at(Split::Dev) == f.dir / "dev.tsv");
  CHECK(cfg.output_dir == f.dir / "out");
  CHECK(cfg.grid.size() == 21);
  CHECK(cfg.trial_seeds == kDefaultTrialSeeds);
  CHECK(cfg.image_classifier.backend == "pixel-histogram");

  auto doc = f.doc;
  doc["task"] = "damage_severity";
  doc["expected_counts"] = "damage_severity";
  doc.erase("trial_seeds");
  auto builtin = parse_run_config(doc, f.dir.path());
  CHECK(builtin.task == damage_severity_task());
  CHECK(builtin.expected_counts.at(Split::Train) == 26898);
  CHECK(builtin.trial_seeds == std::vector<std::int64_t>{11, 22, 33, 44, 55});

  auto j = to_json(cfg);
  CHECK(j.at("trial_seeds").size() == 5);
  CHECK(j.at("fusion").at("grid").size() == 21);
}

TEST_CASE("CAPFUSE_CACHE_DIR overrides the cache location") {
  Fixture f;
  ::setenv("CAPFUSE_CACHE_DIR", (f.dir / "elsewhere").c_str(), 1);
  auto cfg = f.config();
  ::unsetenv("CAPFUSE_CACHE_DIR");
  CHECK(cfg.cache_dir == f.dir / "elsewhere");
  CHECK(caption_cache_path(cfg).parent_path() == f.dir / "elsewhere");
  CHECK(f.config().cache_dir == f.dir / "cache");
}

TEST_CASE("validate rejects bad configurations") {
  Fixture f;
  auto cfg = f.config();
  cfg.trial_seeds = {1, 1};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg.trial_seeds = {};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = f.config();
  cfg.manifests[Split::Test] = f.dir / "missing.tsv";
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = f.config();
  cfg.grid = {0.0, 0.5};
  CHECK_THROWS_AS(validate(cfg), ConfigError);

  auto doc = f.doc;
  doc.erase("manifests");
  CHECK_THROWS_AS(parse_run_config(doc, f.dir.path()), ConfigError);
  doc = f.doc;
  doc["task"] = "humanitarian";
  CHECK_THROWS_AS(parse_run_config(doc, f.dir.path()), ConfigError);
  write_file_atomic(f.dir / "broken.json", "{");
  CHECK_THROWS_AS(load_run_config(f.dir / "broken.json"), ConfigError);
}

TEST_CASE("cmd_ingest") {
  Fixture f;
  std::ostringstream log;
  CHECK(cmd_ingest(f.config(), {}, log) == kExitOk);
  CHECK(read_json(f.dir / "out/ingest_report.json").at("passed") == true);

  f.doc["expected_counts"]["train"] = 1000;
  CHECK(cmd_ingest(f.config(), {}, log) == kExitValidation);
  CHECK(read_json(f.dir / "out/ingest_report.json").at("passed") == false);
  CHECK(cmd_ingest(f.config(), {.allow_count_mismatch = true}, log) == kExitOk);

  f.doc["expected_counts"] = nlohmann::json::object();
  CHECK(cmd_ingest(f.config(), {.subsample = SubsampleSpec{3, 1}}, log) == kExitOk);
  auto sub = load_manifest(f.dir / "train.sub3.seed1.tsv", synthetic_task(), Split::Train);
  CHECK(sub.size() == 12);
  CHECK(sub.class_counts() == std::vector<std::size_t>{3, 3, 3, 3});
}

TEST_CASE("cmd_caption is idempotent and records per-sample failures") {
  Fixture f;
  auto cfg = f.config();
  std::ostringstream first, second;
  CHECK(cmd_caption(cfg, {}, first) == kExitOk);
  auto count = [](const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
  };
  CHECK(count(first.str(), " 0 cached") == 3);
  CHECK(cmd_caption(cfg, {}, second) == kExitOk);
  CHECK(count(second.str(), " 0 backend invocations, 0 failed") == 3);
  const auto n_train = std::to_string(f.corpus.train.size());
  CHECK(second.str().find("caption[train]: " + n_train + " samples, " + n_train + " cached") !=
        std::string::npos);

  fs::remove(f.dir / f.corpus.dev.samples()[0].image_path.filename().string());
  fs::remove(f.corpus.dev.samples()[0].image_path);
  std::ostringstream regen;
  CHECK(cmd_caption(cfg, {.splits = {Split::Dev}, .regenerate = true}, regen) == kExitPartial);
  CHECK(regen.str().find(f.corpus.dev.samples()[0].sample_id + ":") != std::string::npos);
  CHECK(regen.str().find("1 failed") != std::string::npos);
}

TEST_CASE("cmd_caption with prompt inversion") {
  Fixture f;
  f.doc["captioner"] = {{"backend", "prompt-inversion"},
                        {"base", f.doc["captioner"]},
                        {"phrase_bank", "flavors.txt"},
                        {"budget", 16}};
  auto cfg = f.config();
  std::ostringstream log;
  CHECK(cmd_caption(cfg, {.splits = {Split::Test}}, log) == kExitOk);
  CaptionCache cache(caption_cache_path(cfg));
  REQUIRE(cache.size() == f.corpus.test.size());
  for (const auto& r : cache.records()) {
    CHECK(r.backend_id == "prompt-inversion");
    CHECK(std::count(r.text.begin(), r.text.end(), ',') >= 16);
    CHECK(r.text.rfind("a photo of a ", 0) == 0);
  }
}

TEST_CASE("cmd_run with two deterministic trials") {
  Fixture f;
  f.doc["trial_seeds"] = {1, 2};
  f.doc["image_classifier"]["train_config"] = {{"init_scale", 0.0}, {"epochs", 60}};
  auto cfg = f.config();
  std::ostringstream log;
  REQUIRE(cmd_run(cfg, {}, log) == kExitOk);
  for (auto modality : {"image", "text"})
    for (auto split : {Split::Dev, Split::Test}) {
      const auto a = matrix_path(cfg, modality, split, 1), b = matrix_path(cfg, modality, split, 2);
      CHECK(read_file(a) == read_file(b));
      auto ja = read_json(sidecar_path(a)), jb = read_json(sidecar_path(b));
      CHECK(ja.at("trial_seed") == 1);
      CHECK(jb.at("trial_seed") == 2);
      jb["trial_seed"] = 1;
      CHECK(ja == jb);
    }
  auto results = read_json(cfg.output_dir / "results.json");
  CHECK(results.at("n_trials") == 2);
  CHECK(results.at("trials")[0].at("fused_selected") == results.at("trials")[1].at("fused_selected"));
  CHECK(fs::exists(cfg.output_dir / "sweeps/synthetic_shapes__pixel-histogram__token-count_rule-based_dev.csv"));
  CHECK(fs::exists(cfg.output_dir / "sweeps/synthetic_shapes__pixel-histogram__token-count_rule-based.svg"));
  auto meta = read_json(cfg.output_dir / "sweeps/synthetic_shapes__pixel-histogram__token-count_rule-based.json");
  CHECK(meta.at("test").at("weight_mode") == "oracle weight (selected on test)");
  CHECK(meta.at("averaging").get<std::string>().find("after argmax") != std::string::npos);
  CHECK(read_json(cfg.output_dir / "resolved_config.json").at("trial_seeds").size() == 2);
}

TEST_CASE("cmd_run survives a crashing trial") {
  register_classifier_backend(
      "flaky", {[](const nlohmann::json&, const std::string& tag) {
                  return std::make_unique<FlakyBackend>(tag.empty() ? "flaky" : tag);
                },
                nullptr});
  Fixture f;
  f.doc["text_classifier"] = {{"backend", "flaky"}};
  f.doc["image_classifier"]["train_config"] = {{"epochs", 30}};
  auto cfg = f.config();
  cfg.parallel_trials = 2;
  std::ostringstream log;
  CHECK(cmd_run(cfg, {}, log) == kExitPartial);
  CHECK(log.str().find("seed 33 failed") != std::string::npos);
  auto results = read_json(cfg.output_dir / "results.json");
  CHECK(results.at("n_trials") == 4);
  CHECK(results.at("trials")[2].at("status") == "failed");
  const auto report = read_file(cfg.output_dir / "report.csv");
  CHECK(report.find(",4\n") != std::string::npos);
  CHECK(report.find(",5\n") == std::string::npos);
}

TEST_CASE("cmd_run refuses count mismatches") {
  Fixture f;
  f.doc["expected_counts"]["dev"] = 3;
  std::ostringstream log;
  CHECK(cmd_run(f.config(), {}, log) == kExitValidation);
}

TEST_CASE("step-by-step commands, report and verify") {
  Fixture f;
  f.doc["trial_seeds"] = {7};
  f.doc["image_classifier"]["train_config"] = {{"epochs", 30}};
  auto cfg = f.config();
  std::ostringstream log;
  CHECK(cmd_caption(cfg, {}, log) == kExitOk);
  CHECK(cmd_train(cfg, std::nullopt, log) == kExitOk);
  CHECK(fs::exists(model_path(cfg, "image", 7)));
  CHECK(cmd_predict(cfg, Split::Dev, 7, log) == kExitOk);
  CHECK(fs::exists(matrix_path(cfg, "text", Split::Dev, 7)));
  CHECK(cmd_sweep(cfg, {}, log) == kExitOk);
  CHECK(cmd_sweep(cfg, {.sweep_split = Split::Test}, log) == kExitPartial);
  CHECK(cmd_predict(cfg, Split::Test, 7, log) == kExitOk);
  std::ostringstream oracle_log;
  CHECK(cmd_sweep(cfg, {.sweep_split = Split::Test}, oracle_log) == kExitOk);
  CHECK(oracle_log.str().find("[oracle weight]") != std::string::npos);
  CHECK(cmd_sweep(cfg,
                  {.sweep_split = Split::Dev,
                   .image_matrix = matrix_path(cfg, "image", Split::Dev, 7),
                   .text_matrix = matrix_path(cfg, "text", Split::Dev, 7)},
                  log) == kExitOk);
  CHECK_THROWS_AS(cmd_sweep(cfg, {.image_matrix = matrix_path(cfg, "image", Split::Dev, 7)}, log),
                  ConfigError);

  REQUIRE(cmd_run(cfg, {}, log) == kExitOk);
  const auto report = read_file(cfg.output_dir / "report.md");
  fs::remove(cfg.output_dir / "report.md");
  std::ostringstream rlog;
  CHECK(cmd_report(cfg.output_dir, ReportFormats::Markdown, rlog) == kExitOk);
  CHECK(read_file(cfg.output_dir / "report.md") == report);

  std::ostringstream vlog;
  CHECK(cmd_verify(cfg.output_dir, vlog) == kExitOk);
  write_file_atomic(cfg.output_dir / "report.csv", "tampered\n");
  CHECK(cmd_verify(cfg.output_dir, vlog) == kExitValidation);
  CHECK(vlog.str().find("checksum mismatch report.csv") != std::string::npos);
}
