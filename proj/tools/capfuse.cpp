#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "capfuse/errors.hpp"
#include "capfuse/pipeline.hpp"
#include "capfuse/synthetic.hpp"

namespace fs = std::filesystem;
using namespace capfuse;

namespace {

struct CaptionerOverrides {
  std::string backend;
  std::optional<std::size_t> budget;
  std::string phrase_bank;
};

// Command-line flags win over the config file. Switching to prompt-inversion wraps
// whatever captioner the config names as its base.
void apply(RunConfig& cfg, const CaptionerOverrides& o) {
  auto& c = cfg.captioner;
  if (!o.backend.empty() && o.backend != c.value("backend", std::string{})) {
    if (o.backend == "prompt-inversion") {
      c = nlohmann::json{{"backend", "prompt-inversion"}, {"base", c}};
    } else {
      c = nlohmann::json{{"backend", o.backend}};
    }
  }
  if (!o.phrase_bank.empty()) c["phrase_bank"] = fs::absolute(o.phrase_bank).string();
  if (o.budget) c["budget"] = *o.budget;
}

bool is_validation_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const MalformedRow*>(&e) ||
         dynamic_cast<const UnknownClassName*>(&e) || dynamic_cast<const DuplicateSampleId*>(&e) ||
         dynamic_cast<const InvalidTask*>(&e) || dynamic_cast<const MixedTasks*>(&e) ||
         dynamic_cast<const InvalidGrid*>(&e) || dynamic_cast<const nlohmann::json::exception*>(&e);
}

fs::path output_dir_from(const std::string& dir, const std::string& config) {
  if (!dir.empty()) return dir;
  if (config.empty()) throw ConfigError("pass --dir or --config");
  return load_run_config(config).output_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capfuse: caption-based text/image score fusion"};
  app.require_subcommand(1);

  std::string config_path;
  CaptionerOverrides overrides;
  std::size_t budget = 0;
  std::string split_name;
  std::optional<std::int64_t> seed;
  bool regenerate = false, allow_mismatch = false;
  std::size_t subsample_n = 0;
  std::uint64_t subsample_seed = 0;
  std::string sweep_split = "dev", image_matrix, text_matrix;
  std::size_t parallel_trials = 0, jobs = 0;
  std::string format = "both", dir;
  std::string synth_dir;
  SyntheticOptions synth;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration (JSON)")->required();
  };

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic demo corpus and config");
  synth_cmd->add_option("dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--n-images", synth.n_images, "number of images");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--ambiguous-rate", synth.ambiguous_color_rate,
                        "fraction of off-palette fills");

  auto* ingest = app.add_subcommand("ingest", "load manifests and check split counts");
  add_config(ingest);
  ingest->add_flag("--allow-count-mismatch", allow_mismatch);
  auto* sub_opt = ingest->add_option("--subsample", subsample_n, "keep N samples per class");
  ingest->add_option("--seed", subsample_seed, "subsample seed")->needs(sub_opt);

  auto* caption = app.add_subcommand("caption", "caption images into the cache");
  add_config(caption);
  caption->add_option("--split", split_name, "train, dev or test (default: all)");
  caption->add_flag("--regenerate", regenerate, "ignore cached captions");
  caption->add_option("--backend", overrides.backend, "captioner backend");
  caption->add_option("--budget", budget, "flavor phrase budget (prompt-inversion)");
  caption->add_option("--phrase-bank", overrides.phrase_bank, "phrase bank file");

  auto* train_cmd = app.add_subcommand("train", "train both classifiers");
  add_config(train_cmd);
  train_cmd->add_option("--seed", seed, "single trial seed (default: all configured)");

  auto* predict = app.add_subcommand("predict", "write probability matrices");
  add_config(predict);
  predict->add_option("--split", split_name, "dev or test")->required();
  predict->add_option("--seed", seed, "single trial seed (default: all configured)");

  auto* sweep_cmd = app.add_subcommand("sweep", "fusion weight sweep");
  add_config(sweep_cmd);
  sweep_cmd->add_option("--sweep-split", sweep_split, "dev, or test for the oracle weight")
      ->check(CLI::IsMember({"dev", "test"}));
  sweep_cmd->add_option("--image-matrix", image_matrix, "image probability CSV");
  sweep_cmd->add_option("--text-matrix", text_matrix, "text probability CSV");

  auto* run = app.add_subcommand("run", "ingest, caption, train, predict, sweep and report");
  add_config(run);
  run->add_flag("--allow-count-mismatch", allow_mismatch);
  run->add_option("--parallel-trials", parallel_trials, "trials to run concurrently");
  run->add_option("--jobs", jobs, "worker threads per step");

  auto* report = app.add_subcommand("report", "re-render reports from results.json");
  report->add_option("-c,--config", config_path, "run configuration (JSON)");
  report->add_option("--dir", dir, "run output directory");
  report->add_option("--format", format, "csv, md or both")
      ->check(CLI::IsMember({"csv", "md", "both"}));

  auto* verify = app.add_subcommand("verify", "check output checksums");
  verify->add_option("-c,--config", config_path, "run configuration (JSON)");
  verify->add_option("--dir", dir, "run output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      auto corpus = generate_synthetic_corpus(synth_dir, synth);
      std::cout << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/"
                << corpus.test.size() << " train/dev/test samples under " << corpus.root.string()
                << "\nrun: capfuse run --config " << (corpus.root / "config.json").string()
                << "\n";
      return kExitOk;
    }
    if (report->parsed()) {
      const auto fmt = format == "csv"  ? ReportFormats::Csv
                       : format == "md" ? ReportFormats::Markdown
                                        : ReportFormats::Both;
      return cmd_report(output_dir_from(dir, config_path), fmt, std::cout);
    }
    if (verify->parsed()) return cmd_verify(output_dir_from(dir, config_path), std::cerr);

    auto cfg = load_run_config(config_path);
    if (budget > 0) overrides.budget = budget;
    apply(cfg, overrides);
    if (jobs > 0) cfg.jobs = jobs;
    if (parallel_trials > 0) cfg.parallel_trials = parallel_trials;

    if (ingest->parsed()) {
      IngestOptions o{allow_mismatch, {}};
      if (subsample_n > 0) o.subsample = SubsampleSpec{subsample_n, subsample_seed};
      return cmd_ingest(cfg, o, std::cerr);
    }
    if (caption->parsed()) {
      CaptionOptions o;
      if (!split_name.empty()) o.splits = {parse_split(split_name)};
      o.regenerate = regenerate;
      return cmd_caption(cfg, o, std::cerr);
    }
    if (train_cmd->parsed()) return cmd_train(cfg, seed, std::cerr);
    if (predict->parsed()) return cmd_predict(cfg, parse_split(split_name), seed, std::cerr);
    if (sweep_cmd->parsed()) {
      SweepOptions o;
      o.sweep_split = parse_split(sweep_split);
      if (!image_matrix.empty()) o.image_matrix = fs::path(image_matrix);
      if (!text_matrix.empty()) o.text_matrix = fs::path(text_matrix);
      return cmd_sweep(cfg, o, std::cerr);
    }
    if (run->parsed()) return cmd_run(cfg, RunOptions{allow_mismatch}, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "capfuse: " << e.what() << "\n";
    return is_validation_error(e) ? kExitValidation : kExitPartial;
  }
  return kExitOk;
}
