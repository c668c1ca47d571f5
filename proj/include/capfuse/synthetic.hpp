#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "capfuse/dataset.hpp"

namespace capfuse {

/// Desk-scale stand-in for a labeled image corpus. Each class is a (color family,
/// outline) pair: warm/cool crossed with round/angular. Some images get an off-palette
/// purple fill that hides the color family, and outlines near the round/angular
/// boundary are ambiguous, so pixel statistics and shape descriptions carry
/// complementary evidence.
struct SyntheticOptions {
  std::size_t n_images = 200;
  std::uint64_t seed = 2024;
  int image_size = 32;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;
  double ambiguous_color_rate = 0.3;
};

struct SyntheticCorpus {
  TaskDefinition task;
  SplitManifest train;
  SplitManifest dev;
  SplitManifest test;
  std::filesystem::path root;
};

TaskDefinition synthetic_task();

/// Writes `images/*.ppm`, `{train,dev,test}.tsv`, `flavors.txt` and a ready-to-run
/// `config.json` under `dir`. Returned manifests carry absolute image paths; the
/// files on disk use paths relative to `dir`.
SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& dir,
                                          const SyntheticOptions& options = {});

}  // namespace capfuse
