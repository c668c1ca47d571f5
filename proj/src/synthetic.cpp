#include "capfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "capfuse/errors.hpp"
#include "capfuse/image.hpp"
#include "capfuse/util.hpp"
#include "json.hpp"

namespace capfuse {

TaskDefinition synthetic_task() {
  return {"synthetic_shapes", {"warm-round", "warm-angular", "cool-round", "cool-angular"}};
}

namespace {

constexpr const char* kFlavors[] = {
    "red",           "crimson glow",     "scarlet tones",     "orange light",
    "blue",          "navy palette",     "azure sky",         "purple haze",
    "violet hue",    "green field",      "gray backdrop",     "film still",
    "unreal engine", "photo-realistic",  "octane render",     "trending on artstation",
    "minimalism",    "studio lighting",  "flat illustration", "digital art",
};

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

RgbImage draw_sample(int size, bool warm, bool angular, double ambiguous_rate,
                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto jitter = [&](double amp) { return (u(rng) * 2.0 - 1.0) * amp; };

  RgbImage img(size, size);
  for (auto& px : img.pixels) px = clamp_byte(128 + jitter(12));

  double r, g, b;
  if (u(rng) < ambiguous_rate) {
    r = 150 + jitter(30), g = 50 + jitter(20), b = 150 + jitter(30);
  } else if (warm) {
    r = 210 + jitter(25), g = 40 + jitter(25), b = 40 + jitter(25);
  } else {
    r = 40 + jitter(25), g = 70 + jitter(25), b = 220 + jitter(25);
  }

  // Superellipse |x|^p + |y|^p <= 1: p = 2 is a disc, large p approaches a square.
  double p;
  if (angular) {
    p = u(rng) < 0.5 ? 64.0 : 2.6 + u(rng) * 3.4;
  } else {
    p = 2.0 + u(rng) * 1.0;
  }
  const double radius = size * (0.2 + u(rng) * 0.15);
  const double margin = radius + 1.0;
  const double cx = margin + u(rng) * (size - 2 * margin);
  const double cy = margin + u(rng) * (size - 2 * margin);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = std::abs((x + 0.5 - cx) / radius);
      const double dy = std::abs((y + 0.5 - cy) / radius);
      if (std::pow(dx, p) + std::pow(dy, p) > 1.0) continue;
      auto* px = img.at(x, y);
      px[0] = clamp_byte(r + jitter(8));
      px[1] = clamp_byte(g + jitter(8));
      px[2] = clamp_byte(b + jitter(8));
    }
  }
  return img;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& dir,
                                          const SyntheticOptions& options) {
  if (options.n_images < 12) throw Error("synthetic corpus needs at least 12 images");
  if (options.image_size < 8) throw Error("synthetic images must be at least 8 pixels wide");
  const auto task = synthetic_task();
  const auto root = std::filesystem::absolute(dir);
  std::filesystem::create_directories(root / "images");

  std::mt19937_64 rng(options.seed);
  std::vector<SampleRecord> all;
  all.reserve(options.n_images);
  for (std::size_t i = 0; i < options.n_images; ++i) {
    const int label = static_cast<int>(i % 4);
    const bool warm = label < 2;
    const bool angular = label % 2 == 1;
    auto img = draw_sample(options.image_size, warm, angular, options.ambiguous_color_rate, rng);
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu", i);
    const auto rel = std::filesystem::path("images") / (std::string(name) + ".ppm");
    write_ppm(root / rel, img);
    all.push_back({name, rel, label});
  }

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::round(options.train_fraction * all.size()));
  const auto n_dev = static_cast<std::size_t>(std::round(options.dev_fraction * all.size()));

  std::vector<SampleRecord> parts[3];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int part = k < n_train ? 0 : (k < n_train + n_dev ? 1 : 2);
    parts[part].push_back(all[order[k]]);
  }
  // Keep each split in generation order so manifests read naturally.
  for (auto& part : parts) {
    std::sort(part.begin(), part.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
  }

  SplitManifest train(task, Split::Train, parts[0]);
  SplitManifest dev(task, Split::Dev, parts[1]);
  SplitManifest test(task, Split::Test, parts[2]);
  write_manifest(root / "train.tsv", train);
  write_manifest(root / "dev.tsv", dev);
  write_manifest(root / "test.tsv", test);

  std::string flavors;
  for (const auto* f : kFlavors) {
    flavors += f;
    flavors += '\n';
  }
  write_file_atomic(root / "flavors.txt", flavors);

  nlohmann::ordered_json config;
  config["task"] = {{"task_id", task.task_id()}, {"class_names", task.class_names()}};
  config["manifests"] = {{"train", "train.tsv"}, {"dev", "dev.tsv"}, {"test", "test.tsv"}};
  config["expected_counts"] = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}};
  config["captioner"] = {{"backend", "rule-based"}, {"params", nlohmann::json::object()}};
  config["image_classifier"] = {{"backend", "pixel-histogram"},
                                {"train_config", nlohmann::json::object()}};
  config["text_classifier"] = {{"backend", "token-count"},
                               {"train_config", nlohmann::json::object()}};
  config["fusion"] = {{"intervals", 20}};
  config["trial_seeds"] = {11, 22, 33, 44, 55};
  config["output_dir"] = "out";
  config["cache_dir"] = "cache";
  config["render_plots"] = true;
  write_file_atomic(root / "config.json", config.dump(2) + "\n");

  return {task, with_image_root(train, root), with_image_root(dev, root),
          with_image_root(test, root), root};
}

}  // namespace capfuse
