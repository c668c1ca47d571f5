// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "capfuse/captioning.hpp"
#include "capfuse/classification.hpp"
#include "capfuse/dataset.hpp"
#include "capfuse/evaluation.hpp"
#include "capfuse/fusion.hpp"
#include "capfuse/pipeline.hpp"
#include "capfuse/synthetic.hpp"
#include "capfuse/util.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace capfuse;
using testing_support::random_posteriors;
using testing_support::random_simplex;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

int failures = 0;

void gate(const std::string& id, const std::string& title, double budget_s,
          const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    out.passed = false;
    out.detail += " (over the " + format_fixed(budget_s, 0) + " s budget)";
  }
  if (!out.passed) ++failures;
  std::printf("[%s] %s %s: %s (%.2f s)\n", out.passed ? "PASS" : "FAIL", id.c_str(),
              title.c_str(), out.detail.c_str(), secs);
  std::fflush(stdout);
}

ProbMatrix matrix(const Eigen::MatrixXd& values) {
  std::vector<std::string> names, ids;
  for (Eigen::Index c = 0; c < values.cols(); ++c) names.push_back("c" + std::to_string(c));
  for (Eigen::Index r = 0; r < values.rows(); ++r) ids.push_back("s" + std::to_string(r));
  return {TaskDefinition("acc", names), "test", ids, values, "m", 0};
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r].push_back(m(r, c));
  return out;
}

// Posteriors with frequent exact ties so the lowest-index rule is exercised.
Eigen::MatrixXd tie_heavy(int n, int C, std::mt19937_64& rng) {
  Eigen::MatrixXd m = random_posteriors(n, C, rng);
  for (int r = 0; r < n; r += 3) m.row(r).setConstant(1.0 / C);
  return m;
}

Outcome ac1() {
  std::mt19937_64 rng(101);
  const int classes[] = {2, 3, 7};
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int C = classes[t % 3], n = 5 + static_cast<int>(rng() % 200);
    Eigen::MatrixXd img = tie_heavy(n, C, rng), txt = random_posteriors(n, C, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % C);
    auto r = sweep(matrix(img), matrix(txt), labels, weight_grid());
    bad += r.accuracy_per_w.front() != accuracy(argmax_rows(img), labels);
    bad += r.accuracy_per_w.back() != accuracy(argmax_rows(txt), labels);
  }
  return {bad == 0, "100 random cases, C in {2,3,7}, " + std::to_string(bad) + " endpoint mismatches"};
}

Outcome ac2() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  int negative = 0;
  for (int t = 0; t < 10000; ++t) {
    const int C = 2 + static_cast<int>(rng() % 9);
    Eigen::VectorXd p = random_simplex(C, rng), q = random_simplex(C, rng);
    const double w = t % 100 == 0 ? double(t % 200 == 0) : u(rng);
    Eigen::VectorXd f = fuse(p, q, w);
    negative += f.minCoeff() < 0;
    worst = std::max(worst, std::abs(f.sum() - 1.0));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "10000 triples, max |sum - 1| = %.3g, %d negative", worst,
                negative);
  return {negative == 0 && worst <= 1e-12, buf};
}

Outcome ac3() {
  std::mt19937_64 rng(303);
  int bad = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng() % 20), C = 2 + static_cast<int>(rng() % 2);
    Eigen::MatrixXd img = tie_heavy(n, C, rng), txt = random_posteriors(n, C, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % C);
    auto grid = weight_grid();
    auto r = sweep(matrix(img), matrix(txt), labels, grid);
    bad += r.accuracy_per_w != oracle::sweep(rows_of(img), rows_of(txt), labels, grid);
  }
  return {bad == 0, "50 toy splits, " + std::to_string(bad) + " differ from brute force"};
}

Outcome ac4() {
  Outcome out;
  // Two-sample toy: each classifier is right on exactly one sample.
  Eigen::MatrixXd img(2, 2), txt(2, 2);
  img << 0.9, 0.1, 0.4, 0.6;
  txt << 0.4, 0.6, 0.9, 0.1;
  auto toy = sweep(matrix(img), matrix(txt), std::vector<int>{0, 0}, weight_grid());
  const double w_star = select_weight(toy);
  const bool toy_ok = toy.accuracy_per_w.front() == 0.5 && toy.accuracy_per_w.back() == 0.5 &&
                      w_star > 0 && w_star < 1 && accuracy_at(toy, w_star) == 1.0;

  TempDir dir("capfuse-ac4");
  generate_synthetic_corpus(dir.path(), {.n_images = 200});
  auto cfg = load_run_config(dir / "config.json");
  std::ostringstream log;
  const int code = cmd_run(cfg, {}, log);
  auto results = nlohmann::json::parse(read_file(cfg.output_dir / "results.json"));
  std::vector<double> image, text, fused;
  for (const auto& t : results.at("trials")) {
    image.push_back(t.at("image_only"));
    text.push_back(t.at("text_only"));
    fused.push_back(t.at("fused_selected"));
  }
  const double mi = mean(image), mt = mean(text), mf = mean(fused);
  const bool e2e_ok = code == kExitOk && fused.size() == 5 && mf >= std::max(mi, mt) - 0.01;
  out.passed = toy_ok && e2e_ok;
  out.detail = "toy w*=" + format_significant(w_star, 3) + " acc " +
               format_percent(accuracy_at(toy, w_star)) + "% vs endpoints 50.00%; synthetic " +
               "200 images x 5 seeds: image " + format_percent(mi) + "%, text " +
               format_percent(mt) + "%, fused@dev-w " + format_percent(mf) + "%";
  return out;
}

Outcome ac5() {
  std::mt19937_64 rng(505);
  const std::vector<std::string> vocab{"people", "rubble", "Fire", "smoke", "flood",  "water",
                                       "road",   "crack",  "tree", "sky",   "house",  "car",
                                       "wind",   "storm",  "mud",  "hill",  "caf\xC3\xA9"};
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const int C = 2 + static_cast<int>(rng() % 6);
    std::vector<std::string> names;
    for (int c = 0; c < C; ++c) names.push_back("k" + std::to_string(c));
    TaskDefinition task("nb", names);
    const int n = C + static_cast<int>(rng() % (51 - C));
    std::vector<std::string> docs;
    std::vector<int> labels;
    std::vector<LabeledInput> train_set;
    for (int i = 0; i < n; ++i) {
      std::string doc;
      for (int k = 0, len = 1 + static_cast<int>(rng() % 8); k < len; ++k)
        doc += vocab[rng() % vocab.size()] + (rng() % 3 ? " " : ". ");
      docs.push_back(doc);
      labels.push_back(i < C ? i : static_cast<int>(rng() % C));
      train_set.push_back({"d" + std::to_string(i), doc, labels.back()});
    }
    auto model = train(TokenCountBackend{}, task, train_set, {}, 0);
    std::vector<std::string> queries = docs;
    queries.push_back("nothing known here");
    queries.push_back(vocab[0] + " " + vocab[1] + " " + vocab[1] + " mystery");
    for (const auto& q : queries) {
      auto got = predict_proba(model, {Modality::Text, q});
      auto want = oracle::naive_bayes(docs, labels, C, q);
      for (int c = 0; c < C; ++c) worst = std::max(worst, std::abs(got(c) - want[c]));
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "20 corpora (<= 50 texts), max |diff| = %.3g", worst);
  return {worst <= 1e-12, buf};
}

Outcome ac6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 12, budget = 1 + rng() % 5;
    std::vector<std::string> phrases;
    std::vector<double> scores;
    std::map<std::string, double> table;
    for (std::size_t i = 0; i < n; ++i) {
      phrases.push_back("flavor " + std::to_string(i));
      scores.push_back(u(rng));
      table[phrases.back()] = scores.back();
    }
    auto got = select_flavors({"img"}, "a photo", PhraseBank(phrases), TableScorer(table), budget);
    std::set<std::string> got_set(got.begin(), got.end()), want_set;
    for (auto i : oracle::best_subset(scores, std::min(budget, n))) want_set.insert(phrases[i]);
    bad += got_set != want_set || got.size() != std::min(budget, n);
  }
  return {bad == 0, "100 banks (<= 12 phrases, budget <= 5), " + std::to_string(bad) +
                        " differ from exhaustive search"};
}

Outcome ac7() {
  TempDir dir("capfuse-ac7");
  generate_synthetic_corpus(dir.path(), {.n_images = 120, .seed = 77});
  auto doc = nlohmann::json::parse(read_file(dir / "config.json"));
  doc.erase("trial_seeds");  // protocol default
  std::string reports[2], results[2];
  int codes[2];
  for (int run = 0; run < 2; ++run) {
    doc["output_dir"] = "out" + std::to_string(run);
    doc["cache_dir"] = "cache" + std::to_string(run);
    auto cfg = parse_run_config(doc, dir.path());
    validate(cfg);
    std::ostringstream log;
    codes[run] = cmd_run(cfg, {}, log);
    reports[run] = read_file(cfg.output_dir / "report.csv") + read_file(cfg.output_dir / "report.md");
    results[run] = read_file(cfg.output_dir / "results.json");
  }
  const auto csv = read_file(dir / "out0/report.csv");
  const std::regex row(R"(^[^,]+,[^,]+,\d{1,3}\.\d{2},\d{1,3}\.\d{2},5$)");
  auto lines = split(csv, '\n');
  std::size_t ok_rows = 0, data_rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    ++data_rows;
    ok_rows += std::regex_match(std::string(lines[i]), row);
  }
  const bool header = lines[0] == "task,system,accuracy_mean_pct,accuracy_std_pct,n_trials";
  const bool same = reports[0] == reports[1] && results[0] == results[1];
  const bool passed = codes[0] == 0 && codes[1] == 0 && header && data_rows == 4 &&
                      ok_rows == data_rows && same;
  return {passed, std::to_string(ok_rows) + "/" + std::to_string(data_rows) +
                      " rows with n_trials=5 and two-decimal percentages; reports " +
                      (same ? "byte-identical" : "DIFFER") + " across two runs"};
}

Outcome ac8() {
  TempDir dir("capfuse-ac8");
  std::string detail;
  bool passed = true;
  for (const auto& task : {disaster_types_task(), damage_severity_task()}) {
    const auto expected = crisisnlp_split_counts(task.task_id());
    std::vector<SplitManifest> manifests;
    for (const auto& [split, n] : expected) {
      std::string tsv;
      for (std::size_t i = 0; i < n; ++i)
        tsv += std::string(to_string(split)) + "_" + std::to_string(i) + "\timages/" +
               std::to_string(i) + ".jpg\t" + task.class_name(static_cast<int>(i % task.num_classes())) +
               "\n";
      const auto path = dir / (task.task_id() + "_" + std::string(to_string(split)) + ".tsv");
      write_file_atomic(path, tsv);
      manifests.push_back(load_manifest(path, task, split));
    }
    const auto report = validate_split_counts(manifests, expected);
    // Negative control: one row short must fail with delta -1.
    auto short_expected = expected;
    short_expected[Split::Dev] += 1;
    const auto control = validate_split_counts(manifests, short_expected);
    const bool ok = report.passed && !control.passed;
    passed = passed && ok;
    detail += task.task_id() + " " + std::to_string(expected.at(Split::Train)) + "/" +
              std::to_string(expected.at(Split::Dev)) + "/" +
              std::to_string(expected.at(Split::Test)) + (ok ? " ok" : " FAILED") + "; ";
  }
  detail.resize(detail.size() - 2);
  return {passed, detail};
}

}  // namespace

int main() {
  gate("AC1", "fusion endpoint identity", 5, ac1);
  gate("AC2", "simplex preservation", 5, ac2);
  gate("AC3", "brute-force sweep equivalence", 0, ac3);
  gate("AC4", "complementary-error synergy", 60, ac4);
  gate("AC5", "token-count oracle equivalence", 0, ac5);
  gate("AC6", "greedy flavors vs exhaustive search", 0, ac6);
  gate("AC7", "protocol fidelity of cmd_run", 0, ac7);
  gate("AC8", "split-count validation at published sizes", 0, ac8);
  std::printf("%d/8 acceptance criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
