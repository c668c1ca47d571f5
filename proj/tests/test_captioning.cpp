#include "doctest.h"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>
#include <set>

#include "capfuse/captioning.hpp"
#include "capfuse/errors.hpp"
#include "capfuse/image.hpp"
#include "capfuse/util.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace capfuse;
using testing_support::TempDir;

namespace {

class ThrowingCaptioner final : public CaptionerBackend {
public:
  const std::string& backend_id() const override { return id_; }
  const nlohmann::json& params() const override { return params_; }
  bool deterministic() const override { return true; }
  std::string describe(const ImageRef&) const override { throw std::runtime_error("gpu gone"); }

private:
  std::string id_ = "throwing";
  nlohmann::json params_ = nlohmann::json::object();
};

void write_blob(const std::filesystem::path& path, bool square, std::uint8_t r, std::uint8_t b) {
  RgbImage img(32, 32);
  std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{128});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double dx = x + 0.5 - 16, dy = y + 0.5 - 16;
      const bool in = square ? (std::abs(dx) < 9 && std::abs(dy) < 9) : dx * dx + dy * dy < 81;
      if (!in) continue;
      auto* px = img.at(x, y);
      px[0] = r, px[1] = 40, px[2] = b;
    }
  write_ppm(path, img);
}

}  // namespace

TEST_CASE("caption_image with a fixed stub") {
  TempDir dir;
  write_file_atomic(dir / "x.ppm", "not even an image");
  FixedTextCaptioner stub("a dog on a beach");
  auto rec = caption_image(stub, dir / "x.ppm", "s1");
  CHECK(rec.text == "a dog on a beach");
  CHECK(rec.sample_id == "s1");
  CHECK(rec.backend_id == "fixed");
  CHECK(rec.params_hash == stub.params_hash());
  CHECK(rec.params_hash.size() == 64);
  CHECK(rec.deterministic);
  CHECK_FALSE(rec.created_at.empty());
}

TEST_CASE("caption_image errors") {
  TempDir dir;
  FixedTextCaptioner stub("x");
  CHECK_THROWS_AS(caption_image(stub, dir / "missing.ppm"), UnreadableImage);
  CHECK_THROWS_AS(caption_image(stub, dir.path()), UnreadableImage);
  write_file_atomic(dir / "x.ppm", "junk");
  try {
    caption_image(ThrowingCaptioner{}, dir / "x.ppm");
    FAIL("expected BackendFailure");
  } catch (const BackendFailure& e) {
    CHECK(e.backend_id() == "throwing");
  }
  CHECK_THROWS_AS(caption_image(FixedTextCaptioner("   "), dir / "x.ppm"), BackendFailure);
  CHECK_THROWS_AS(caption_image(RuleBasedCaptioner{}, dir / "x.ppm"), UnreadableImage);
}

TEST_CASE("params_hash tracks parameters") {
  RuleBasedCaptioner a, b(nlohmann::json{{"fill_threshold", 0.87}});
  RuleBasedCaptioner c(nlohmann::json{{"fill_threshold", 0.9}});
  CHECK(a.params_hash() == b.params_hash());
  CHECK(a.params_hash() != c.params_hash());
  CHECK(FixedTextCaptioner("x").params_hash() != FixedTextCaptioner("y").params_hash());
}

TEST_CASE("rule-based captioner describes outline, not color") {
  TempDir dir;
  write_blob(dir / "round_red.ppm", false, 220, 40);
  write_blob(dir / "round_blue.ppm", false, 40, 220);
  write_blob(dir / "square_red.ppm", true, 220, 40);
  RuleBasedCaptioner cap;
  auto has_any = [](const std::string& s, std::initializer_list<const char*> words) {
    return std::any_of(words.begin(), words.end(),
                       [&](const char* w) { return s.find(w) != std::string::npos; });
  };
  const auto round = cap.describe({dir / "round_red.ppm"});
  const auto square = cap.describe({dir / "square_red.ppm"});
  CHECK(has_any(round, {"round", "circular", "curved"}));
  CHECK(has_any(square, {"boxy", "square", "angular"}));
  CHECK_FALSE(has_any(round, {"red", "blue"}));
  CHECK(cap.describe({dir / "round_red.ppm"}) == round);
  CHECK(cap.deterministic());
  CHECK_FALSE(RuleBasedCaptioner(nlohmann::json{{"sampling", true}}).deterministic());
}

TEST_CASE("PhraseBank") {
  PhraseBank bank({"  a  b ", "c"});
  CHECK(bank.phrases() == std::vector<std::string>{"a b", "c"});
  CHECK_THROWS(PhraseBank({"a b", "a  b"}));
  CHECK_THROWS(PhraseBank({"x", " "}));
  CHECK(bank.digest() == PhraseBank({"a b", "c"}).digest());
  CHECK(bank.digest() != PhraseBank({"c", "a b"}).digest());

  TempDir dir;
  write_file_atomic(dir / "bank.txt", "red\n\nblue sky\nred\n  \n");
  auto loaded = load_phrase_bank(dir / "bank.txt");
  CHECK(loaded.phrases() == std::vector<std::string>{"red", "blue sky"});
}

TEST_CASE("select_flavors: spec examples") {
  PhraseBank bank({"p1", "p2", "p3"});
  TableScorer scorer({{"p1", 0.9}, {"p2", 0.1}, {"p3", 0.5}});
  ImageRef img{"unused"};
  CHECK(select_flavors(img, "base", bank, scorer, 2) == std::vector<std::string>{"p1", "p3"});
  CHECK(select_flavors(img, "base", bank, scorer, 3) ==
        std::vector<std::string>{"p1", "p3", "p2"});
  CHECK(select_flavors(img, "base", bank, scorer, 10) ==
        std::vector<std::string>{"p1", "p3", "p2"});
  CHECK_THROWS_AS(select_flavors(img, "base", PhraseBank({}), scorer, 2), EmptyPhraseBank);
  CHECK_THROWS(select_flavors(img, "base", bank, scorer, 0));
}

TEST_CASE("select_flavors: ties keep bank order") {
  PhraseBank bank({"a", "b", "c", "d"});
  TableScorer scorer({{"a", 0.2}, {"b", 0.5}, {"c", 0.5}, {"d", 0.5}});
  CHECK(select_flavors({"x"}, "base", bank, scorer, 2) == std::vector<std::string>{"b", "c"});
}

TEST_CASE("select_flavors: non-finite scores are rejected") {
  struct NanScorer final : SimilarityScorer {
    std::string scorer_id() const override { return "nan"; }
    double score(const ImageRef&, std::string_view t) const override {
      return t == "b" ? std::nan("") : 1.0;
    }
  };
  CHECK_THROWS(select_flavors({"x"}, "base", PhraseBank({"a", "b"}), NanScorer{}, 1));
  CHECK_THROWS(TableScorer({{"a", std::nan("")}}));
}

TEST_CASE("select_flavors: subset, size and greedy optimality") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 12, k = 1 + rng() % 5;
    std::vector<std::string> phrases;
    std::map<std::string, double> table;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      phrases.push_back("phrase " + std::to_string(i));
      scores.push_back(u(rng));
      table[phrases.back()] = scores.back();
    }
    PhraseBank bank(phrases);
    TableScorer scorer(table);
    auto got = select_flavors({"x"}, "base", bank, scorer, k);
    CHECK(got.size() == std::min(k, n));
    CHECK(std::set<std::string>(got.begin(), got.end()).size() == got.size());
    double sum = 0;
    for (const auto& p : got) sum += table.at(p);
    CHECK(sum == doctest::Approx(oracle::best_subset_sum(scores, std::min(k, n))));

    // Distinct scores: the bank order does not matter.
    auto shuffled = phrases;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(select_flavors({"x"}, "base", PhraseBank(shuffled), scorer, k) == got);
  }
}

TEST_CASE("compose_prompt") {
  CHECK(compose_prompt("a group of people standing on top of a building",
                       {"collapsed building", "earthquake"}) ==
        "a group of people standing on top of a building, collapsed building, earthquake");
  CHECK(compose_prompt("base", {}) == "base");
  CHECK(compose_prompt("base", {"a, b"}) == "base, a, b");
  CHECK_THROWS(compose_prompt("", {"x"}));

  std::vector<std::string> xs{"one", "two"}, ys{"three"};
  auto all = xs;
  all.insert(all.end(), ys.begin(), ys.end());
  CHECK(compose_prompt("b", all) == compose_prompt(compose_prompt("b", xs), ys));
}

TEST_CASE("ColorScorer ranks matching color words higher") {
  TempDir dir;
  write_blob(dir / "red.ppm", false, 220, 40);
  ColorScorer scorer;
  const ImageRef img{dir / "red.ppm"};
  CHECK(scorer.score(img, "crimson red glow") > scorer.score(img, "blue sky"));
  CHECK(scorer.score(img, "octane render") == 0.0);
  auto all = scorer.score_all(img, {"red", "blue", "film still"});
  CHECK(all[0] == scorer.score(img, "red"));
  CHECK(all[0] > all[1]);
}

TEST_CASE("prompt-inversion captioner composes base and flavors") {
  TempDir dir;
  write_blob(dir / "img.ppm", true, 220, 40);
  auto base = std::make_shared<FixedTextCaptioner>("a photo");
  PhraseBank bank({"p1", "p2", "p3"});
  auto scorer = std::make_shared<TableScorer>(std::map<std::string, double>{
      {"p1", 0.9}, {"p2", 0.1}, {"p3", 0.5}});
  PromptInversionCaptioner pi(base, bank, scorer, 2);
  CHECK(pi.describe({dir / "img.ppm"}) == "a photo, p1, p3");
  CHECK(pi.backend_id() == "prompt-inversion");
  PromptInversionCaptioner pi3(base, bank, scorer, 3);
  CHECK(pi.params_hash() != pi3.params_hash());
}

TEST_CASE("make_captioner") {
  TempDir dir;
  write_file_atomic(dir / "bank.txt", "red\nblue\nfilm still\n");
  write_file_atomic(dir / "captions.tsv", "img.ppm\ta red thing\n");
  write_blob(dir / "img.ppm", false, 220, 40);

  auto fixed = make_captioner({{"backend", "fixed"}, {"params", {{"text", "hello"}}}}, dir.path());
  CHECK(fixed->describe({dir / "img.ppm"}) == "hello");

  auto pre = make_captioner({{"backend", "precomputed"}, {"table", "captions.tsv"}}, dir.path());
  CHECK(pre->describe({dir / "img.ppm"}) == "a red thing");
  CHECK_THROWS(pre->describe({dir / "other.ppm"}));

  auto pi = make_captioner({{"backend", "prompt-inversion"},
                            {"base", {{"backend", "rule-based"}}},
                            {"phrase_bank", "bank.txt"},
                            {"budget", 1}},
                           dir.path());
  const auto text = pi->describe({dir / "img.ppm"});
  CHECK(text.size() > 5);
  CHECK(text.substr(text.size() - 5) == ", red");

  CHECK_THROWS_AS(make_captioner({{"backend", "nope"}}, dir.path()), ConfigError);
  CHECK_THROWS_AS(make_captioner({{"backend", "precomputed"}}, dir.path()), ConfigError);
  CHECK_THROWS_AS(make_captioner({{"backend", "prompt-inversion"}, {"base", {{"backend", "rule-based"}}}},
                                 dir.path()),
                  ConfigError);
}
