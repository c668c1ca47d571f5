#include "capfuse/captioning.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "capfuse/errors.hpp"
#include "capfuse/image.hpp"
#include "capfuse/util.hpp"

namespace capfuse {

std::string CaptionerBackend::params_hash() const {
  nlohmann::json canon = {{"backend_id", backend_id()}, {"params", params()}};
  return sha256_hex(canon.dump());
}

CaptionRecord caption_image(const CaptionerBackend& backend,
                            const std::filesystem::path& image_path, std::string sample_id) {
  {
    std::ifstream probe(image_path, std::ios::binary);
    if (!probe || std::filesystem::is_directory(image_path))
      throw UnreadableImage(image_path.string());
  }
  std::string text;
  try {
    text = backend.describe(ImageRef{image_path});
  } catch (const UnreadableImage&) {
    throw;
  } catch (const BackendFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendFailure(backend.backend_id(), e.what());
  }
  if (trim(text).empty()) throw BackendFailure(backend.backend_id(), "empty caption");
  return {std::move(sample_id), backend.backend_id(), backend.params_hash(), std::move(text),
          utc_timestamp(), backend.deterministic()};
}

// Phrase bank -----------------------------------------------------------------

PhraseBank::PhraseBank(const std::vector<std::string>& phrases) {
  std::set<std::string> seen;
  phrases_.reserve(phrases.size());
  for (const auto& raw : phrases) {
    auto p = normalize_whitespace(raw);
    if (p.empty()) throw Error("phrase bank entries must be non-empty");
    if (!seen.insert(p).second) throw Error("duplicate phrase '" + p + "' in phrase bank");
    phrases_.push_back(std::move(p));
  }
}

std::string PhraseBank::digest() const {
  std::string joined;
  for (const auto& p : phrases_) {
    joined += p;
    joined += '\n';
  }
  return sha256_hex(joined);
}

PhraseBank load_phrase_bank(const std::filesystem::path& path) {
  std::vector<std::string> phrases;
  std::set<std::string> seen;
  const auto text = read_file(path);
  for (auto line : split(text, '\n')) {
    auto p = normalize_whitespace(line);
    if (p.empty() || !seen.insert(p).second) continue;
    phrases.push_back(std::move(p));
  }
  return PhraseBank(phrases);
}

// Scorers --------------------------------------------------------------------

std::vector<double> SimilarityScorer::score_all(const ImageRef& image,
                                                const std::vector<std::string>& texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score(image, t));
  return out;
}

TableScorer::TableScorer(std::map<std::string, double> table, double fallback)
    : table_(std::move(table)), fallback_(fallback) {
  for (const auto& [phrase, s] : table_) {
    if (!std::isfinite(s)) throw Error("non-finite score for phrase '" + phrase + "'");
  }
  if (!std::isfinite(fallback_)) throw Error("non-finite fallback score");
}

std::string TableScorer::scorer_id() const {
  nlohmann::json j = {{"table", table_}, {"fallback", fallback_}};
  return "table:" + sha256_hex(j.dump()).substr(0, 16);
}

double TableScorer::score(const ImageRef&, std::string_view text) const {
  auto it = table_.find(std::string(text));
  return it == table_.end() ? fallback_ : it->second;
}

TableScorer load_table_scorer(const std::filesystem::path& path, double fallback) {
  std::map<std::string, double> table;
  std::size_t line_no = 0;
  const auto text = read_file(path);
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw MalformedRow(line_no, "expected phrase<TAB>score");
    try {
      table[normalize_whitespace(cols[0])] = std::stod(std::string(trim(cols[1])));
    } catch (const std::logic_error&) {
      throw MalformedRow(line_no, "bad score '" + std::string(cols[1]) + "'");
    }
  }
  return TableScorer(std::move(table), fallback);
}

namespace {

struct ColorWord {
  std::string_view word;
  std::array<int, 3> rgb;
};

constexpr std::array<ColorWord, 12> kColorWords{{
    {"red", {210, 40, 40}},     {"crimson", {180, 20, 50}},  {"scarlet", {230, 50, 30}},
    {"orange", {235, 130, 30}}, {"blue", {40, 70, 220}},     {"navy", {30, 40, 140}},
    {"azure", {60, 130, 230}},  {"purple", {150, 50, 150}},  {"violet", {140, 70, 210}},
    {"green", {40, 170, 60}},   {"gray", {128, 128, 128}},   {"grey", {128, 128, 128}},
}};

constexpr int kColorRadius = 70;

std::vector<std::string> lowercase_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::array<double, kColorWords.size()> color_fractions(const RgbImage& img) {
  std::array<double, kColorWords.size()> frac{};
  const std::size_t n = img.pixels.size() / 3;
  if (n == 0) return frac;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* px = &img.pixels[i * 3];
    for (std::size_t k = 0; k < kColorWords.size(); ++k) {
      const auto& c = kColorWords[k].rgb;
      int dr = px[0] - c[0], dg = px[1] - c[1], db = px[2] - c[2];
      if (dr * dr + dg * dg + db * db <= kColorRadius * kColorRadius) frac[k] += 1.0;
    }
  }
  for (auto& f : frac) f /= static_cast<double>(n);
  return frac;
}

double phrase_color_score(const std::array<double, kColorWords.size()>& frac,
                          std::string_view phrase) {
  double best = 0.0;
  for (const auto& w : lowercase_words(phrase)) {
    for (std::size_t k = 0; k < kColorWords.size(); ++k) {
      if (kColorWords[k].word == w) best = std::max(best, frac[k]);
    }
  }
  return best;
}

}  // namespace

double ColorScorer::score(const ImageRef& image, std::string_view text) const {
  return phrase_color_score(color_fractions(read_ppm(image.path)), text);
}

std::vector<double> ColorScorer::score_all(const ImageRef& image,
                                           const std::vector<std::string>& texts) const {
  auto frac = color_fractions(read_ppm(image.path));
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(phrase_color_score(frac, t));
  return out;
}

// Flavor selection -------------------------------------------------------------

std::vector<std::string> select_flavors(const ImageRef& image, std::string_view /*base_caption*/,
                                        const PhraseBank& bank, const SimilarityScorer& scorer,
                                        std::size_t budget) {
  if (bank.empty()) throw EmptyPhraseBank();
  if (budget == 0) throw Error("flavor budget must be at least 1");
  const auto& phrases = bank.phrases();
  auto scores = scorer.score_all(image, phrases);
  if (scores.size() != phrases.size())
    throw Error("scorer '" + scorer.scorer_id() + "' returned the wrong number of scores");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw Error("scorer '" + scorer.scorer_id() + "' gave a non-finite score for '" +
                  phrases[i] + "'");
  }
  std::vector<std::size_t> order(phrases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(budget, order.size()));
  std::vector<std::string> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(phrases[i]);
  return out;
}

std::string compose_prompt(std::string_view base_caption, const std::vector<std::string>& phrases) {
  if (base_caption.empty()) throw Error("base caption must be non-empty");
  std::string out(base_caption);
  for (const auto& p : phrases) {
    out += ", ";
    out += p;
  }
  return out;
}

// Backends --------------------------------------------------------------------

FixedTextCaptioner::FixedTextCaptioner(std::string text, std::string backend_id)
    : id_(std::move(backend_id)), text_(std::move(text)), params_({{"text", text_}}) {}

std::string FixedTextCaptioner::describe(const ImageRef&) const { return text_; }

RuleBasedCaptioner::RuleBasedCaptioner(nlohmann::json params) {
  if (params.is_null()) params = nlohmann::json::object();
  fill_threshold_ = params.value("fill_threshold", 0.87);
  min_spread_ = params.value("min_spread", 60);
  sampling_ = params.value("sampling", false);
  params_ = {{"fill_threshold", fill_threshold_},
             {"min_spread", min_spread_},
             {"sampling", sampling_},
             {"version", 1}};
}

std::string RuleBasedCaptioner::describe(const ImageRef& image) const {
  const auto img = read_ppm(image.path);
  const auto mask = saturated_mask(img, min_spread_);
  int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
  std::size_t count = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!mask[static_cast<std::size_t>(y) * img.width + x]) continue;
      ++count;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (count == 0) return "a plain gray picture with nothing in it";

  const double box = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
  const double fill = static_cast<double>(count) / box;
  const double coverage = box / (static_cast<double>(img.width) * img.height);

  // Wording variety comes from the pixel content so the output stays reproducible.
  const auto h = fnv1a64(std::string_view(reinterpret_cast<const char*>(img.pixels.data()),
                                          img.pixels.size()));
  static constexpr std::array<std::string_view, 3> kRound{"round", "circular", "curved"};
  static constexpr std::array<std::string_view, 3> kBoxy{"boxy", "square", "angular"};
  static constexpr std::array<std::string_view, 4> kNoun{"object", "thing", "shape", "item"};
  const auto& outline = fill >= fill_threshold_ ? kBoxy : kRound;

  std::string text = "a photo of a ";
  text += coverage >= 0.3 ? "large " : "small ";
  text += outline[h % outline.size()];
  text += ' ';
  text += kNoun[(h >> 8) % kNoun.size()];
  text += " on a gray background";
  if (sampling_) {
    static constexpr std::array<std::string_view, 4> kFiller{"today", "outside", "again",
                                                             "nearby"};
    thread_local std::mt19937 rng{std::random_device{}()};
    text += ' ';
    text += kFiller[std::uniform_int_distribution<std::size_t>(0, kFiller.size() - 1)(rng)];
  }
  return text;
}

PrecomputedCaptioner::PrecomputedCaptioner(const std::filesystem::path& table, std::string label) {
  const auto bytes = read_file(table);
  std::size_t line_no = 0;
  for (auto line : split(bytes, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw MalformedRow(line_no, "expected file_name<TAB>caption");
    captions_.emplace(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
  }
  params_ = {{"label", std::move(label)}, {"table_sha256", sha256_hex(bytes)}};
}

std::string PrecomputedCaptioner::describe(const ImageRef& image) const {
  auto it = captions_.find(image.path.filename().string());
  if (it == captions_.end())
    throw Error("no precomputed caption for '" + image.path.filename().string() + "'");
  return it->second;
}

PromptInversionCaptioner::PromptInversionCaptioner(std::shared_ptr<const CaptionerBackend> base,
                                                   PhraseBank bank,
                                                   std::shared_ptr<const SimilarityScorer> scorer,
                                                   std::size_t budget)
    : base_(std::move(base)), bank_(std::move(bank)), scorer_(std::move(scorer)), budget_(budget) {
  if (!base_ || !scorer_) throw Error("prompt inversion needs a base captioner and a scorer");
  if (bank_.empty()) throw EmptyPhraseBank();
  if (budget_ == 0) throw Error("flavor budget must be at least 1");
  params_ = {{"base", {{"backend_id", base_->backend_id()}, {"params_hash", base_->params_hash()}}},
             {"bank_sha256", bank_.digest()},
             {"scorer", scorer_->scorer_id()},
             {"budget", budget_},
             {"selection", "greedy-independent-v1"}};
}

std::string PromptInversionCaptioner::describe(const ImageRef& image) const {
  auto base_caption = base_->describe(image);
  if (trim(base_caption).empty()) throw BackendFailure(base_->backend_id(), "empty caption");
  return compose_prompt(base_caption, select_flavors(image, base_caption, bank_, *scorer_, budget_));
}

std::shared_ptr<const CaptionerBackend> make_captioner(const nlohmann::json& spec,
                                                       const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  const auto backend = spec.value("backend", std::string{});
  const auto params = spec.value("params", nlohmann::json::object());
  if (backend == "fixed") {
    return std::make_shared<FixedTextCaptioner>(params.value("text", std::string{}));
  }
  if (backend == "rule-based") return std::make_shared<RuleBasedCaptioner>(params);
  if (backend == "precomputed") {
    if (!spec.contains("table")) throw ConfigError("precomputed captioner needs \"table\"");
    return std::make_shared<PrecomputedCaptioner>(resolve(spec.at("table").get<std::string>()),
                                                  params.value("label", std::string{"external"}));
  }
  if (backend == "prompt-inversion") {
    if (!spec.contains("base")) throw ConfigError("prompt-inversion captioner needs \"base\"");
    if (!spec.contains("phrase_bank"))
      throw ConfigError("prompt-inversion captioner needs \"phrase_bank\"");
    auto base = make_captioner(spec.at("base"), base_dir);
    auto bank = load_phrase_bank(resolve(spec.at("phrase_bank").get<std::string>()));
    std::shared_ptr<const SimilarityScorer> scorer;
    const auto scorer_spec = spec.value("scorer", nlohmann::json{{"type", "color"}});
    const auto type = scorer_spec.value("type", std::string{"color"});
    if (type == "color") {
      scorer = std::make_shared<ColorScorer>();
    } else if (type == "table") {
      scorer = std::make_shared<TableScorer>(
          load_table_scorer(resolve(scorer_spec.at("path").get<std::string>()),
                            scorer_spec.value("fallback", 0.0)));
    } else {
      throw ConfigError("unknown scorer type '" + type + "'");
    }
    auto budget = spec.value("budget", kDefaultFlavorBudget);
    return std::make_shared<PromptInversionCaptioner>(std::move(base), std::move(bank),
                                                      std::move(scorer), budget);
  }
  throw ConfigError("unknown captioner backend '" + backend + "'");
}

}  // namespace capfuse
