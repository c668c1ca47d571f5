#pragma once

// Reference implementations written from the definitions, sharing no code with the
// library. Used by the unit tests and the acceptance gate.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Lowercased runs of ASCII letters/digits; bytes >= 0x80 stay inside a token.
inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out(1);
  for (unsigned char c : text) {
    bool keep = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                (c >= 'A' && c <= 'Z');
    if (keep) {
      out.back() += (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : char(c);
    } else if (!out.back().empty()) {
      out.emplace_back();
    }
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

// Count-and-smooth naive Bayes evaluated as a plain product of probabilities.
inline std::vector<double> naive_bayes(const std::vector<std::string>& texts,
                                       const std::vector<int>& labels, int C,
                                       const std::string& query, double alpha = 1.0) {
  std::set<std::string> vocab;
  std::vector<std::map<std::string, long double>> count(C);
  std::vector<long double> total(C, 0), docs(C, 0);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    docs[labels[i]] += 1;
    for (const auto& w : words(texts[i])) {
      vocab.insert(w);
      count[labels[i]][w] += 1;
      total[labels[i]] += 1;
    }
  }
  std::vector<long double> joint(C);
  long double z = 0;
  for (int c = 0; c < C; ++c) {
    long double p = docs[c] / texts.size();
    for (const auto& w : words(query)) {
      if (!vocab.count(w)) continue;
      p *= (count[c][w] + alpha) / (total[c] + alpha * vocab.size());
    }
    joint[c] = p;
    z += p;
  }
  std::vector<double> out(C);
  for (int c = 0; c < C; ++c) out[c] = double(joint[c] / z);
  return out;
}

// Size-k subset (as sorted indices) with the largest score sum, by enumerating all
// C(n, k) subsets. The first maximum in enumeration order is kept.
inline std::vector<std::size_t> best_subset(const std::vector<double>& scores, std::size_t k) {
  const std::size_t n = scores.size();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  double best = -1e300;
  std::vector<std::size_t> best_idx;
  do {
    double s = 0;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) s += scores[i], idx.push_back(i);
    if (s > best) best = s, best_idx = idx;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best_idx;
}

inline double best_subset_sum(const std::vector<double>& scores, std::size_t k) {
  double s = 0;
  for (auto i : best_subset(scores, k)) s += scores[i];
  return s;
}

// Accuracy of the fused argmax at each w, recomputed entry by entry.
inline std::vector<double> sweep(const std::vector<std::vector<double>>& image,
                                 const std::vector<std::vector<double>>& text,
                                 const std::vector<int>& labels, const std::vector<double>& grid) {
  std::vector<double> acc;
  for (double w : grid) {
    int hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      int best = 0;
      double best_v = 0;
      for (std::size_t c = 0; c < image[r].size(); ++c) {
        double v = (1 - w) * image[r][c] + w * text[r][c];
        if (c == 0 || v > best_v) best = int(c), best_v = v;
      }
      if (best == labels[r]) ++hits;
    }
    acc.push_back(double(hits) / double(labels.size()));
  }
  return acc;
}

}  // namespace oracle
