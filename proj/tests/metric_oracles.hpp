#pragma once

// Brute-force reference implementations of the caption metrics and the
// 20-pair fixture they are compared on.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "finegrain/metrics.hpp"

namespace oracle {

using finegrain::metrics::CaptionPair;
using finegrain::metrics::Tokens;

inline Tokens words(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::vector<CaptionPair> fixture() {
  const std::vector<std::pair<const char*, const char*>> raw = {
      {"moving cup from left to right", "moving cup from left to right"},
      {"a b c d e", "a b c d f"},
      {"a b c d", "a c b d"},
      {"stacking boxes on the table", "stacked box on a table"},
      {"the the the the", "the cat sat on the mat"},
      {"pushing pen up", "pushing pen down"},
      {"lifting cup up then letting it", "lifting cup up then letting it drop"},
      {"pretending to move pen", "moving pen closer to cup"},
      {"putting cup on plate", "putting plate on cup"},
      {"holding cap in front of shirt", "holding cap in front of shirt"},
      {"x y z", "p q r s"},
      {"moved square left", "moving a square from left"},
      {"a a b b a a", "a b a b a b"},
      {"closer closer to", "to closer"},
      {"dropping it", "letting it drop"},
      {"pushing something down", "pushing [something] down"},
      {"cups plates", "cup plate"},
      {"opening the jar", "opens the jars quickly"},
      {"trying but failing to lift tongs", "failing to lift tongs"},
      {"a", "a b c d e f g h"},
  };
  std::vector<CaptionPair> out;
  for (const auto& [p, r] : raw) out.push_back({words(p), words(r)});
  return out;
}

// Occurrences of the n-gram starting at t[pos] inside u, by direct scan.
inline long count_occurrences(const Tokens& t, std::size_t pos, int n, const Tokens& u) {
  long c = 0;
  for (std::size_t i = 0; i + n <= u.size(); ++i) {
    bool eq = true;
    for (int k = 0; k < n; ++k) eq = eq && u[i + k] == t[pos + k];
    c += eq;
  }
  return c;
}

inline double bleu4(const std::vector<CaptionPair>& pairs) {
  double c = 0, r = 0, logp = 0;
  for (int n = 1; n <= 4; ++n) {
    double num = 0, den = 0;
    for (const auto& p : pairs) {
      const auto& h = p.prediction;
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        den += 1;
        // Credit each distinct n-gram once, at its first position.
        bool first = true;
        for (std::size_t j = 0; j < i && first; ++j) {
          bool eq = true;
          for (int k = 0; k < n; ++k) eq = eq && h[j + k] == h[i + k];
          first = !eq;
        }
        if (first) num += std::min(count_occurrences(h, i, n, h), count_occurrences(h, i, n, p.reference));
      }
    }
    if (num == 0) return 0.0;
    logp += std::log(num / den) / 4.0;
  }
  for (const auto& p : pairs) c += double(p.prediction.size()), r += double(p.reference.size());
  return (c < r ? std::exp(1 - r / c) : 1.0) * std::exp(logp);
}

inline bool is_subsequence(const Tokens& s, const Tokens& t) {
  std::size_t j = 0;
  for (const auto& x : t)
    if (j < s.size() && s[j] == x) ++j;
  return j == s.size();
}

// Longest common subsequence by enumerating every subsequence of a.
inline int lcs(const Tokens& a, const Tokens& b) {
  int best = 0;
  for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
    Tokens s;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask >> i & 1u) s.push_back(a[i]);
    if (int(s.size()) > best && is_subsequence(s, b)) best = int(s.size());
  }
  return best;
}

inline double rouge_l(const std::vector<CaptionPair>& pairs) {
  double s = 0;
  for (const auto& p : pairs) {
    const double l = lcs(p.prediction, p.reference);
    if (l == 0) continue;
    const double P = l / double(p.prediction.size()), R = l / double(p.reference.size());
    s += (1 + 1.44) * P * R / (R + 1.44 * P);
  }
  return s / double(pairs.size());
}

// Every injective partial alignment, scored (exact, matches, -chunks).
inline std::tuple<int, int, int> best_alignment(const Tokens& h, const Tokens& r) {
  using finegrain::metrics::stem;
  std::tuple<int, int, int> best{0, 0, 0};
  std::vector<int> link(h.size(), -1);
  std::vector<bool> used(r.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == h.size()) {
      int e = 0, m = 0, chunks = 0, prev = -2;
      for (std::size_t k = 0; k < h.size(); ++k) {
        if (link[k] < 0) {
          prev = -2;
          continue;
        }
        ++m;
        e += h[k] == r[std::size_t(link[k])];
        if (link[k] != prev + 1) ++chunks;
        prev = link[k];
      }
      best = std::max(best, std::tuple<int, int, int>{e, m, -chunks});
      return;
    }
    rec(i + 1);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (used[j] || stem(h[i]) != stem(r[j])) continue;
      used[j] = true;
      link[i] = int(j);
      rec(i + 1);
      link[i] = -1;
      used[j] = false;
    }
  };
  rec(0);
  return best;
}

inline double meteor(const std::vector<CaptionPair>& pairs) {
  double s = 0;
  for (const auto& p : pairs) {
    const auto [e, m, negc] = best_alignment(p.prediction, p.reference);
    if (m == 0) continue;
    const double P = double(m) / double(p.prediction.size()), R = double(m) / double(p.reference.size());
    const double f = 10 * P * R / (R + 9 * P);
    s += f * (1 - 0.5 * std::pow(double(-negc) / m, 3));
  }
  return s / double(pairs.size());
}

inline double exact_match(const std::vector<CaptionPair>& pairs) {
  double hits = 0;
  for (const auto& p : pairs) hits += p.prediction == p.reference;
  return hits / double(pairs.size());
}

}  // namespace oracle
