#include "finegrain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "finegrain/errors.hpp"

namespace finegrain::metrics {

namespace {

void require_nonempty(const std::vector<CaptionPair>& pairs, const char* what) {
  if (pairs.empty()) throw std::invalid_argument(std::string(what) + " needs at least one caption pair");
}

using NgramCounts = std::map<Tokens, long>;

NgramCounts ngrams(const Tokens& t, int n) {
  NgramCounts out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool ends_with(const std::string& w, std::string_view s) {
  return w.size() >= s.size() && std::equal(s.rbegin(), s.rend(), w.rbegin());
}

bool has_vowel(std::string_view s) { return std::any_of(s.begin(), s.end(), is_vowel); }

}  // namespace

double classification_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  long hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return double(hits) / double(labels.size());
}

std::vector<double> group_probs_from_fine(const std::vector<double>& fine_probs,
                                          const corpus::LabelHierarchy& hierarchy) {
  if (static_cast<int>(fine_probs.size()) != hierarchy.category_count()) {
    throw std::invalid_argument("group_probs_from_fine: probability vector does not match the hierarchy");
  }
  std::vector<double> out(std::size_t(hierarchy.group_count()), 0.0);
  for (std::size_t k = 0; k < fine_probs.size(); ++k) out[std::size_t(hierarchy.group_of(int(k)))] += fine_probs[k];
  return out;
}

Tokens strip_specials(const Tokens& tokens) {
  Tokens out;
  for (const auto& t : tokens)
    if (t != "<pad>" && t != "<bos>" && t != "<eos>") out.push_back(t);
  return out;
}

double exact_match_accuracy(const std::vector<CaptionPair>& pairs) {
  require_nonempty(pairs, "exact_match_accuracy");
  long hits = 0;
  for (const auto& p : pairs) hits += strip_specials(p.prediction) == strip_specials(p.reference);
  return double(hits) / double(pairs.size());
}

double bleu4(const std::vector<CaptionPair>& pairs) {
  require_nonempty(pairs, "bleu4");
  long c = 0, r = 0;
  long matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (const auto& p : pairs) {
    c += static_cast<long>(p.prediction.size());
    r += static_cast<long>(p.reference.size());
    for (int n = 1; n <= 4; ++n) {
      const auto ref = ngrams(p.reference, n);
      for (const auto& [g, cnt] : ngrams(p.prediction, n)) {
        total[n - 1] += cnt;
        auto it = ref.find(g);
        if (it != ref.end()) matched[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(double(matched[n]) / double(total[n]));
  }
  const double bp = c < r ? std::exp(1.0 - double(r) / double(c)) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

int lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& prediction, const Tokens& reference, double beta) {
  if (prediction.empty() || reference.empty()) return 0.0;
  const int l = lcs_length(prediction, reference);
  if (l == 0) return 0.0;
  const double p = double(l) / double(prediction.size());
  const double r = double(l) / double(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(const std::vector<CaptionPair>& pairs) {
  require_nonempty(pairs, "rouge_l");
  double s = 0.0;
  for (const auto& p : pairs) s += rouge_l_pair(p.prediction, p.reference);
  return s / double(pairs.size());
}

std::string stem(const std::string& word) {
  std::string w;
  for (char c : word) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies") && w.size() > 4) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && w.size() > 3) {
    w.pop_back();
  }
  bool stripped = false;
  for (std::string_view suf : {"ing", "ed"}) {
    if (ends_with(w, suf) && w.size() - suf.size() >= 3 && has_vowel(std::string_view(w).substr(0, w.size() - suf.size()))) {
      w.resize(w.size() - suf.size());
      stripped = true;
      break;
    }
  }
  if (stripped && w.size() >= 2 && w.back() == w[w.size() - 2] && !is_vowel(w.back()) && w.back() != 'l' &&
      w.back() != 's' && w.back() != 'z') {
    w.pop_back();
  }
  if (ends_with(w, "e") && w.size() > 3) w.pop_back();
  if (ends_with(w, "y") && w.size() > 2) w.back() = 'i';
  return w;
}

MeteorAlignment meteor_align(const Tokens& prediction, const Tokens& reference) {
  const int P = static_cast<int>(prediction.size()), R = static_cast<int>(reference.size());
  if (R > 63) throw std::invalid_argument("meteor_align: reference longer than 63 tokens");
  std::vector<std::string> ps(static_cast<std::size_t>(P)), rs(static_cast<std::size_t>(R));
  for (int i = 0; i < P; ++i) ps[i] = stem(prediction[i]);
  for (int j = 0; j < R; ++j) rs[j] = stem(reference[j]);
  // 0 = no match, 1 = stem match, 2 = exact match.
  std::vector<std::vector<int>> kind(std::size_t(P), std::vector<int>(std::size_t(R), 0));
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < R; ++j) kind[i][j] = prediction[i] == reference[j] ? 2 : (ps[i] == rs[j] ? 1 : 0);

  // Score tuple (exact, matches, -chunks), maximised lexicographically.
  using Score = std::tuple<int, int, int>;
  struct Key {
    int i;
    int prev;
    std::uint64_t used;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::uint64_t>()(k.used * 0x9E3779B97F4A7C15ull ^ (std::uint64_t(k.i) << 8) ^
                                        std::uint64_t(k.prev + 1));
    }
  };
  std::unordered_map<Key, Score, KeyHash> memo;
  // prev: reference index linked to prediction i-1, or -1.
  auto solve = [&](auto&& self, int i, int prev, std::uint64_t used) -> Score {
    if (i == P) return {0, 0, 0};
    const Key key{i, prev, used};
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    Score best = self(self, i + 1, -1, used);
    for (int j = 0; j < R; ++j) {
      if (!kind[i][j] || (used >> j & 1u)) continue;
      auto [e, m, c] = self(self, i + 1, j, used | (std::uint64_t{1} << j));
      const bool extends = prev >= 0 && prev == j - 1;
      Score s{e + (kind[i][j] == 2), m + 1, c - (extends ? 0 : 1)};
      best = std::max(best, s);
    }
    memo.emplace(key, best);
    return best;
  };
  const auto [e, m, c] = solve(solve, 0, -1, 0);
  return {m, e, -c};
}

double meteor_lite_pair(const Tokens& prediction, const Tokens& reference) {
  const auto a = meteor_align(prediction, reference);
  if (a.matches == 0) return 0.0;
  const double p = double(a.matches) / double(prediction.size());
  const double r = double(a.matches) / double(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = double(a.chunks) / double(a.matches);
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

double meteor_lite(const std::vector<CaptionPair>& pairs) {
  require_nonempty(pairs, "meteor_lite");
  double s = 0.0;
  for (const auto& p : pairs) s += meteor_lite_pair(p.prediction, p.reference);
  return s / double(pairs.size());
}

std::vector<int> baseline_frequent_fine(const std::vector<int>& coarse_predictions,
                                        const std::vector<long>& train_category_counts,
                                        const corpus::LabelHierarchy& hierarchy) {
  if (static_cast<int>(train_category_counts.size()) != hierarchy.category_count()) {
    throw std::invalid_argument("baseline_frequent_fine: counts must cover every category");
  }
  std::vector<int> best(std::size_t(hierarchy.group_count()), -1);
  for (int k = 0; k < hierarchy.category_count(); ++k) {
    int& b = best[std::size_t(hierarchy.group_of(k))];
    if (b < 0 || train_category_counts[k] > train_category_counts[b]) b = k;
  }
  std::vector<int> out;
  out.reserve(coarse_predictions.size());
  for (int g : coarse_predictions) {
    if (g < 0 || g >= hierarchy.group_count() || best[g] < 0) {
      throw std::out_of_range("baseline_frequent_fine: unseen group id " + std::to_string(g));
    }
    out.push_back(best[g]);
  }
  return out;
}

ObjectStringCounts count_object_strings(const std::vector<corpus::AnnotationRecord>& records) {
  ObjectStringCounts out;
  for (const auto& r : records)
    for (const auto& p : r.placeholders) ++out[r.action_category_id][p];
  return out;
}

std::string baseline_template_fill(int predicted_category, const std::vector<std::string>& category_templates,
                                   const ObjectStringCounts& counts) {
  if (predicted_category < 0 || predicted_category >= static_cast<int>(category_templates.size())) {
    throw std::out_of_range("baseline_template_fill: unknown category " + std::to_string(predicted_category));
  }
  std::string fill(corpus::kSlot);
  if (auto it = counts.find(predicted_category); it != counts.end()) {
    long best = 0;
    // std::map iterates lexicographically, so the first maximum wins ties.
    for (const auto& [s, n] : it->second)
      if (n > best) best = n, fill = s;
  }
  const auto& tmpl = category_templates[predicted_category];
  return corpus::expand_template(tmpl, std::vector<std::string>(std::size_t(corpus::count_slots(tmpl)), fill));
}

nlohmann::json caption_report(const std::vector<CaptionPair>& pairs) {
  return {{"exact_match", exact_match_accuracy(pairs)},
          {"bleu4", bleu4(pairs)},
          {"rouge_l", rouge_l(pairs)},
          {"meteor_lite", meteor_lite(pairs)},
          {"pairs", pairs.size()}};
}

}  // namespace finegrain::metrics
