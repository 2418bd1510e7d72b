#pragma once

// Classification and caption metrics plus the two label-only baselines.

#include <map>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "json.hpp"

namespace finegrain::metrics {

using Tokens = std::vector<std::string>;

// Single reference per prediction; tokens already normalised by tokenize_caption.
struct CaptionPair {
  Tokens prediction;
  Tokens reference;
};

double classification_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Sums fine probabilities within each group.
std::vector<double> group_probs_from_fine(const std::vector<double>& fine_probs,
                                          const corpus::LabelHierarchy& hierarchy);

// Drops <pad>, <bos> and <eos> tokens.
Tokens strip_specials(const Tokens& tokens);

double exact_match_accuracy(const std::vector<CaptionPair>& pairs);

// Corpus-level, unsmoothed, uniform weights.
double bleu4(const std::vector<CaptionPair>& pairs);

inline constexpr double kRougeBeta = 1.2;
int lcs_length(const Tokens& a, const Tokens& b);
double rouge_l_pair(const Tokens& prediction, const Tokens& reference, double beta = kRougeBeta);
// Mean of per-pair LCS F-measures.
double rouge_l(const std::vector<CaptionPair>& pairs);

// Fixed suffix-stripping stemmer used by meteor_lite.
std::string stem(const std::string& word);

struct MeteorAlignment {
  int matches = 0;
  int exact = 0;
  int chunks = 0;
};
// Best one-to-one alignment: most exact matches first, then most matches
// overall (stem matches fill in), then fewest chunks.
MeteorAlignment meteor_align(const Tokens& prediction, const Tokens& reference);
double meteor_lite_pair(const Tokens& prediction, const Tokens& reference);
// METEOR-style score without synonym resources; mean over pairs.
double meteor_lite(const std::vector<CaptionPair>& pairs);

// Most frequent training category inside each predicted group (ties: lowest id).
std::vector<int> baseline_frequent_fine(const std::vector<int>& coarse_predictions,
                                        const std::vector<long>& train_category_counts,
                                        const corpus::LabelHierarchy& hierarchy);

using ObjectStringCounts = std::map<int, std::map<std::string, long>>;

// Counts placeholder strings per category over a set of records.
ObjectStringCounts count_object_strings(const std::vector<corpus::AnnotationRecord>& records);

// Category template with every slot filled by the modal object string
// (ties: lexicographically smallest); "[something]" when none were seen.
std::string baseline_template_fill(int predicted_category, const std::vector<std::string>& category_templates,
                                   const ObjectStringCounts& counts);

// All caption metrics over one set of pairs.
nlohmann::json caption_report(const std::vector<CaptionPair>& pairs);

}  // namespace finegrain::metrics
