#pragma once

// Annotation records, caption templates and vocabularies.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finegrain/errors.hpp"

namespace finegrain::corpus {

inline constexpr std::string_view kSlot = "[something]";

// One video's labels at every granularity.
struct AnnotationRecord {
  std::string video_id;
  int action_group_id = 0;
  int action_category_id = 0;
  std::string template_text;
  std::vector<std::string> placeholders;
  std::string full_caption;
  std::optional<std::string> simplified_caption;
};

// Total map from fine category to coarse group.
class LabelHierarchy {
 public:
  LabelHierarchy() = default;
  LabelHierarchy(std::vector<int> group_of, int group_count);

  static LabelHierarchy identity(int categories);
  // Builds the map from records; throws ValidationError when a category is
  // seen under two different groups.
  static LabelHierarchy from_records(const std::vector<AnnotationRecord>& records, int categories = -1,
                                     int groups = -1);

  int group_of(int category) const;
  int group_count() const { return group_count_; }
  int category_count() const { return static_cast<int>(group_of_.size()); }
  std::vector<int> categories_in(int group) const;
  const std::vector<int>& table() const { return group_of_; }

 private:
  std::vector<int> group_of_;
  int group_count_ = 0;
};

// Throws std::out_of_range for ids outside [0, K).
int coarse_of_fine(int category_id, const LabelHierarchy& hierarchy);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSomething = 3;
  static constexpr int kSpecialCount = 4;

  Vocabulary();

  // Only legal before freeze(); returns the token's index.
  int add(const std::string& token);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // Unknown tokens map to kSomething once frozen; before that they throw.
  int index_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token_at(int index) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, line number = index.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  // Rebuilds a frozen vocabulary from tokens(); specials must lead.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
  bool frozen_ = false;
};

// BOS, content, EOS, then PAD up to fixed storage length.
struct TokenSequence {
  std::vector<int> indices;

  // Throws ValidationError unless: begins with BOS, exactly one EOS, only PAD after EOS, no PAD before it.
  void validate() const;
  // Index of the EOS token.
  int eos_position() const;
  // Tokens strictly between BOS and EOS.
  std::vector<int> content() const;
};

int count_slots(std::string_view template_text);
std::string expand_template(std::string_view template_text, const std::vector<std::string>& placeholders);
std::string simplify_placeholder(std::string_view placeholder);
// Template expanded with simplified placeholders.
std::string simplified_caption(const AnnotationRecord& record);

std::vector<std::string> tokenize_caption(std::string_view caption);

// Tokens counted at least `min_occurrences` times get indices (descending
// count, ties lexicographic); everything rarer folds into [something].
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions, int min_occurrences = 6);

TokenSequence encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab, int max_len = 14);
std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocabulary& vocab);
std::string join_tokens(const std::vector<std::string>& tokens);

// JSON-lines: {"id","group","category","template","placeholders","caption"}.
AnnotationRecord parse_annotation(const std::string& line, long line_number = -1);
void validate_record(const AnnotationRecord& record);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);
std::string annotation_to_json_line(const AnnotationRecord& record);

}  // namespace finegrain::corpus
