#include "finegrain/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include "json.hpp"
#include <set>
#include <sstream>

namespace finegrain::corpus {

namespace {

using nlohmann::json;

const std::vector<std::string> kSpecialTokens = {"<pad>", "<bos>", "<eos>", std::string(kSlot)};

bool slot_at(std::string_view text, std::size_t pos) {
  if (pos + kSlot.size() > text.size()) return false;
  for (std::size_t i = 0; i < kSlot.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != kSlot[i]) return false;
  }
  return true;
}

std::string normalize_spaces(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(ch);
    }
  }
  return out;
}

}  // namespace

// -------------------------------------------------------- LabelHierarchy

LabelHierarchy::LabelHierarchy(std::vector<int> group_of, int group_count)
    : group_of_(std::move(group_of)), group_count_(group_count) {
  if (group_count_ <= 0) throw ValidationError("hierarchy needs at least one group");
  for (int g : group_of_) {
    if (g < 0 || g >= group_count_) throw ValidationError("hierarchy maps a category to an invalid group");
  }
}

LabelHierarchy LabelHierarchy::identity(int categories) {
  std::vector<int> table(categories);
  for (int k = 0; k < categories; ++k) table[k] = k;
  return LabelHierarchy(std::move(table), categories);
}

LabelHierarchy LabelHierarchy::from_records(const std::vector<AnnotationRecord>& records, int categories,
                                            int groups) {
  int k = categories;
  int g = groups;
  for (const auto& r : records) {
    if (categories < 0) k = std::max(k, r.action_category_id + 1);
    if (groups < 0) g = std::max(g, r.action_group_id + 1);
  }
  std::vector<int> table(std::max(k, 0), -1);
  for (const auto& r : records) {
    if (r.action_category_id < 0 || r.action_category_id >= k) {
      throw ValidationError(r.video_id + ": category out of range");
    }
    int& slot = table[r.action_category_id];
    if (slot >= 0 && slot != r.action_group_id) {
      throw ValidationError(r.video_id + ": category " + std::to_string(r.action_category_id) +
                            " appears under groups " + std::to_string(slot) + " and " +
                            std::to_string(r.action_group_id));
    }
    slot = r.action_group_id;
  }
  for (std::size_t c = 0; c < table.size(); ++c) {
    if (table[c] < 0) throw ValidationError("category " + std::to_string(c) + " has no observed group");
  }
  return LabelHierarchy(std::move(table), g);
}

int LabelHierarchy::group_of(int category) const {
  if (category < 0 || category >= category_count()) {
    throw std::out_of_range("category id " + std::to_string(category) + " outside [0, " +
                            std::to_string(category_count()) + ")");
  }
  return group_of_[category];
}

std::vector<int> LabelHierarchy::categories_in(int group) const {
  std::vector<int> out;
  for (int c = 0; c < category_count(); ++c) {
    if (group_of_[c] == group) out.push_back(c);
  }
  return out;
}

int coarse_of_fine(int category_id, const LabelHierarchy& hierarchy) { return hierarchy.group_of(category_id); }

// ------------------------------------------------------------ Vocabulary

Vocabulary::Vocabulary() {
  for (const auto& t : kSpecialTokens) {
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

int Vocabulary::add(const std::string& token) {
  if (frozen_) throw std::logic_error("vocabulary is frozen");
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int idx = size();
  index_[token] = idx;
  tokens_.push_back(token);
  return idx;
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  if (!frozen_) throw std::out_of_range("token not in unfrozen vocabulary: " + token);
  return kSomething;
}

const std::string& Vocabulary::token_at(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("vocabulary index " + std::to_string(index));
  return tokens_[index];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw std::runtime_error("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i < std::size_t(kSpecialCount)) {
      if (tokens[i] != kSpecialTokens[i]) throw ValidationError("vocabulary must start with the special tokens");
    } else if (v.add(tokens[i]) != static_cast<int>(i)) {
      throw ValidationError("duplicate vocabulary token '" + tokens[i] + "'");
    }
  }
  v.freeze();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    if (n < kSpecialCount) {
      if (line != kSpecialTokens[n]) {
        throw ParseError("vocabulary special token expected: " + kSpecialTokens[n], n + 1);
      }
    } else {
      if (line.empty()) throw ParseError("empty vocabulary token", n + 1);
      if (v.contains(line)) throw ParseError("duplicate vocabulary token " + line, n + 1);
      v.add(line);
    }
    ++n;
  }
  if (n < kSpecialCount) throw ParseError("vocabulary file missing special tokens");
  v.freeze();
  return v;
}

// --------------------------------------------------------- TokenSequence

void TokenSequence::validate() const {
  if (indices.empty() || indices.front() != Vocabulary::kBos) throw ValidationError("token sequence must start with BOS");
  int eos = -1;
  for (std::size_t i = 1; i < indices.size(); ++i) {
    const int tok = indices[i];
    if (tok == Vocabulary::kEos) {
      if (eos >= 0) throw ValidationError("token sequence has more than one EOS");
      eos = static_cast<int>(i);
    } else if (tok == Vocabulary::kPad) {
      if (eos < 0) throw ValidationError("PAD before EOS");
    } else if (eos >= 0) {
      throw ValidationError("content token after EOS");
    } else if (tok == Vocabulary::kBos) {
      throw ValidationError("BOS inside token sequence");
    }
  }
  if (eos < 0) throw ValidationError("token sequence has no EOS");
}

int TokenSequence::eos_position() const {
  auto it = std::find(indices.begin(), indices.end(), Vocabulary::kEos);
  if (it == indices.end()) throw ValidationError("token sequence has no EOS");
  return static_cast<int>(it - indices.begin());
}

std::vector<int> TokenSequence::content() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int tok = indices[i];
    if (tok == Vocabulary::kEos) break;
    if (tok == Vocabulary::kBos || tok == Vocabulary::kPad) continue;
    out.push_back(tok);
  }
  return out;
}

// ------------------------------------------------------------- templates

int count_slots(std::string_view text) {
  int n = 0;
  for (std::size_t i = 0; i < text.size();) {
    if (slot_at(text, i)) {
      ++n;
      i += kSlot.size();
    } else {
      ++i;
    }
  }
  return n;
}

std::string expand_template(std::string_view text, const std::vector<std::string>& placeholders) {
  const int slots = count_slots(text);
  if (slots != static_cast<int>(placeholders.size())) {
    throw ValidationError("template has " + std::to_string(slots) + " slots but " +
                          std::to_string(placeholders.size()) + " placeholders");
  }
  std::string out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < text.size();) {
    if (slot_at(text, i)) {
      out += ' ';
      out += placeholders[next++];
      out += ' ';
      i += kSlot.size();
    } else {
      out += text[i++];
    }
  }
  return normalize_spaces(out);
}

std::string simplify_placeholder(std::string_view placeholder) {
  std::string last;
  std::istringstream words{std::string(placeholder)};
  for (std::string w; words >> w;) last = w;
  // Possessive suffixes go before punctuation stripping so "men's" -> "men".
  for (std::string_view suffix : {"'s", "’s", "s'"}) {
    if (last.size() > suffix.size() && last.ends_with(suffix)) {
      last.resize(last.size() - suffix.size() + (suffix == "s'" ? 1 : 0));
      break;
    }
  }
  std::string out;
  for (unsigned char ch : last) {
    if (std::isalnum(ch)) out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out.empty() ? std::string(kSlot) : out;
}

std::string simplified_caption(const AnnotationRecord& record) {
  std::vector<std::string> simple;
  simple.reserve(record.placeholders.size());
  for (const auto& p : record.placeholders) simple.push_back(simplify_placeholder(p));
  return expand_template(record.template_text, simple);
}

std::vector<std::string> tokenize_caption(std::string_view caption) {
  std::string buffer;
  buffer.reserve(caption.size() + 8);
  for (std::size_t i = 0; i < caption.size();) {
    if (slot_at(caption, i)) {
      buffer += ' ';
      buffer += kSlot;
      buffer += ' ';
      i += kSlot.size();
      continue;
    }
    const unsigned char ch = static_cast<unsigned char>(caption[i]);
    if (ch == '\'') {
      ++i;
    } else if (ch == 0xE2 && i + 2 < caption.size() && static_cast<unsigned char>(caption[i + 1]) == 0x80 &&
               static_cast<unsigned char>(caption[i + 2]) == 0x99) {
      i += 3;  // U+2019 right single quotation mark
    } else if (std::isalnum(ch)) {
      buffer += static_cast<char>(std::tolower(ch));
      ++i;
    } else if (ch >= 0x80) {
      buffer += static_cast<char>(ch);  // keep non-ASCII letters intact
      ++i;
    } else {
      buffer += ' ';
      ++i;
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(buffer);
  for (std::string w; in >> w;) tokens.push_back(w);
  return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& captions, int min_occurrences) {
  std::map<std::string, long> counts;
  for (const auto& caption : captions) {
    for (const auto& tok : caption) {
      if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) != kSpecialTokens.end()) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_occurrences) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : kept) v.add(tok);
  v.freeze();
  return v;
}

TokenSequence encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab, int max_len) {
  if (!vocab.frozen()) throw std::logic_error("encode_tokens requires a frozen vocabulary");
  if (max_len < 0) throw std::invalid_argument("max_len must be non-negative");
  TokenSequence seq;
  seq.indices.assign(static_cast<std::size_t>(max_len) + 2, Vocabulary::kPad);
  seq.indices[0] = Vocabulary::kBos;
  const int n = std::min<int>(max_len, static_cast<int>(tokens.size()));
  for (int i = 0; i < n; ++i) seq.indices[i + 1] = vocab.index_of(tokens[i]);
  seq.indices[n + 1] = Vocabulary::kEos;
  return seq;
}

std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int idx : seq.content()) out.push_back(vocab.token_at(idx));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// ----------------------------------------------------------- annotations

void validate_record(const AnnotationRecord& r) {
  const int slots = count_slots(r.template_text);
  if (slots != static_cast<int>(r.placeholders.size())) {
    throw ValidationError(r.video_id + ": template has " + std::to_string(slots) + " slots but " +
                          std::to_string(r.placeholders.size()) + " placeholders");
  }
  if (r.action_group_id < 0 || r.action_category_id < 0) throw ValidationError(r.video_id + ": negative label id");
}

AnnotationRecord parse_annotation(const std::string& line, long line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
  }
  AnnotationRecord r;
  try {
    r.video_id = j.at("id").get<std::string>();
    r.action_group_id = j.at("group").get<int>();
    r.action_category_id = j.at("category").get<int>();
    r.template_text = j.at("template").get<std::string>();
    r.placeholders = j.at("placeholders").get<std::vector<std::string>>();
    r.full_caption = j.at("caption").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad annotation field: ") + e.what(), line_number);
  }
  validate_record(r);
  r.simplified_caption = simplified_caption(r);
  return r;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotations " + path.string());
  std::vector<AnnotationRecord> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_annotation(line, n));
  }
  return out;
}

std::string annotation_to_json_line(const AnnotationRecord& r) {
  json j;
  j["id"] = r.video_id;
  j["group"] = r.action_group_id;
  j["category"] = r.action_category_id;
  j["template"] = r.template_text;
  j["placeholders"] = r.placeholders;
  j["caption"] = r.full_caption;
  return j.dump();
}

void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write annotations " + path.string());
  for (const auto& r : records) out << annotation_to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("failed writing annotations " + path.string());
}

}  // namespace finegrain::corpus
