#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "json.hpp"

namespace finegrain {

// Index of a generated (or imported) corpus: episodes, labels and splits.
struct Manifest {
  struct Episode {
    std::string id;
    std::string path;  // frame directory, relative to the manifest directory
    int category = 0;
    int group = 0;
    std::string split;
  };

  std::string name;
  std::string spec_hash;
  std::uint64_t seed = 0;
  double fps = 12.0;
  int frame_count = 0;
  corpus::LabelHierarchy hierarchy;
  std::vector<std::string> category_templates;
  std::vector<int> category_counts;
  std::string annotations_file = "annotations.jsonl";
  std::vector<Episode> episodes;
  std::map<std::string, std::vector<std::string>> splits;
  nlohmann::json spec;

  // Directory the manifest was loaded from; relative paths resolve against it.
  std::filesystem::path root;

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;

  const Episode& episode(const std::string& id) const;
  std::vector<const Episode*> split_episodes(const std::string& split) const;
  // Episode ids of `split`, grouped by category.
  std::map<int, std::vector<std::string>> split_by_category(const std::string& split) const;
  std::filesystem::path frames_dir(const Episode& e) const { return root / e.path; }
  std::filesystem::path annotations_path() const { return root / annotations_file; }
  std::vector<corpus::AnnotationRecord> load_annotations() const;
};

}  // namespace finegrain
