#include "finegrain/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "finegrain/errors.hpp"

namespace finegrain {

using nlohmann::json;

json Manifest::to_json() const {
  json j;
  j["format"] = "finegrain-manifest";
  j["version"] = 1;
  j["name"] = name;
  j["spec_hash"] = spec_hash;
  j["seed"] = seed;
  j["fps"] = fps;
  j["frame_count"] = frame_count;
  j["hierarchy"] = {{"group_of", hierarchy.table()}, {"groups", hierarchy.group_count()}};
  j["category_templates"] = category_templates;
  j["category_counts"] = category_counts;
  j["annotations"] = annotations_file;
  json eps = json::array();
  for (const auto& e : episodes) {
    eps.push_back({{"id", e.id}, {"path", e.path}, {"category", e.category}, {"group", e.group}, {"split", e.split}});
  }
  j["episodes"] = eps;
  j["splits"] = splits;
  j["spec"] = spec;
  return j;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  try {
    if (j.at("format").get<std::string>() != "finegrain-manifest") throw ParseError("unknown manifest format");
    m.name = j.at("name").get<std::string>();
    m.spec_hash = j.at("spec_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.fps = j.at("fps").get<double>();
    m.frame_count = j.at("frame_count").get<int>();
    m.hierarchy = corpus::LabelHierarchy(j.at("hierarchy").at("group_of").get<std::vector<int>>(),
                                         j.at("hierarchy").at("groups").get<int>());
    m.category_templates = j.at("category_templates").get<std::vector<std::string>>();
    m.category_counts = j.at("category_counts").get<std::vector<int>>();
    m.annotations_file = j.at("annotations").get<std::string>();
    for (const auto& e : j.at("episodes")) {
      m.episodes.push_back(Episode{e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                                   e.at("category").get<int>(), e.at("group").get<int>(),
                                   e.at("split").get<std::string>()});
    }
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
    m.spec = j.value("spec", json::object());
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad manifest field: ") + e.what());
  }
  m.root = path.parent_path();
  return m;
}

const Manifest::Episode& Manifest::episode(const std::string& id) const {
  for (const auto& e : episodes) {
    if (e.id == id) return e;
  }
  throw std::out_of_range("unknown video id " + id);
}

std::vector<const Manifest::Episode*> Manifest::split_episodes(const std::string& split) const {
  auto it = splits.find(split);
  if (it == splits.end()) throw std::out_of_range("manifest has no split '" + split + "'");
  std::map<std::string, const Episode*> by_id;
  for (const auto& e : episodes) by_id[e.id] = &e;
  std::vector<const Episode*> out;
  for (const auto& id : it->second) {
    auto found = by_id.find(id);
    if (found == by_id.end()) throw ValidationError("split references unknown video " + id);
    out.push_back(found->second);
  }
  return out;
}

std::map<int, std::vector<std::string>> Manifest::split_by_category(const std::string& split) const {
  std::map<int, std::vector<std::string>> out;
  for (const Episode* e : split_episodes(split)) out[e->category].push_back(e->id);
  return out;
}

std::vector<corpus::AnnotationRecord> Manifest::load_annotations() const {
  return corpus::load_annotations(annotations_path());
}

}  // namespace finegrain
