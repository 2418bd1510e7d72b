#pragma once

// Deterministic synthetic videos of simple shapes performing scripted motions,
// labelled at three granularities (group, category, caption).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "finegrain/image.hpp"
#include "json.hpp"

namespace finegrain::toyworld {

enum class ShapeKind { Square, Disk, Triangle, HBar, VBar, Ring, Tongs };

enum class Motion {
  LeftToRight,
  RightToLeft,
  LiftThenDrop,
  PretendMove,  // jitter around the start point, net displacement zero
  PushUp,
  PushDown,
  MoveCloser,  // first object approaches the (stationary) second
  MoveAway,
  UseTool,         // tool reaches the prop and carries it up
  PretendUseTool,  // tool hovers over the prop and leaves without it
  FailUseTool,     // prop is lifted briefly and falls back
  OtherThings,     // tool wanders, never reaching the prop
};

struct ObjectSpec {
  std::string name;  // placeholder text, e.g. "a red square"
  ShapeKind shape = ShapeKind::Square;
  std::array<std::uint8_t, 3> color{255, 255, 255};
};

struct ActionSpec {
  Motion motion = Motion::LeftToRight;
  int category = 0;
  int group = 0;
  std::string template_text;
  // For templates without slots: objects that may play the acting role.
  std::vector<int> actor_choices;
};

struct ToySpec {
  std::string name = "toy";
  int height = 64;
  int width = 64;
  double fps = 12.0;
  double duration_s = 2.0;
  double object_scale = 0.14;  // half-extent of an object relative to min(H, W)
  int noise = 6;                // per-pixel background noise amplitude
  std::vector<ObjectSpec> objects;
  // Objects eligible for placeholder slots (all objects when empty).
  std::vector<int> slot_objects;
  std::vector<ActionSpec> actions;
  int prop_object = -1;  // object manipulated by the tool motions
  int distractors = 0;   // stationary objects unrelated to the action

  int frame_count() const;
  int category_count() const { return static_cast<int>(actions.size()); }
  int group_count() const;
  int arity(int action) const;
  corpus::LabelHierarchy hierarchy() const;
  std::vector<int> slot_pool() const;
  // Throws ConfigError when the label ladder or templates are inconsistent.
  void validate() const;
  nlohmann::json to_json() const;
  std::string hash() const;
};

// Eight categories in four groups over twelve coloured shapes.
ToySpec default_toy_spec();
// Thirteen-category kitchen-utensil analog (use / pretend / fail per tool plus
// a fallback class) with one distractor object per clip.
ToySpec kitchen_toy_spec();

struct ObjectTrack {
  int object = 0;
  double half_extent = 0.0;
  std::vector<std::array<double, 2>> centers;  // (x, y) per frame, in pixels
};

struct ToyEpisode {
  std::vector<Image> frames;
  corpus::AnnotationRecord annotation;
  std::vector<ObjectTrack> tracks;  // tracks[0] is the acting object
  int background = 0;               // background grey level
};

// object_ids fill the template's slots in order and must be distinct.
ToyEpisode generate_toy_video(const ToySpec& spec, int action_id, const std::vector<int>& object_ids,
                              std::uint64_t seed, const std::string& video_id = "");

struct CorpusOptions {
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  // Equal class counts instead of independent uniform draws.
  bool balanced = false;
};

// Writes <out_dir>/<video_id>/<frame>.png, annotations.jsonl and
// manifest.json; returns the manifest path.
std::filesystem::path generate_toy_corpus(const ToySpec& spec, int n, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, const CorpusOptions& options = {});

}  // namespace finegrain::toyworld
