#include "finegrain/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "finegrain/errors.hpp"
#include "finegrain/manifest.hpp"
#include "finegrain/seeding.hpp"
#include "finegrain/tensor.hpp"

namespace finegrain::toyworld {

using nlohmann::json;

namespace {

constexpr int kSupersample = 4;

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::HBar: return "hbar";
    case ShapeKind::VBar: return "vbar";
    case ShapeKind::Ring: return "ring";
    case ShapeKind::Tongs: return "tongs";
  }
  return "?";
}

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::LeftToRight: return "left_to_right";
    case Motion::RightToLeft: return "right_to_left";
    case Motion::LiftThenDrop: return "lift_then_drop";
    case Motion::PretendMove: return "pretend_move";
    case Motion::PushUp: return "push_up";
    case Motion::PushDown: return "push_down";
    case Motion::MoveCloser: return "move_closer";
    case Motion::MoveAway: return "move_away";
    case Motion::UseTool: return "use_tool";
    case Motion::PretendUseTool: return "pretend_use_tool";
    case Motion::FailUseTool: return "fail_use_tool";
    case Motion::OtherThings: return "other_things";
  }
  return "?";
}

bool inside(ShapeKind shape, double dx, double dy, double r) {
  switch (shape) {
    case ShapeKind::Square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::Disk: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Triangle: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
    case ShapeKind::HBar: return std::abs(dx) <= 1.4 * r && std::abs(dy) <= 0.4 * r;
    case ShapeKind::VBar: return std::abs(dx) <= 0.35 * r && std::abs(dy) <= 1.4 * r;
    case ShapeKind::Ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case ShapeKind::Tongs: {
      const double ax = std::abs(dx);
      return ax >= 0.3 * r && ax <= 0.7 * r && std::abs(dy) <= 1.3 * r;
    }
  }
  return false;
}

// Anti-aliased draw: per-pixel coverage from a regular subsample grid.
void draw(Image& img, const ObjectSpec& obj, double cx, double cy, double r) {
  const double reach = 1.5 * r + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = x + (sx + 0.5) / kSupersample;
          const double py = y + (sy + 0.5) / kSupersample;
          if (inside(obj.shape, px - cx, py - cy, r)) ++hits;
        }
      }
      if (hits == 0) continue;
      const double a = double(hits) / (kSupersample * kSupersample);
      auto* p = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<std::uint8_t>(std::lround((1.0 - a) * p[c] + a * obj.color[c]));
      }
    }
  }
}

using Path = std::vector<std::array<double, 2>>;

double lerp(double a, double b, double u) { return a + (b - a) * u; }

struct Rendered {
  Path actor;
  Path second;  // reference object or prop; empty when unused
};

Rendered plan_motion(Motion motion, int frames, double W, double H, double r, std::mt19937_64& rng) {
  auto rand = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  Rendered out;
  out.actor.resize(frames);
  auto u_at = [&](int f) { return frames > 1 ? double(f) / (frames - 1) : 0.0; };

  switch (motion) {
    case Motion::LeftToRight:
    case Motion::RightToLeft: {
      const double y = rand(0.35, 0.65) * H;
      double xa = rand(0.2, 0.3) * W, xb = rand(0.7, 0.8) * W;
      if (motion == Motion::RightToLeft) std::swap(xa, xb);
      for (int f = 0; f < frames; ++f) out.actor[f] = {lerp(xa, xb, u_at(f)), y};
      break;
    }
    case Motion::LiftThenDrop: {
      const double x = rand(0.3, 0.7) * W;
      const double y0 = rand(0.62, 0.72) * H;
      const double lift = rand(0.3, 0.38) * H;
      // The drop lands in the middle third so any long sub-window still shows it.
      const double top = rand(0.38, 0.45);
      for (int f = 0; f < frames; ++f) {
        const double u = u_at(f);
        double y = y0;
        if (u < top) {
          y = y0 - lift * u / top;
        } else if (u < top + 0.1) {
          y = y0 - lift + lift * (u - top) / 0.1;
        }
        out.actor[f] = {x, y};
      }
      break;
    }
    case Motion::PretendMove: {
      const double x0 = rand(0.3, 0.7) * W, y0 = rand(0.35, 0.65) * H;
      const double amp = rand(0.02, 0.035) * W;
      const int cycles = 2 + static_cast<int>(rand(0.0, 2.0));
      for (int f = 0; f < frames; ++f) {
        const double s = std::sin(2.0 * std::numbers::pi * cycles * u_at(f));
        out.actor[f] = {x0 + amp * (std::abs(s) < 1e-12 ? 0.0 : s), y0};
      }
      break;
    }
    case Motion::PushUp:
    case Motion::PushDown: {
      const double x = rand(0.3, 0.7) * W;
      double ya = rand(0.68, 0.75) * H;
      double yb = ya - rand(0.35, 0.42) * H;
      if (motion == Motion::PushDown) {
        ya = H - ya;
        yb = H - yb;
      }
      for (int f = 0; f < frames; ++f) out.actor[f] = {x, lerp(ya, yb, u_at(f))};
      break;
    }
    case Motion::MoveCloser:
    case Motion::MoveAway: {
      const double y = rand(0.4, 0.6) * H;
      const bool mirrored = rand(0.0, 1.0) < 0.5;
      const double xb = rand(0.76, 0.8) * W;
      double xa = rand(0.16, 0.2) * W, xz = rand(0.46, 0.5) * W;
      if (motion == Motion::MoveAway) std::swap(xa, xz);
      auto mx = [&](double x) { return mirrored ? W - x : x; };
      out.second.resize(frames);
      for (int f = 0; f < frames; ++f) {
        out.actor[f] = {mx(lerp(xa, xz, u_at(f))), y};
        out.second[f] = {mx(xb), y};
      }
      break;
    }
    case Motion::UseTool:
    case Motion::PretendUseTool:
    case Motion::FailUseTool:
    case Motion::OtherThings: {
      const double xp = rand(0.42, 0.58) * W;
      const double yp = 0.74 * H;
      const bool mirrored = rand(0.0, 1.0) < 0.5;
      const double xs = mirrored ? rand(0.75, 0.85) * W : rand(0.15, 0.25) * W;
      const double ys = rand(0.18, 0.28) * H;
      const double rise = rand(0.32, 0.38) * H;
      const double hover = motion == Motion::PretendUseTool ? 2.4 * r : 1.6 * r;
      out.second.resize(frames);
      for (int f = 0; f < frames; ++f) {
        const double u = u_at(f);
        std::array<double, 2> tool{xp, yp - hover};
        std::array<double, 2> prop{xp, yp};
        if (motion == Motion::OtherThings) {
          tool = {xs + (mirrored ? -1.0 : 1.0) * 0.15 * W * std::sin(std::numbers::pi * u),
                  ys + 0.08 * H * std::sin(2.0 * std::numbers::pi * u)};
        } else if (u < 0.4) {
          const double a = u / 0.4;
          tool = {lerp(xs, xp, a), lerp(ys, yp - hover, a)};
        } else {
          const double a = std::min(1.0, (u - 0.4) / 0.4);
          tool[1] = yp - hover - rise * a;
          if (motion == Motion::UseTool) {
            prop[1] = yp - rise * a;
          } else if (motion == Motion::FailUseTool) {
            // Prop follows for the first part of the lift, then drops back.
            if (u < 0.6) {
              prop[1] = yp - rise * a;
            } else if (u < 0.7) {
              const double held = rise * 0.5;
              prop[1] = yp - held + held * (u - 0.6) / 0.1;
            }
          }
        }
        out.actor[f] = tool;
        out.second[f] = prop;
      }
      break;
    }
  }
  return out;
}

bool is_tool_motion(Motion m) {
  return m == Motion::UseTool || m == Motion::PretendUseTool || m == Motion::FailUseTool ||
         m == Motion::OtherThings;
}

}  // namespace

// ---------------------------------------------------------------- ToySpec

int ToySpec::frame_count() const { return static_cast<int>(std::lround(fps * duration_s)); }

int ToySpec::group_count() const {
  int g = 0;
  for (const auto& a : actions) g = std::max(g, a.group + 1);
  return g;
}

int ToySpec::arity(int action) const { return corpus::count_slots(actions.at(action).template_text); }

corpus::LabelHierarchy ToySpec::hierarchy() const {
  std::vector<int> table(actions.size());
  for (const auto& a : actions) table.at(a.category) = a.group;
  return corpus::LabelHierarchy(std::move(table), group_count());
}

std::vector<int> ToySpec::slot_pool() const {
  if (!slot_objects.empty()) return slot_objects;
  std::vector<int> all(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

void ToySpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("toy frames must be at least 8x8");
  if (!(fps > 0) || !(duration_s > 0) || frame_count() < 1) throw ConfigError("toy clip needs at least one frame");
  if (objects.empty()) throw ConfigError("toy spec has no objects");
  std::set<int> categories;
  std::vector<int> per_group(group_count(), 0);
  for (const auto& a : actions) {
    if (a.category < 0 || a.group < 0) throw ConfigError("negative label id in toy spec");
    if (!categories.insert(a.category).second) throw ConfigError("duplicate toy category id");
    ++per_group[a.group];
    const int slots = corpus::count_slots(a.template_text);
    const bool two = a.motion == Motion::MoveCloser || a.motion == Motion::MoveAway;
    const int expected = is_tool_motion(a.motion) ? 0 : (two ? 2 : 1);
    if (slots != expected) {
      throw ConfigError("template '" + a.template_text + "' has " + std::to_string(slots) + " slots, motion needs " +
                        std::to_string(expected));
    }
    if (is_tool_motion(a.motion)) {
      if (a.actor_choices.empty()) throw ConfigError("tool motion without actor choices");
      if (prop_object < 0 || prop_object >= static_cast<int>(objects.size())) {
        throw ConfigError("tool motion needs a prop object");
      }
    }
    for (int o : a.actor_choices) {
      if (o < 0 || o >= static_cast<int>(objects.size())) throw ConfigError("actor choice out of range");
    }
  }
  if (static_cast<int>(categories.size()) != category_count() ||
      (!categories.empty() && *categories.rbegin() != category_count() - 1)) {
    throw ConfigError("toy categories must be 0..K-1");
  }
  if (group_count() < 2) throw ConfigError("toy spec needs at least two groups");
  for (int g = 0; g < group_count(); ++g) {
    if (per_group[g] < 2) throw ConfigError("group " + std::to_string(g) + " has fewer than two categories");
  }
  if (static_cast<int>(slot_pool().size()) < 2) throw ConfigError("need at least two slot objects");
}

json ToySpec::to_json() const {
  json j;
  j["name"] = name;
  j["height"] = height;
  j["width"] = width;
  j["fps"] = fps;
  j["duration_s"] = duration_s;
  j["object_scale"] = object_scale;
  j["noise"] = noise;
  j["prop_object"] = prop_object;
  j["distractors"] = distractors;
  j["slot_objects"] = slot_objects;
  json objs = json::array();
  for (const auto& o : objects) {
    objs.push_back({{"name", o.name}, {"shape", shape_name(o.shape)}, {"color", o.color}});
  }
  j["objects"] = objs;
  json acts = json::array();
  for (const auto& a : actions) {
    acts.push_back({{"motion", motion_name(a.motion)},
                    {"category", a.category},
                    {"group", a.group},
                    {"template", a.template_text},
                    {"actor_choices", a.actor_choices}});
  }
  j["actions"] = acts;
  return j;
}

std::string ToySpec::hash() const {
  const std::string text = to_json().dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_bytes(text.data(), text.size())));
  return buf;
}

ToySpec default_toy_spec() {
  ToySpec s;
  s.name = "toy";
  const std::vector<std::pair<std::string, std::array<std::uint8_t, 3>>> colors = {
      {"red", {220, 40, 40}}, {"green", {40, 200, 60}}, {"blue", {50, 90, 235}}, {"yellow", {235, 215, 40}}};
  const std::vector<std::pair<std::string, ShapeKind>> shapes = {
      {"square", ShapeKind::Square}, {"circle", ShapeKind::Disk}, {"triangle", ShapeKind::Triangle}};
  for (const auto& [cname, rgb] : colors) {
    for (const auto& [sname, kind] : shapes) s.objects.push_back({"a " + cname + " " + sname, kind, rgb});
  }
  s.actions = {
      {Motion::LeftToRight, 0, 0, "Moving [something] from left to right", {}},
      {Motion::RightToLeft, 1, 0, "Moving [something] from right to left", {}},
      {Motion::LiftThenDrop, 2, 1, "Lifting [something] up then letting it drop", {}},
      {Motion::PretendMove, 3, 1, "Pretending to move [something]", {}},
      {Motion::PushUp, 4, 2, "Pushing [something] up", {}},
      {Motion::PushDown, 5, 2, "Pushing [something] down", {}},
      {Motion::MoveCloser, 6, 3, "Moving [something] closer to [something]", {}},
      {Motion::MoveAway, 7, 3, "Moving [something] away from [something]", {}},
  };
  return s;
}

ToySpec kitchen_toy_spec() {
  ToySpec s;
  s.name = "kitchen";
  s.duration_s = 4.0;
  s.distractors = 1;
  s.objects = {
      {"a fork", ShapeKind::VBar, {215, 215, 225}},   {"a spoon", ShapeKind::Ring, {230, 190, 90}},
      {"a knife", ShapeKind::HBar, {170, 170, 250}},  {"tongs", ShapeKind::Tongs, {225, 120, 60}},
      {"an egg", ShapeKind::Disk, {250, 240, 200}},   {"a cup", ShapeKind::Square, {90, 200, 90}},
      {"a plate", ShapeKind::Disk, {200, 80, 80}},
  };
  s.prop_object = 4;
  s.slot_objects = {5, 6};
  struct Tool {
    int object;
    std::string use, pretend, fail;
  };
  const std::vector<Tool> tools = {
      {0, "Using a fork to pick something up", "Pretending to use a fork to pick something up",
       "Trying but failing to pick something up with a fork"},
      {1, "Using a spoon to pick something up", "Pretending to use a spoon to pick something up",
       "Trying but failing to pick something up with a spoon"},
      {2, "Using a knife to cut something", "Pretending to use a knife to cut something",
       "Trying but failing to cut something with a knife"},
      {3, "Using tongs to pick something up", "Pretending to use tongs to pick something up",
       "Trying but failing to pick something up with tongs"},
  };
  // Groups are the three manipulation outcomes; the fallback joins "failing".
  int k = 0;
  for (const auto& t : tools) {
    s.actions.push_back({Motion::UseTool, k++, 0, t.use, {t.object}});
    s.actions.push_back({Motion::PretendUseTool, k++, 1, t.pretend, {t.object}});
    s.actions.push_back({Motion::FailUseTool, k++, 2, t.fail, {t.object}});
  }
  s.actions.push_back({Motion::OtherThings, k++, 2, "Doing other things", {0, 1, 2, 3}});
  return s;
}

// -------------------------------------------------------------- episodes

ToyEpisode generate_toy_video(const ToySpec& spec, int action_id, const std::vector<int>& object_ids,
                              std::uint64_t seed, const std::string& video_id) {
  spec.validate();
  if (action_id < 0 || action_id >= spec.category_count()) {
    throw std::out_of_range("toy action id " + std::to_string(action_id) + " out of range");
  }
  const ActionSpec& action = spec.actions[action_id];
  const int slots = spec.arity(action_id);
  if (static_cast<int>(object_ids.size()) != slots) {
    throw std::invalid_argument("action needs " + std::to_string(slots) + " objects, got " +
                                std::to_string(object_ids.size()));
  }
  for (int o : object_ids) {
    if (o < 0 || o >= static_cast<int>(spec.objects.size())) throw std::out_of_range("toy object id out of range");
  }
  if (slots == 2 && object_ids[0] == object_ids[1]) throw std::invalid_argument("slot objects must be distinct");

  std::mt19937_64 rng(seed);
  const int frames = spec.frame_count();
  const double W = spec.width, H = spec.height;
  const double r = spec.object_scale * std::min(W, H);

  int actor = slots > 0 ? object_ids[0] : -1;
  if (actor < 0) {
    actor = action.actor_choices[std::uniform_int_distribution<std::size_t>(0, action.actor_choices.size() - 1)(rng)];
  }
  const Rendered plan = plan_motion(action.motion, frames, W, H, r, rng);

  ToyEpisode ep;
  ep.tracks.push_back(ObjectTrack{actor, r, plan.actor});
  if (!plan.second.empty()) {
    const int second = slots == 2 ? object_ids[1] : spec.prop_object;
    const double sr = slots == 2 ? r : 0.7 * r;
    ep.tracks.push_back(ObjectTrack{second, sr, plan.second});
  }

  // Distractors: stationary, drawn from objects not already in the scene.
  std::vector<int> pool;
  for (int o = 0; o < static_cast<int>(spec.objects.size()); ++o) {
    const bool used = std::any_of(ep.tracks.begin(), ep.tracks.end(), [&](const auto& t) { return t.object == o; });
    const bool is_tool = std::any_of(spec.actions.begin(), spec.actions.end(), [&](const ActionSpec& a) {
      return std::find(a.actor_choices.begin(), a.actor_choices.end(), o) != a.actor_choices.end();
    });
    if (!used && !is_tool && o != spec.prop_object) pool.push_back(o);
  }
  for (int d = 0; d < spec.distractors && !pool.empty(); ++d) {
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const int obj = pool[pick];
    pool.erase(pool.begin() + static_cast<long>(pick));
    const bool left = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    const double x = (left ? std::uniform_real_distribution<double>(0.08, 0.2)(rng)
                           : std::uniform_real_distribution<double>(0.8, 0.92)(rng)) * W;
    const double y = std::uniform_real_distribution<double>(0.8, 0.9)(rng) * H;
    ep.tracks.push_back(ObjectTrack{obj, 0.8 * r, Path(frames, {x, y})});
  }

  ep.background = std::uniform_int_distribution<int>(20, 80)(rng);
  Image base(spec.width, spec.height, static_cast<std::uint8_t>(ep.background));
  if (spec.noise > 0) {
    std::uniform_int_distribution<int> noise(-spec.noise, spec.noise);
    for (auto& v : base.rgb) v = static_cast<std::uint8_t>(std::clamp(ep.background + noise(rng), 0, 255));
  }

  // Draw order: distractors, then the second object, then the actor on top.
  std::vector<std::size_t> order;
  for (std::size_t i = ep.tracks.size(); i-- > 0;) order.push_back(i);
  ep.frames.reserve(frames);
  for (int f = 0; f < frames; ++f) {
    Image img = base;
    for (std::size_t i : order) {
      const auto& t = ep.tracks[i];
      draw(img, spec.objects[t.object], t.centers[f][0], t.centers[f][1], t.half_extent);
    }
    ep.frames.push_back(std::move(img));
  }

  auto& rec = ep.annotation;
  rec.video_id = video_id.empty() ? spec.name + "_a" + std::to_string(action_id) + "_s" + std::to_string(seed)
                                  : video_id;
  rec.action_category_id = action.category;
  rec.action_group_id = action.group;
  rec.template_text = action.template_text;
  for (int o : object_ids) rec.placeholders.push_back(spec.objects[o].name);
  rec.full_caption = corpus::expand_template(rec.template_text, rec.placeholders);
  rec.simplified_caption = corpus::simplified_caption(rec);
  return ep;
}

// ---------------------------------------------------------------- corpus

std::filesystem::path generate_toy_corpus(const ToySpec& spec, int n, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, const CorpusOptions& options) {
  spec.validate();
  if (n < 0) throw std::invalid_argument("corpus size must be non-negative");
  if (options.train_fraction < 0 || options.val_fraction < 0 || options.train_fraction + options.val_fraction > 1.0) {
    throw ConfigError("invalid split fractions");
  }
  std::filesystem::create_directories(out_dir);
  const int K = spec.category_count();

  std::vector<int> labels(n);
  if (options.balanced) {
    for (int i = 0; i < n; ++i) labels[i] = i % K;
    std::mt19937_64 rng(derive_seed({seed, 0xBA1}));
    std::shuffle(labels.begin(), labels.end(), rng);
  } else {
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng(derive_seed({seed, static_cast<std::uint64_t>(i), 0x1AB}));
      labels[i] = std::uniform_int_distribution<int>(0, K - 1)(rng);
    }
  }

  Manifest m;
  m.name = spec.name;
  m.spec_hash = spec.hash();
  m.seed = seed;
  m.fps = spec.fps;
  m.frame_count = spec.frame_count();
  m.hierarchy = spec.hierarchy();
  for (const auto& a : spec.actions) m.category_templates.push_back(a.template_text);
  m.category_counts.assign(K, 0);
  m.spec = spec.to_json();

  const auto pool = spec.slot_pool();
  std::vector<corpus::AnnotationRecord> records;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int action = labels[i];
    std::mt19937_64 rng(derive_seed({seed, static_cast<std::uint64_t>(i), 0x0B1}));
    std::vector<int> candidates = pool;
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::vector<int> objects(candidates.begin(), candidates.begin() + spec.arity(action));

    char id[64];
    std::snprintf(id, sizeof id, "%s_%06d", spec.name.c_str(), i);
    auto ep = generate_toy_video(spec, action, objects, derive_seed({seed, static_cast<std::uint64_t>(i), 0xE5}), id);
    const std::filesystem::path dir = out_dir / id;
    std::filesystem::create_directories(dir);
    for (std::size_t f = 0; f < ep.frames.size(); ++f) write_png(dir / (std::to_string(f) + ".png"), ep.frames[f]);
    m.episodes.push_back(Manifest::Episode{id, id, action, spec.actions[action].group, ""});
    ++m.category_counts[action];
    records.push_back(std::move(ep.annotation));
  }

  // Stratified split: each category's episodes are shuffled and cut 70/15/15.
  std::vector<std::vector<int>> by_class(K);
  for (int i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  for (int c = 0; c < K; ++c) {
    auto& members = by_class[c];
    std::mt19937_64 rng(derive_seed({seed, static_cast<std::uint64_t>(c), 0x5B1}));
    std::shuffle(members.begin(), members.end(), rng);
    const int nc = static_cast<int>(members.size());
    const int ntrain = static_cast<int>(std::lround(options.train_fraction * nc));
    const int nval = std::min(nc - ntrain, static_cast<int>(std::lround(options.val_fraction * nc)));
    for (int j = 0; j < nc; ++j) {
      m.episodes[members[j]].split = j < ntrain ? "train" : (j < ntrain + nval ? "val" : "test");
    }
  }
  m.splits = {{"train", {}}, {"val", {}}, {"test", {}}};
  for (const auto& e : m.episodes) m.splits[e.split].push_back(e.id);

  corpus::save_annotations(out_dir / m.annotations_file, records);
  const auto manifest_path = out_dir / "manifest.json";
  m.save(manifest_path);
  return manifest_path;
}

}  // namespace finegrain::toyworld
