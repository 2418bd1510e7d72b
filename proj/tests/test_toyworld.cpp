#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "finegrain/errors.hpp"
#include "finegrain/manifest.hpp"
#include "finegrain/toyworld.hpp"
#include "testutil.hpp"

using namespace finegrain;
using namespace finegrain::toyworld;

namespace {

// Centroid of pixels that differ from the flat background.
std::array<double, 2> pixel_centroid(const Image& im, int background) {
  double sx = 0.0, sy = 0.0, n = 0.0;
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      const auto* p = im.pixel(x, y);
      const int d = std::abs(p[0] - background) + std::abs(p[1] - background) + std::abs(p[2] - background);
      if (d > 30) sx += x, sy += y, n += 1.0;
    }
  }
  REQUIRE(n > 0.0);
  return {sx / n, sy / n};
}

ToySpec quiet_spec() {
  auto s = default_toy_spec();
  s.noise = 0;
  return s;
}

// Frame-difference features pooled onto a coarse grid over four time segments.
std::vector<double> motion_features(const std::vector<Image>& frames) {
  const int G = 8, S = 4;
  const int T = static_cast<int>(frames.size());
  const int W = frames[0].width, H = frames[0].height;
  std::vector<double> f(std::size_t(S) * G * G, 0.0);
  for (int t = 1; t < T; ++t) {
    const int seg = (t - 1) * S / (T - 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += std::abs(frames[t].pixel(x, y)[c] - frames[t - 1].pixel(x, y)[c]);
        f[(std::size_t(seg) * G + y * G / H) * G + x * G / W] += d;
      }
  }
  return f;
}

}  // namespace

TEST_CASE("toy specs validate and describe their label ladders") {
  const auto s = default_toy_spec();
  s.validate();
  CHECK(s.category_count() == 8);
  CHECK(s.group_count() == 4);
  CHECK(s.frame_count() == 24);
  CHECK(s.hierarchy().group_of(3) == 1);
  CHECK(s.arity(6) == 2);
  CHECK(s.hash() == default_toy_spec().hash());

  const auto k = kitchen_toy_spec();
  k.validate();
  CHECK(k.category_count() == 13);
  CHECK(k.frame_count() == 48);

  auto bad = s;
  bad.actions[0].template_text = "Moving [something] next to [something]";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  for (auto& a : bad.actions) a.group = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("frame count is round(fps * duration)") {
  auto s = quiet_spec();
  s.height = s.width = 32;
  for (double dur : {0.5, 1.0, 1.3, 2.0}) {
    s.duration_s = dur;
    const auto ep = generate_toy_video(s, 0, {0}, 1);
    CHECK(ep.frames.size() == std::size_t(std::lround(12.0 * dur)));
  }
}

TEST_CASE("generation is deterministic and validates ids") {
  const auto s = default_toy_spec();
  const auto a = generate_toy_video(s, 6, {1, 4}, 42);
  const auto b = generate_toy_video(s, 6, {1, 4}, 42);
  CHECK(a.frames == b.frames);
  const auto c = generate_toy_video(s, 6, {1, 4}, 43);
  CHECK(a.frames != c.frames);
  CHECK(a.annotation.full_caption == "Moving a red circle closer to a green circle");
  CHECK(a.annotation.simplified_caption.value() == "Moving circle closer to circle");

  CHECK_THROWS(generate_toy_video(s, 8, {0}, 1));
  CHECK_THROWS(generate_toy_video(s, 0, {12}, 1));
  CHECK_THROWS(generate_toy_video(s, 0, {0, 1}, 1));
  CHECK_THROWS(generate_toy_video(s, 6, {2, 2}, 1));
}

TEST_CASE("left-to-right centroid strictly increases") {
  const auto s = quiet_spec();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ep = generate_toy_video(s, 0, {int(seed % 12)}, seed);
    double prev = -1.0;
    for (const auto& f : ep.frames) {
      const double x = pixel_centroid(f, ep.background)[0];
      CHECK(x > prev);
      prev = x;
    }
  }
}

TEST_CASE("pretend motion has near-zero net displacement") {
  const auto s = quiet_spec();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ep = generate_toy_video(s, 3, {int(seed % 12)}, seed);
    const auto a = pixel_centroid(ep.frames.front(), ep.background);
    const auto b = pixel_centroid(ep.frames.back(), ep.background);
    CHECK(std::hypot(b[0] - a[0], b[1] - a[1]) < 0.05 * s.width);
    // It still moves in between, so a single frame cannot tell it apart.
    double travel = 0.0;
    for (std::size_t t = 1; t < ep.frames.size(); ++t)
      travel = std::max(travel, std::abs(pixel_centroid(ep.frames[t], ep.background)[0] - a[0]) +
                                    std::abs(pixel_centroid(ep.frames[t], ep.background)[1] - a[1]));
    CHECK(travel > 1.0);
  }
}

TEST_CASE("corpus generation: counts, splits and determinism") {
  auto s = default_toy_spec();
  s.height = s.width = 16;
  s.duration_s = 0.5;
  const auto dir = testutil::scratch_dir("toycorpus");
  const auto path = generate_toy_corpus(s, 100, 7, dir / "a");
  const auto m = Manifest::load(path);
  REQUIRE(m.episodes.size() == 100);

  std::map<int, int> recount;
  for (const auto& e : m.episodes) ++recount[e.category];
  for (int k = 0; k < 8; ++k) {
    CHECK(recount[k] == m.category_counts[k]);
    CHECK(recount[k] >= 6);
    CHECK(recount[k] <= 19);
  }
  for (int k = 0; k < 8; ++k) {
    int tr = 0, va = 0;
    for (const auto& e : m.episodes) {
      if (e.category != k) continue;
      tr += e.split == "train";
      va += e.split == "val";
      CHECK(e.group == s.hierarchy().group_of(k));
    }
    CHECK(std::abs(tr - 0.70 * recount[k]) <= 1.0);
    CHECK(std::abs(va - 0.15 * recount[k]) <= 1.0);
  }
  const auto recs = m.load_annotations();
  CHECK(recs.size() == 100);
  CHECK(std::filesystem::exists(m.frames_dir(m.episodes[0]) / "0.png"));

  const auto again = generate_toy_corpus(s, 100, 7, dir / "b");
  CHECK(testutil::read_text(path) == testutil::read_text(again));

  const auto empty = Manifest::load(generate_toy_corpus(s, 0, 7, dir / "e"));
  CHECK(empty.episodes.empty());
}

TEST_CASE("category is recoverable from frame differences") {
  auto s = default_toy_spec();
  s.height = s.width = 32;
  std::mt19937_64 rng(9);
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 240; ++i) {
    const int a = i % 8;
    std::vector<int> pool(12);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(s.arity(a));
    feats.push_back(motion_features(generate_toy_video(s, a, pool, rng()).frames));
    labels.push_back(a);
  }
  const std::size_t D = feats[0].size();
  std::vector<std::vector<double>> centroid(8, std::vector<double>(D, 0.0));
  std::vector<int> counts(8, 0);
  for (int i = 0; i < 160; ++i) {
    ++counts[labels[i]];
    for (std::size_t d = 0; d < D; ++d) centroid[labels[i]][d] += feats[i][d];
  }
  for (int k = 0; k < 8; ++k)
    for (auto& v : centroid[k]) v /= counts[k];
  int correct = 0;
  for (int i = 160; i < 240; ++i) {
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 8; ++k) {
      double dist = 0.0;
      for (std::size_t d = 0; d < D; ++d) dist += (feats[i][d] - centroid[k][d]) * (feats[i][d] - centroid[k][d]);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += best == labels[i];
  }
  INFO("nearest-centroid accuracy " << correct / 80.0);
  CHECK(correct / 80.0 > 1.0 / 8.0 + 0.1);
}
