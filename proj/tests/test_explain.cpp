#include <cmath>
#include <random>

#include "doctest.h"
#include "finegrain/errors.hpp"
#include "finegrain/explain.hpp"
#include "finegrain/training.hpp"
#include "testutil.hpp"

using namespace finegrain;
using namespace finegrain::explain;

namespace {

JointModel tiny_model(int f3, int f2 = 4, int vocab = 12) {
  ModelConfig mc;
  mc.encoder.channels_3d = f3;
  mc.encoder.channels_2d = f2;
  mc.encoder.blocks = 2;
  mc.encoder.lstm_hidden = 8;
  mc.decoder.vocab_size = vocab;
  mc.decoder.embed_dim = 8;
  mc.decoder.hidden = 8;
  mc.classes = 4;
  mc.geometry = {8, 8, 8};
  mc.seed = 17;
  return JointModel(mc);
}

videoio::VideoClip random_clip(std::uint64_t seed, int frames = 8, int size = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  videoio::VideoClip c;
  c.frames = frames;
  c.height = c.width = size;
  c.data.resize(std::size_t(3) * frames * size * size);
  for (double& v : c.data) v = u(rng);
  return c;
}

}  // namespace

TEST_CASE("grad-cam combination against a hand computation") {
  // Two channels over a 1x1x2 map.
  Tensor a({1, 2, 1, 1, 2}), g({1, 2, 1, 1, 2});
  const double av[] = {1.0, 3.0, 2.0, 0.5}, gv[] = {0.5, 1.5, -1.0, -1.0};
  std::copy(av, av + 4, a.data());
  std::copy(gv, gv + 4, g.data());  // alpha = {1.0, -1.0}
  const auto v = grad_cam_from_maps(a, g);
  // raw = {1 - 2, 3 - 0.5} = {-1, 2.5} -> relu {0, 2.5} -> {0, 1}
  CHECK(v.values[0] == 0.0);
  CHECK(v.values[1] == 1.0);
  Tensor zero_g({1, 2, 1, 1, 2});
  CHECK(grad_cam_from_maps(a, zero_g).is_zero());
  CHECK_THROWS(grad_cam_from_maps(a, Tensor({1, 2, 1, 2, 1})));
}

TEST_CASE("class saliency shape, range and invariances") {
  JointModel m = tiny_model(4);
  const auto clip = random_clip(1);
  const auto v = grad_cam_class(m, clip, 2);
  CHECK(v.target_layer == "conv3d.last");
  const Tensor act = m.encoder().target_activation();
  CHECK(v.frames() == act.dim(2));
  CHECK(v.height() == act.dim(3));
  CHECK(v.width() == act.dim(4));
  for (double x : v.values.values()) CHECK((x >= 0.0 && x <= 1.0));
  if (!v.is_zero()) CHECK(*std::max_element(v.values.values().begin(), v.values.values().end()) == 1.0);
  for (auto* p : m.params()) CHECK(std::all_of(p->grad.values().begin(), p->grad.values().end(), [](double g) { return g == 0.0; }));

  // Adding a constant to every logit leaves the score gradient unchanged.
  for (double& b : m.classifier().linear().bias.value.values()) b += 3.25;
  const auto shifted = grad_cam_class(m, clip, 2);
  CHECK(max_abs_diff(v.values, shifted.values) <= 1e-9);
  CHECK(shifted.objective_value != v.objective_value);

  // A class whose score ignores h has zero gradient everywhere.
  auto& w = m.classifier().linear().weight.value;
  const int K = m.config().classes;
  for (int d = 0; d < w.dim(0); ++d) w[std::size_t(d) * K + 1] = 0.0;
  CHECK(grad_cam_class(m, clip, 1).is_zero());
  CHECK_THROWS_AS(grad_cam_class(m, clip, K), std::out_of_range);
  CHECK_THROWS_AS(grad_cam_class(m, random_clip(1, 8, 16), 0), ValidationError);
}

TEST_CASE("2D-only models fall back to the last 2D block") {
  JointModel m = tiny_model(0, 4);
  const auto v = grad_cam_class(m, random_clip(2), 0);
  CHECK(v.target_layer == "conv2d.last");
  CHECK(v.metadata()["fallback_2d"] == true);
  CHECK(v.frames() == m.encoder().target_activation().dim(2));
}

TEST_CASE("token saliency") {
  JointModel m = tiny_model(4);
  const auto clip = random_clip(3);
  const corpus::TokenSequence cap{{1, 5, 7, 9, 2, 0, 0}};
  const auto a = grad_cam_token(m, clip, cap, 1);
  const auto b = grad_cam_token(m, clip, cap, 3);
  CHECK(a.objective == "token:1");
  CHECK(a.objective_value < 0.0);
  CHECK(max_abs_diff(a.values, b.values) > 1e-6);
  CHECK_THROWS_AS(grad_cam_token(m, clip, cap, 0), std::out_of_range);
  CHECK_THROWS_AS(grad_cam_token(m, clip, cap, 4), std::out_of_range);
  CHECK_THROWS_AS(grad_cam_token(m, clip, cap, 5), std::out_of_range);
  CHECK_THROWS_AS(grad_cam_token(m, clip, cap, 9), std::out_of_range);

  // Constant output logits make every log-probability independent of h.
  for (double& v : m.decoder().output().weight.value.values()) v = 0.0;
  CHECK(grad_cam_token(m, clip, cap, 2).is_zero());
}

TEST_CASE("trilinear upsampling") {
  Tensor c({2, 2, 2});
  for (double& v : c.values()) v = 0.4;
  const Tensor flat = upsample_volume(c, 8, 6, 6);
  for (double v : flat.values()) CHECK(v == doctest::Approx(0.4));
  Tensor r({3, 2, 4});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : r.values()) v = u(rng);
  CHECK(max_abs_diff(upsample_volume(r, 3, 2, 4), r) == 0.0);

  // A dominant coarse peak stays within one cell after upsampling.
  for (int trial = 0; trial < 50; ++trial) {
    Tensor v({4, 3, 3});
    for (double& x : v.values()) x = 0.5 * u(rng);
    v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)] = 1.0;
    const Tensor up = upsample_volume(v, 16, 24, 24);
    const auto cmax = std::max_element(v.values().begin(), v.values().end()) - v.values().begin();
    const auto umax = std::max_element(up.values().begin(), up.values().end()) - up.values().begin();
    const int ct = int(cmax / 9), cy = int(cmax / 3 % 3), cx = int(cmax % 3);
    const int ut = int(umax / (24 * 24)) / 4, uy = int(umax / 24 % 24) / 8, ux = int(umax % 24) / 8;
    CHECK(std::abs(ct - ut) <= 1);
    CHECK(std::abs(cy - uy) <= 1);
    CHECK(std::abs(cx - ux) <= 1);
  }
}

TEST_CASE("overlay rendering and npy export") {
  const auto dir = testutil::scratch_dir("explain_out");
  const auto clip = random_clip(5, 8, 12);
  SaliencyVolume zero;
  zero.values = Tensor({2, 3, 3});
  const auto raw = clip_images(clip);
  const auto over = overlay_frames(clip, zero);
  for (std::size_t t = 0; t < raw.size(); ++t) CHECK(over[t].rgb == raw[t].rgb);

  SaliencyVolume hot = zero;
  hot.values[4] = 1.0;
  CHECK(overlay_frames(clip, hot)[0].rgb != raw[0].rgb);
  render_saliency_overlay(clip, hot, dir / "grid.png", 4);
  const Image grid = read_png(dir / "grid.png");
  CHECK(grid.width == 4 * 12 + 3 * 2);
  CHECK(grid.height == 12);

  write_npy(hot.values, dir / "v.npy");
  const auto bytes = testutil::read_text(dir / "v.npy");
  CHECK(bytes.substr(1, 5) == "NUMPY");
  const std::size_t header_end = bytes.find('\n') + 1;
  CHECK(header_end % 64 == 0);
  CHECK(bytes.find("'shape': (2, 3, 3)") != std::string::npos);
  const Tensor back = read_npy(dir / "v.npy");
  CHECK(back.shape() == hot.values.shape());
  CHECK(max_abs_diff(back, hot.values) == 0.0);
  Tensor vec({5});
  write_npy(vec, dir / "w.npy");
  CHECK(testutil::read_text(dir / "w.npy").find("(5,)") != std::string::npos);
  CHECK(read_npy(dir / "w.npy").shape() == std::vector<int>{5});
}
