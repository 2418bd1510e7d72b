#include <cmath>
#include <set>

#include "doctest.h"
#include "finegrain/errors.hpp"
#include "finegrain/toyworld.hpp"
#include "finegrain/training.hpp"
#include "finegrain/transfer.hpp"
#include "testutil.hpp"
#include "transfer_fixtures.hpp"

using namespace finegrain;
using namespace finegrain::transfer;

namespace {

const std::filesystem::path& toy_manifest() {
  static const std::filesystem::path path = [] {
    auto spec = toyworld::default_toy_spec();
    spec.height = spec.width = 16;
    spec.duration_s = 1.0;
    toyworld::CorpusOptions opt;
    opt.balanced = true;
    return toyworld::generate_toy_corpus(spec, 64, 5, testutil::scratch_dir("transfer_corpus"), opt);
  }();
  return path;
}

JointModel tiny_model(int frames) {
  training::TrainConfig c;
  c.channels_3d = c.channels_2d = 4;
  c.blocks = 2;
  c.lstm_hidden = 8;
  c.frames = frames;
  c.resize = 16;
  c.crop = 8;
  c.seed = 2;
  return JointModel(training::make_model_config(c, 8, corpus::build_vocabulary({})));
}

std::vector<Image> gradient_frames(int n) {
  std::vector<Image> out;
  for (int t = 0; t < n; ++t) {
    Image im(12, 12);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        auto* p = im.pixel(x, y);
        p[0] = std::uint8_t((x * 20 + t * 7) % 256);
        p[1] = std::uint8_t((y * 20 + t * 3) % 256);
        p[2] = std::uint8_t((t * 11) % 256);
      }
    out.push_back(std::move(im));
  }
  return out;
}

bool rows_equal(const Tensor& a, int ra, const Tensor& b, int rb) {
  const int D = a.dim(1);
  for (int d = 0; d < D; ++d)
    if (a[std::size_t(ra) * D + d] != b[std::size_t(rb) * D + d]) return false;
  return true;
}

// Closed-form two-sided 95% quantiles for one and two degrees of freedom.
double t_quantile_oracle(int df, double p) {
  if (df == 1) return std::tan(M_PI * (p - 0.5));
  if (df == 2) return (2 * p - 1) / std::sqrt(2 * p * (1 - p));
  throw std::invalid_argument("oracle covers df 1 and 2");
}

}  // namespace

TEST_CASE("feature sequence has one row per frame") {
  PixelGridAdapter pixels(4);
  JointModelAdapter joint(tiny_model(16), "tiny");
  for (int seconds = 1; seconds <= 10; ++seconds) {
    const auto frames = gradient_frames(12 * seconds);
    CHECK(extract_feature_sequence(pixels, frames).dim(0) == 12 * seconds);
    const Tensor f = extract_feature_sequence(joint, frames);
    CHECK(f.dim(0) == 12 * seconds);
    CHECK(f.dim(1) == joint.feature_dim());
  }
  CHECK_THROWS(extract_feature_sequence(pixels, {}));
}

TEST_CASE("last partial clip repeats its final frame") {
  JointModelAdapter joint(tiny_model(16), "tiny");
  const auto frames = gradient_frames(50);
  const Tensor seq = extract_feature_sequence(joint, frames);
  REQUIRE(seq.dim(0) == 50);
  for (int t = 0; t < 16; ++t) CHECK(rows_equal(seq, t, seq, 0));
  CHECK(rows_equal(seq, 49, seq, 48));
  CHECK(!rows_equal(seq, 48, seq, 47));
  std::vector<Image> tail(16, frames[49]);
  tail[0] = frames[48];
  const Tensor direct = joint.extract({tail});
  CHECK(rows_equal(seq, 48, direct, 0));
  CHECK(extract_feature_sequence(joint, gradient_frames(48)).dim(0) == 48);
  CHECK(extract_feature_sequence(joint, gradient_frames(5)).dim(0) == 5);
}

TEST_CASE("pixel grid features are cell colour means") {
  Image im(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) im.pixel(x, y)[0] = x < 4 ? 255 : 0;
  PixelGridAdapter grid(2);
  const Tensor f = grid.extract({{im}});
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 1.0);
  CHECK(f[3] == 0.0);
  for (int d = 4; d < 12; ++d) CHECK(f[d] == 0.0);
}

TEST_CASE("student-t interval against closed forms") {
  const auto [m, ci] = mean_ci95({0.5, 0.7});
  CHECK(m == doctest::Approx(0.6).epsilon(1e-12));
  REQUIRE(ci);
  // sd = sqrt(0.02), half-width = t * sd / sqrt(2) = t * 0.1
  CHECK(std::abs(*ci - t_quantile_oracle(1, 0.975) * 0.1) < 1e-9);
  CHECK(std::abs(*ci - 12.7062047361747 * 0.1) < 1e-9);

  const std::vector<double> three = {0.2, 0.5, 0.6};
  const auto [m3, ci3] = mean_ci95(three);
  double ss = 0;
  for (double s : three) ss += (s - m3) * (s - m3);
  CHECK(std::abs(*ci3 - t_quantile_oracle(2, 0.975) * std::sqrt(ss / 2) / std::sqrt(3.0)) < 1e-9);

  CHECK(!mean_ci95({0.4}).second);
  CHECK(mean_ci95({0.4}).first == 0.4);
  CHECK(*mean_ci95({0.3, 0.3, 0.3}).second == 0.0);
  CHECK_THROWS(mean_ci95({}));
}

TEST_CASE("heads fit separable constant features") {
  std::vector<Sequence> x;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    const int k = i % 3;
    Tensor s({6, 3});
    for (int t = 0; t < 6; ++t) s[std::size_t(t) * 3 + k] = 1.0;
    x.push_back(s);
    y.push_back(k);
  }
  HeadOptions opt;
  opt.lr = 1e-2;
  opt.hidden = 16;
  for (HeadKind kind : {HeadKind::Logistic, HeadKind::Mlp512, HeadKind::BiLstm128}) {
    const auto fit = fit_transfer_head(x, y, 3, kind, 4, opt);
    CHECK(fit.head->accuracy(x, y) == 1.0);
    CHECK(fit.holdout_size == 6);
    const Tensor p = fit.head->predict_proba(x);
    for (int i = 0; i < 30; ++i) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += p[std::size_t(i) * 3 + k];
      CHECK(s == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("head fitting is deterministic and validates labels") {
  const auto set = fixtures::order_only_set(10, 4, 3, 0.3, 9);
  HeadOptions opt;
  opt.hidden = 8;
  opt.max_epochs = 5;
  for (HeadKind kind : {HeadKind::Logistic, HeadKind::Mlp512, HeadKind::BiLstm128}) {
    const auto a = fit_transfer_head(set.x, set.y, 2, kind, 3, opt);
    const auto b = fit_transfer_head(set.x, set.y, 2, kind, 3, opt);
    CHECK(nn::hash_params(a.head->params()) == nn::hash_params(b.head->params()));
  }
  CHECK_THROWS_AS(fit_transfer_head(set.x, set.y, 3, HeadKind::Logistic, 3, opt), ValidationError);
  CHECK_THROWS_AS(parse_head_kind("svm"), ConfigError);
  CHECK(parse_head_kind(head_name(HeadKind::Mlp512)) == HeadKind::Mlp512);
}

TEST_CASE("order-only classes separate only for the recurrent head") {
  const auto train = fixtures::order_only_set(40, 8, 4, 0.3, 21);
  // Same class prototypes as training, fresh noise.
  auto test = fixtures::order_only_set(40, 8, 4, 0.0, 21);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01(0.0, 0.3);
  for (auto& s : test.x)
    for (double& v : s.values()) v += n01(rng);
  HeadOptions opt;
  opt.hidden = 16;
  opt.lr = 1e-2;
  opt.max_epochs = 60;
  const double logistic =
      fit_transfer_head(train.x, train.y, 2, HeadKind::Logistic, 1, opt).head->accuracy(test.x, test.y);
  const double lstm =
      fit_transfer_head(train.x, train.y, 2, HeadKind::BiLstm128, 1, opt).head->accuracy(test.x, test.y);
  MESSAGE("logistic " << logistic << " bilstm " << lstm);
  CHECK(logistic < 0.7);
  CHECK(lstm - logistic >= 0.2);
}

TEST_CASE("sample_episode draws k shots per class without replacement") {
  const auto m = Manifest::load(toy_manifest());
  const auto by_cat = m.split_by_category("train");
  const std::set<std::string> train(m.splits.at("train").begin(), m.splits.at("train").end());
  EpisodeSpec spec;
  spec.seed = 7;
  spec.shots = 2;
  const auto e0 = sample_episode(m, spec, 0);
  CHECK(e0.train_ids.size() == std::size_t(2 * m.hierarchy.category_count()));
  CHECK(std::set<std::string>(e0.train_ids.begin(), e0.train_ids.end()).size() == e0.train_ids.size());
  std::map<int, int> per_class;
  for (const auto& id : e0.train_ids) {
    CHECK(train.count(id) == 1);
    ++per_class[m.episode(id).category];
  }
  for (const auto& [k, n] : per_class) CHECK(n == 2);
  CHECK(e0.test_ids == m.splits.at("test"));
  CHECK(sample_episode(m, spec, 0).train_ids == e0.train_ids);
  bool differs = false;
  for (int r = 1; r < 5; ++r) differs |= sample_episode(m, spec, r).train_ids != e0.train_ids;
  CHECK(differs);
  CHECK(sample_episode(m, spec, 1).test_ids == e0.test_ids);

  int smallest = 1 << 30;
  for (const auto& [k, ids] : by_cat) smallest = std::min(smallest, int(ids.size()));
  spec.shots = smallest + 1;
  CHECK_THROWS_AS(sample_episode(m, spec, 0), ValidationError);
  spec.shots = std::nullopt;
  CHECK(sample_episode(m, spec, 3).train_ids == m.splits.at("train"));
  CHECK(parse_shots("full") == std::nullopt);
  CHECK(parse_shots("5") == 5);
  CHECK_THROWS_AS(parse_shots("0"), ConfigError);
  CHECK_THROWS_AS(parse_shots("5x"), ConfigError);
}

TEST_CASE("benchmark grid leaves backbones untouched") {
  const auto m = Manifest::load(toy_manifest());
  PixelGridAdapter pixels(2);
  JointModelAdapter joint(tiny_model(8), "tiny");
  const auto hash_before = joint.parameter_hash();
  BenchmarkSpec spec;
  spec.shots = {1, 5, std::nullopt};
  spec.runs = 2;
  spec.seed = 3;
  spec.head_options.hidden = 8;
  spec.head_options.max_epochs = 5;
  const auto report = run_benchmark({&pixels, &joint}, m, spec);
  CHECK(joint.parameter_hash() == hash_before);
  REQUIRE(report.cells.size() == 2 * 3 * 3);
  for (const auto& c : report.cells) {
    CHECK(c.scores.size() == 2);
    CHECK(c.ci95.has_value());
    for (double s : c.scores) CHECK((s >= 0.0 && s <= 1.0));
  }
  CHECK(report.cells[0].backbone == "pixels2");
  CHECK(report.cells[0].head == "logistic");
  CHECK(report.cells[0].shots == "1");
  CHECK(report.cells[2].shots == "full");

  const auto back = BenchmarkReport::from_json(report.to_json());
  CHECK(back.to_json() == report.to_json());
  const auto again = run_benchmark({&pixels, &joint}, m, spec);
  CHECK(again.to_json() == report.to_json());

  const auto dir = testutil::scratch_dir("bench_plot");
  write_benchmark_plot(report, dir / "plot.svg");
  const auto svg = testutil::read_text(dir / "plot.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("bilstm128") != std::string::npos);
}
