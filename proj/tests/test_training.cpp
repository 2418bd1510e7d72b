#include <cmath>
#include <fstream>

#include "doctest.h"
#include "finegrain/errors.hpp"
#include "finegrain/toyworld.hpp"
#include "finegrain/training.hpp"
#include "testutil.hpp"

using namespace finegrain;
using namespace finegrain::training;

namespace {

// Small on-disk corpus shared by the tests in this file.
const std::filesystem::path& toy_manifest() {
  static const std::filesystem::path path = [] {
    auto spec = toyworld::default_toy_spec();
    spec.height = spec.width = 16;
    spec.duration_s = 1.0;
    toyworld::CorpusOptions opt;
    opt.balanced = true;
    return toyworld::generate_toy_corpus(spec, 96, 3, testutil::scratch_dir("train_corpus"), opt);
  }();
  return path;
}

TrainConfig tiny_config(const std::string& task, const std::string& dir) {
  TrainConfig c;
  c.task = task;
  c.channels_3d = c.channels_2d = 4;
  c.blocks = 2;
  c.lstm_hidden = 8;
  c.embed_dim = 8;
  c.decoder_hidden = 8;
  c.frames = 8;
  c.resize = 16;
  c.crop = 8;
  c.batch_size = 16;
  c.max_epochs = 3;
  c.lr = 3e-3;
  c.seed = 11;
  c.anneal_steps = 6;
  c.checkpoint_every = 2;
  c.checkpoint_dir = testutil::scratch_dir("run_" + dir).string();
  return c;
}

std::uint64_t decoder_hash(JointModel& m) { return nn::hash_params(m.decoder_params()); }

}  // namespace

TEST_CASE("lambda schedule") {
  const LambdaSchedule s{1.0, 0.1, 10, 100};
  CHECK(lambda_at_step(0, s) == 1.0);
  CHECK(lambda_at_step(9, s) == 1.0);
  CHECK(lambda_at_step(110, s) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lambda_at_step(60, s) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(lambda_at_step(5000, s) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS(lambda_at_step(-1, s));
  for (long t = 1; t < 200; ++t) CHECK(lambda_at_step(t, s) <= lambda_at_step(t - 1, s));

  TrainConfig c;
  c.task = "fine_cls";
  c.lambda_start = 0.5;
  c.lambda_end = 0.0;
  for (long t : {0L, 10L, 1000L}) CHECK(lambda_at_step(t, c.schedule(7)) == 1.0);
  c.task = "caption_full";
  CHECK(c.schedule(7).warmup_steps == 7);
  CHECK(lambda_at_step(0, c.schedule(7)) == 0.5);
}

TEST_CASE("key=value config parsing") {
  const auto kv = parse_key_values("# comment\ntask = caption_full\n\n lr=0.01  # trailing\nseed = 7\n");
  TrainConfig c;
  c.apply(kv);
  CHECK(c.task == "caption_full");
  CHECK(c.lr == 0.01);
  CHECK(c.seed == 7);
  c.validate();
  CHECK_THROWS_AS(c.set("learning_rate", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("batch_size", "ten"), ConfigError);
  CHECK_THROWS_AS(c.set("deterministic", "maybe"), ConfigError);
  try {
    parse_key_values("task = x\nnot a pair\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  TrainConfig bad = c;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.lambda_end = 0.9;
  bad.lambda_start = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.task = "captioning";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // The resolved config text reads back to the same config.
  TrainConfig again;
  again.apply(parse_key_values(c.to_text()));
  CHECK(again.to_json() == c.to_json());
  CHECK(TrainConfig::keys().size() == c.to_json().size());
}

TEST_CASE("clip dataset batches") {
  const auto m = Manifest::load(toy_manifest());
  const auto vocab = build_corpus_vocabulary(m, "full");
  CHECK(vocab.contains("moving"));
  const ClipDataset ds(m, "train", {8, 16, 8}, "coarse", &vocab, "full");
  REQUIRE(ds.size() > 0);
  const auto b = ds.batch({0, 1, 2}, videoio::Phase::Train, 5);
  CHECK(b.clips.shape() == std::vector<int>{3, 3, 8, 8, 8});
  CHECK(b.labels[1] == ds.group(1));
  CHECK(b.captions.size() == 3);
  CHECK(max_abs_diff(b.clips, ds.batch({0, 1, 2}, videoio::Phase::Train, 5).clips) == 0.0);
  CHECK_THROWS(ClipDataset(m, "nonexistent", {8, 16, 8}, "fine"));
}

TEST_CASE("training_step leaves the inactive head untouched") {
  const auto m = Manifest::load(toy_manifest());
  const auto vocab = build_corpus_vocabulary(m, "full");
  const auto cfg = tiny_config("caption_full", "steps");
  const ClipDataset ds(m, "train", cfg.geometry(), "fine", &vocab, "full");
  for (double lambda : {1.0, 0.0}) {
    JointModel model(make_model_config(cfg, 8, vocab));
    nn::Adam opt(model.params(), {1e-2});
    const auto dec = decoder_hash(model);
    const auto cls = nn::hash_params(model.classifier_params());
    const auto enc = nn::hash_params(model.encoder_params());
    for (int s = 0; s < 10; ++s) training_step(model, opt, ds.batch({s % 8, 8 + s % 8}, videoio::Phase::Train, s), lambda, 5.0);
    CHECK(nn::hash_params(model.encoder_params()) != enc);
    if (lambda == 1.0) {
      CHECK(decoder_hash(model) == dec);
      CHECK(nn::hash_params(model.classifier_params()) != cls);
    } else {
      CHECK(nn::hash_params(model.classifier_params()) == cls);
      CHECK(decoder_hash(model) != dec);
    }
  }
}

TEST_CASE("fine classification training: determinism, checkpoints and evaluation") {
  const auto cfg = tiny_config("fine_cls", "fine_a");
  const auto r1 = train_model(cfg, toy_manifest());
  auto cfg2 = cfg;
  cfg2.checkpoint_dir = testutil::scratch_dir("run_fine_b").string();
  const auto r2 = train_model(cfg2, toy_manifest());

  const auto& h1 = r1.report.extra.at("history");
  const auto& h2 = r2.report.extra.at("history");
  REQUIRE(h1.size() == 4);
  const double last1 = h1.back().at("train_loss").get<double>();
  CHECK(std::abs(last1 - h2.back().at("train_loss").get<double>()) < 1e-6);
  CHECK(last1 < r1.report.extra.at("initial_loss").get<double>());
  CHECK(!h1.front().contains("train_loss"));
  CHECK(h1.front().at("val").contains("accuracy"));

  const std::filesystem::path dir = cfg.checkpoint_dir;
  CHECK(std::filesystem::exists(dir / "epoch-002.ckpt"));
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(std::filesystem::exists(dir / "vocab.txt"));
  CHECK(std::filesystem::exists(dir / "train_report.json"));
  CHECK(TrainConfig::from_file(dir / "config.txt").to_json() == cfg.to_json());

  // lambda == 1 throughout: the decoder keeps its initial weights.
  JointModel fresh(make_model_config(cfg, 8, corpus::Vocabulary::load(dir / "vocab.txt")));
  JointModel trained = JointModel::load(r1.last_checkpoint);
  CHECK(decoder_hash(fresh) == decoder_hash(trained));

  const auto e1 = evaluate_model(r1.best_checkpoint, toy_manifest(), "val");
  const auto e2 = evaluate_model(r1.best_checkpoint, toy_manifest(), "val");
  CHECK(e1.to_json() == e2.to_json());
  const auto& v = e1.splits.at("val");
  CHECK(v.count("fine_accuracy"));
  CHECK(v.count("coarse_accuracy"));
  CHECK(v.count("coarse_accuracy_summed"));
  CHECK(v.at("coarse_accuracy") >= v.at("fine_accuracy"));
  CHECK(v.at("accuracy") == r1.report.splits.at("val").at("accuracy"));

  // Save, load and evaluate again.
  const auto copy = dir / "roundtrip.ckpt";
  JointModel best = JointModel::load(r1.best_checkpoint);
  best.save(copy);
  CHECK(evaluate_model(copy, toy_manifest(), "val").splits == e1.splits);

  CHECK_THROWS_AS(evaluate_model(r1.best_checkpoint, toy_manifest(), "val", {"cider"}), ConfigError);
  auto m = Manifest::load(toy_manifest());
  m.splits["empty"] = {};
  const auto empty_path = toy_manifest().parent_path() / "with_empty.json";
  m.save(empty_path);
  CHECK_THROWS_AS(evaluate_model(r1.best_checkpoint, empty_path, "empty"), ValidationError);

  const auto baselines =
      evaluate_model(r1.best_checkpoint, toy_manifest(), "val", {"baseline_frequent_fine", "baseline_template_fill"});
  CHECK(baselines.splits.at("val").at("baseline_frequent_fine") <= v.at("coarse_accuracy"));

  SUBCASE("linear probe keeps the encoder frozen") {
    const auto p = fit_linear_probe(r1.best_checkpoint, "coarse", toy_manifest(), {});
    CHECK(p.extra.at("encoder_hash_before") == p.extra.at("encoder_hash_after"));
    CHECK(p.splits.at("val").count("probe_accuracy"));
    CHECK(!p.splits.at("val").count("head_accuracy"));
    const auto own = fit_linear_probe(r1.best_checkpoint, "fine", toy_manifest(), {});
    CHECK(own.splits.at("val").count("head_accuracy"));
    CHECK_THROWS_AS(fit_linear_probe(r1.best_checkpoint, "medium", toy_manifest(), {}), ConfigError);
  }
}

TEST_CASE("caption training reports caption metrics") {
  auto cfg = tiny_config("caption_simplified", "cap");
  cfg.max_epochs = 2;
  const auto r = train_model(cfg, toy_manifest());
  const auto& val = r.report.splits.at("val");
  for (const char* k : {"exact_match", "bleu4", "rouge_l", "meteor_lite", "accuracy"}) CHECK(val.count(k));
  JointModel model = JointModel::load(r.best_checkpoint);
  CHECK(model.config().caption_target == "simplified");
  CHECK(model.config().vocabulary == corpus::Vocabulary::load(std::filesystem::path(cfg.checkpoint_dir) / "vocab.txt").tokens());
}

TEST_CASE("label space mismatch is rejected") {
  auto cfg = tiny_config("coarse_cls", "coarse");
  cfg.max_epochs = 1;
  const auto r = train_model(cfg, toy_manifest());
  CHECK_THROWS_AS(evaluate_model(r.best_checkpoint, toy_manifest(), "val", {"fine_accuracy"}), ConfigError);
  const auto e = evaluate_model(r.best_checkpoint, toy_manifest(), "val");
  CHECK(e.splits.at("val").at("accuracy") == e.splits.at("val").at("coarse_accuracy"));
}
