#include "finegrain/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "finegrain/errors.hpp"
#include "finegrain/metrics.hpp"
#include "finegrain/seeding.hpp"

namespace finegrain::training {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for key '" + key + "'");
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

// Shared eval pass: probabilities and greedy captions of every item.
struct Predictions {
  Tensor probs;  // [N, K]
  std::vector<corpus::TokenSequence> captions;
};

Predictions predict(JointModel& model, const ClipDataset& data, int batch_size, bool want_captions, int max_len) {
  Predictions out;
  const int N = data.size();
  const int K = model.config().classes;
  out.probs = Tensor({N, K});
  for (int start = 0; start < N; start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(N, start + batch_size); ++i) idx.push_back(i);
    const Batch b = data.batch(idx, videoio::Phase::Eval, 0);
    const Tensor h = model.encode(b.clips, nn::Mode::Eval);
    const Tensor p = model.classifier().classify(h);
    std::copy(p.data(), p.data() + p.size(), out.probs.data() + std::size_t(start) * K);
    if (want_captions) {
      const int D = h.dim(1);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        Tensor row({1, D});
        std::copy(h.data() + r * D, h.data() + (r + 1) * D, row.data());
        out.captions.push_back(model.decoder().decode_greedy(row, max_len));
      }
    }
  }
  return out;
}

int argmax_row(const Tensor& t, int row) {
  const int K = t.dim(1);
  const double* p = t.data() + std::size_t(row) * K;
  return static_cast<int>(std::max_element(p, p + K) - p);
}

corpus::Vocabulary model_vocabulary(const ModelConfig& cfg) {
  if (cfg.vocabulary.empty()) return corpus::Vocabulary::from_tokens(corpus::Vocabulary().tokens());
  return corpus::Vocabulary::from_tokens(cfg.vocabulary);
}

void check_label_space(const ModelConfig& cfg, const Manifest& manifest) {
  const int expected =
      cfg.label_space == "coarse" ? manifest.hierarchy.group_count() : manifest.hierarchy.category_count();
  if (expected != cfg.classes) {
    throw ValidationError("model has " + std::to_string(cfg.classes) + " " + cfg.label_space +
                          " classes but the manifest defines " + std::to_string(expected));
  }
}

}  // namespace

// ------------------------------------------------------------ key=value

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", n);
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError("empty key", n);
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

// ------------------------------------------------------------ schedule

double lambda_at_step(long step, const LambdaSchedule& s) {
  if (step < 0) throw std::invalid_argument("step must be non-negative");
  if (step < s.warmup_steps) return s.start;
  if (s.anneal_steps <= 0) return s.end;
  const double u = std::min(1.0, double(step - s.warmup_steps) / double(s.anneal_steps));
  return s.start + (s.end - s.start) * u;
}

// ------------------------------------------------------------ TrainConfig

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto i32 = [&] { return parse_number<int>(key, value); };
  auto i64 = [&] { return parse_number<long>(key, value); };
  auto f64 = [&] { return parse_number<double>(key, value); };
  if (key == "task") task = value;
  else if (key == "lambda_start") lambda_start = f64();
  else if (key == "lambda_end") lambda_end = f64();
  else if (key == "warmup_steps") warmup_steps = i64();
  else if (key == "anneal_steps") anneal_steps = i64();
  else if (key == "lr") lr = f64();
  else if (key == "batch_size") batch_size = i32();
  else if (key == "max_epochs") max_epochs = i32();
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "checkpoint_dir") checkpoint_dir = value;
  else if (key == "checkpoint_every") checkpoint_every = i32();
  else if (key == "clip_norm") clip_norm = f64();
  else if (key == "deterministic") deterministic = parse_bool(key, value);
  else if (key == "channels_3d") channels_3d = i32();
  else if (key == "channels_2d") channels_2d = i32();
  else if (key == "blocks") blocks = i32();
  else if (key == "lstm_hidden") lstm_hidden = i32();
  else if (key == "lstm_layers") lstm_layers = i32();
  else if (key == "embed_dim") embed_dim = i32();
  else if (key == "decoder_hidden") decoder_hidden = i32();
  else if (key == "decoder_layers") decoder_layers = i32();
  else if (key == "condition_every_step") condition_every_step = parse_bool(key, value);
  else if (key == "frames") frames = i32();
  else if (key == "resize") resize = i32();
  else if (key == "crop") crop = i32();
  else if (key == "max_len") max_len = i32();
  else if (key == "min_occurrences") min_occurrences = i32();
  else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  const json j = TrainConfig().to_json();
  for (const auto& [k, v] : j.items()) out.push_back(k);
  return out;
}

void TrainConfig::apply(const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  TrainConfig c;
  c.apply(read_key_values(path));
  return c;
}

void TrainConfig::validate() const {
  if (task != "coarse_cls" && task != "fine_cls" && task != "caption_simplified" && task != "caption_full") {
    throw ConfigError("task must be one of coarse_cls, fine_cls, caption_simplified, caption_full");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lambda_end >= 0.0 && lambda_end <= lambda_start && lambda_start <= 1.0)) {
    throw ConfigError("lambda schedule needs 0 <= lambda_end <= lambda_start <= 1");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (anneal_steps < 0) throw ConfigError("anneal_steps must be non-negative");
  if (warmup_steps < -1) throw ConfigError("warmup_steps must be -1 (one epoch) or non-negative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (min_occurrences < 1) throw ConfigError("min_occurrences must be at least 1");
  geometry().validate();
}

std::string TrainConfig::caption_target() const {
  if (task == "caption_full") return "full";
  if (task == "caption_simplified") return "simplified";
  return "";
}

LambdaSchedule TrainConfig::schedule(long steps_per_epoch) const {
  if (is_classification()) return {1.0, 1.0, 0, 0};
  return {lambda_start, lambda_end, warmup_steps < 0 ? steps_per_epoch : warmup_steps, anneal_steps};
}

json TrainConfig::to_json() const {
  return {{"task", task},
          {"lambda_start", lambda_start},
          {"lambda_end", lambda_end},
          {"warmup_steps", warmup_steps},
          {"anneal_steps", anneal_steps},
          {"lr", lr},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"checkpoint_dir", checkpoint_dir},
          {"checkpoint_every", checkpoint_every},
          {"clip_norm", clip_norm},
          {"deterministic", deterministic},
          {"channels_3d", channels_3d},
          {"channels_2d", channels_2d},
          {"blocks", blocks},
          {"lstm_hidden", lstm_hidden},
          {"lstm_layers", lstm_layers},
          {"embed_dim", embed_dim},
          {"decoder_hidden", decoder_hidden},
          {"decoder_layers", decoder_layers},
          {"condition_every_step", condition_every_step},
          {"frames", frames},
          {"resize", resize},
          {"crop", crop},
          {"max_len", max_len},
          {"min_occurrences", min_occurrences}};
}

std::string TrainConfig::to_text() const {
  std::string out;
  const json j = to_json();
  for (const auto& [k, v] : j.items()) {
    std::string s;
    if (v.is_string()) s = v.get<std::string>();
    else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
    else if (v.is_number_float()) s = fmt(v.get<double>());
    else s = v.dump();
    out += k + " = " + s + "\n";
  }
  return out;
}

// ------------------------------------------------------------ data

std::string caption_text(const corpus::AnnotationRecord& record, const std::string& target) {
  if (target == "full") return record.full_caption;
  if (target == "simplified") return record.simplified_caption ? *record.simplified_caption : corpus::simplified_caption(record);
  throw ConfigError("caption target must be full or simplified, got '" + target + "'");
}

corpus::Vocabulary build_corpus_vocabulary(const Manifest& manifest, const std::string& caption_target,
                                           int min_occurrences, const std::string& split) {
  std::map<std::string, const corpus::AnnotationRecord*> by_id;
  const auto records = manifest.load_annotations();
  for (const auto& r : records) by_id[r.video_id] = &r;
  std::vector<std::vector<std::string>> captions;
  for (const auto* e : manifest.split_episodes(split)) {
    auto it = by_id.find(e->id);
    if (it == by_id.end()) throw ValidationError("no annotation for episode '" + e->id + "'");
    captions.push_back(corpus::tokenize_caption(caption_text(*it->second, caption_target)));
  }
  return corpus::build_vocabulary(captions, min_occurrences);
}

ModelConfig make_model_config(const TrainConfig& c, int classes, const corpus::Vocabulary& vocab) {
  ModelConfig m;
  m.encoder.channels_3d = c.channels_3d;
  m.encoder.channels_2d = c.channels_2d;
  m.encoder.blocks = c.blocks;
  m.encoder.lstm_hidden = c.lstm_hidden;
  m.encoder.lstm_layers = c.lstm_layers;
  m.decoder.vocab_size = vocab.size();
  m.decoder.embed_dim = c.embed_dim;
  m.decoder.hidden = c.decoder_hidden;
  m.decoder.layers = c.decoder_layers;
  m.decoder.condition_every_step = c.condition_every_step;
  m.classes = classes;
  m.label_space = c.label_space();
  m.geometry = c.geometry();
  m.seed = c.seed;
  m.task = c.task;
  m.caption_target = c.caption_target();
  m.vocabulary = vocab.tokens();
  m.validate();
  return m;
}

ClipDataset::ClipDataset(const Manifest& manifest, const std::string& split, const videoio::ClipGeometry& geometry,
                         const std::string& label_space, const corpus::Vocabulary* vocab,
                         const std::string& caption_target, int max_len)
    : geometry_(geometry), label_space_(label_space) {
  geometry_.validate();
  if (label_space != "fine" && label_space != "coarse") throw ConfigError("label space must be fine or coarse");
  if (!manifest.splits.count(split)) throw ValidationError("manifest has no split '" + split + "'");
  has_captions_ = !caption_target.empty() && vocab != nullptr;

  std::map<std::string, corpus::AnnotationRecord> by_id;
  for (auto& r : manifest.load_annotations()) by_id[r.video_id] = std::move(r);
  const auto episodes = manifest.split_episodes(split);
  items_.resize(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    Item& it = items_[i];
    it.id = episodes[i]->id;
    it.category = episodes[i]->category;
    it.group = episodes[i]->group;
    auto rec = by_id.find(it.id);
    if (rec == by_id.end()) throw ValidationError("no annotation for episode '" + it.id + "'");
    it.record = rec->second;
    if (has_captions_) {
      it.reference = corpus::tokenize_caption(caption_text(it.record, caption_target));
      it.caption = corpus::encode_tokens(it.reference, *vocab, max_len);
    }
  }
  std::vector<std::string> errors(items_.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(items_.size()); ++i) {
    try {
      items_[i].frames = videoio::load_frame_directory(manifest.frames_dir(*episodes[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
}

Batch ClipDataset::batch(const std::vector<int>& indices, videoio::Phase phase, std::uint64_t seed) const {
  Batch b;
  std::vector<videoio::VideoClip> clips(indices.size());
#pragma omp parallel for schedule(static)
  for (long k = 0; k < static_cast<long>(indices.size()); ++k) {
    clips[k] = videoio::make_clip(items_.at(indices[k]).frames, geometry_, phase, derive_seed({seed, std::uint64_t(k)}));
  }
  std::vector<const videoio::VideoClip*> ptrs;
  for (const auto& c : clips) ptrs.push_back(&c);
  b.clips = videoio::stack_clips(ptrs);
  for (int i : indices) {
    b.labels.push_back(label(i));
    if (has_captions_) b.captions.push_back(items_[i].caption);
  }
  return b;
}

// ------------------------------------------------------------ training

LossBreakdown training_step(JointModel& model, nn::Adam& optimizer, const Batch& batch, double lambda,
                            double clip_norm) {
  const auto params = model.params();
  nn::zero_grads(params);
  const auto loss = model.forward_backward(batch.clips, batch.labels, batch.captions, lambda, nn::Mode::Train);
  if (!std::isfinite(loss.total)) return loss;
  nn::clip_grad_norm(params, clip_norm);
  optimizer.step([lambda](const nn::Param& p) {
    if (lambda == 1.0 && JointModel::is_decoder_param(p)) return false;
    if (lambda == 0.0 && JointModel::is_classifier_param(p)) return false;
    return true;
  });
  return loss;
}

json MetricsReport::to_json() const {
  json s = json::object();
  for (const auto& [split, m] : splits) s[split] = m;
  return {{"splits", s}, {"config", config}, {"steps", steps}, {"wall_time_s", wall_time_s}, {"extra", extra}};
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  try {
    for (const auto& [split, m] : j.at("splits").items()) r.splits[split] = m.get<std::map<std::string, double>>();
    r.config = j.value("config", json::object());
    r.steps = j.value("steps", 0L);
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.extra = j.value("extra", json::object());
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad metrics report: ") + e.what());
  }
  return r;
}

void MetricsReport::validate() const {
  for (const auto& [split, m] : splits)
    for (const auto& [k, v] : m)
      if (!std::isfinite(v)) throw ValidationError("metric " + split + "/" + k + " is not finite");
}

TrainResult train_model(const TrainConfig& config, const std::filesystem::path& manifest_path,
                        const corpus::Vocabulary* vocab, const LogFn& log) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const Manifest manifest = Manifest::load(manifest_path);
  const std::string target = config.caption_target();
  const corpus::Vocabulary vocabulary =
      vocab ? *vocab : build_corpus_vocabulary(manifest, target.empty() ? "full" : target, config.min_occurrences);
  const int classes = config.label_space() == "coarse" ? manifest.hierarchy.group_count()
                                                       : manifest.hierarchy.category_count();
  JointModel model(make_model_config(config, classes, vocabulary));

  const ClipDataset train(manifest, "train", config.geometry(), config.label_space(), &vocabulary, target,
                          config.max_len);
  const ClipDataset val(manifest, "val", config.geometry(), config.label_space(), &vocabulary, target, config.max_len);
  if (train.size() == 0) throw ValidationError("training split is empty");

  const std::filesystem::path dir = config.checkpoint_dir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "config.txt") << config.to_text();
  }
  vocabulary.save(dir / "vocab.txt");

  const long steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const LambdaSchedule sched = config.schedule(steps_per_epoch);
  nn::Adam opt(model.params(), {config.lr});
  const std::vector<std::string> val_metrics = default_metrics(model.config());

  const std::string select = config.is_classification() ? "accuracy" : "exact_match";
  json history = json::array();
  double best_score = -1.0;
  int best_epoch = -1;
  long step = 0;
  double initial_loss = std::nan("");
  const auto best_path = dir / "best.ckpt";
  const auto last_path = dir / "last.ckpt";

  auto validate_epoch = [&](int epoch, double train_loss, double lambda) {
    json entry = {{"epoch", epoch}, {"step", step}, {"lambda", lambda}};
    if (std::isfinite(train_loss)) entry["train_loss"] = train_loss;
    std::string line = "epoch " + std::to_string(epoch);
    if (std::isfinite(train_loss)) line += " loss " + fmt(train_loss);
    if (val.size() > 0) {
      const auto rep = evaluate_model(model, manifest, "val", val_metrics, config.batch_size);
      entry["val"] = rep.splits.at("val");
      const double score = rep.splits.at("val").at(select);
      line += " val_" + select + " " + fmt(score);
      if (epoch > 0 && score > best_score) {
        best_score = score;
        best_epoch = epoch;
        model.save(best_path);
      }
    }
    history.push_back(entry);
    say(line);
  };

  validate_epoch(0, std::nan(""), lambda_at_step(0, sched));
  double lambda = lambda_at_step(0, sched);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<int> order(std::size_t(train.size()));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed({config.seed, 0x5A, std::uint64_t(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      const auto first = order.begin() + b * config.batch_size;
      const auto last = order.begin() + std::min<long>(train.size(), (b + 1) * config.batch_size);
      const std::vector<int> idx(first, last);
      const Batch batch = train.batch(idx, videoio::Phase::Train, derive_seed({config.seed, 0xC1, std::uint64_t(step)}));
      lambda = lambda_at_step(step, sched);
      const auto loss = training_step(model, opt, batch, lambda, config.clip_norm);
      if (!std::isfinite(loss.total)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                            ", lambda " + fmt(lambda) + ")");
      }
      if (step == 0) initial_loss = loss.total;
      loss_sum += loss.total;
      ++batches;
      ++step;
    }
    validate_epoch(epoch, loss_sum / double(batches), lambda);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch-%03d.ckpt", epoch);
      model.save(dir / name);
    }
  }
  model.save(last_path);
  if (best_epoch < 0) {
    // No validation data or no epochs: the final weights are the best known.
    std::filesystem::copy_file(last_path, best_path, std::filesystem::copy_options::overwrite_existing);
    best_epoch = config.max_epochs;
  }

  TrainResult result;
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  MetricsReport& rep = result.report;
  if (val.size() > 0) {
    JointModel best = JointModel::load(best_path);
    rep.splits["val"] = evaluate_model(best, manifest, "val", val_metrics, config.batch_size).splits.at("val");
  }
  rep.config = config.to_json();
  rep.steps = step;
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.extra = {{"history", history},
               {"best_epoch", best_epoch},
               {"best_checkpoint", best_path.filename().string()},
               {"selection_metric", select},
               {"steps_per_epoch", steps_per_epoch},
               {"vocab_size", vocabulary.size()},
               {"parameters", model.encoder().parameter_count()}};
  if (std::isfinite(initial_loss)) rep.extra["initial_loss"] = initial_loss;
  rep.validate();
  std::ofstream(dir / "train_report.json") << rep.to_json().dump(2) << "\n";
  return result;
}

// ------------------------------------------------------------ evaluation

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {
      "accuracy",    "fine_accuracy",          "coarse_accuracy",        "coarse_accuracy_summed",
      "exact_match", "bleu4",                  "rouge_l",                "meteor_lite",
      "baseline_frequent_fine", "baseline_template_fill"};
  return names;
}

std::vector<std::string> default_metrics(const ModelConfig& cfg) {
  std::vector<std::string> out = {"accuracy", "coarse_accuracy"};
  if (cfg.label_space == "fine") out.insert(out.end(), {"fine_accuracy", "coarse_accuracy_summed"});
  if (!cfg.caption_target.empty()) out.insert(out.end(), {"exact_match", "bleu4", "rouge_l", "meteor_lite"});
  return out;
}

MetricsReport evaluate_model(JointModel& model, const Manifest& manifest, const std::string& split,
                             const std::vector<std::string>& requested, int batch_size) {
  const ModelConfig& cfg = model.config();
  const std::vector<std::string> names = requested.empty() ? default_metrics(cfg) : requested;
  const auto& known = known_metrics();
  bool want_captions = false;
  for (const auto& n : names) {
    if (std::find(known.begin(), known.end(), n) == known.end()) throw ConfigError("unknown metric '" + n + "'");
    if (n == "exact_match" || n == "bleu4" || n == "rouge_l" || n == "meteor_lite") want_captions = true;
    if ((n == "fine_accuracy" || n == "coarse_accuracy_summed" || n == "baseline_frequent_fine") &&
        cfg.label_space != "fine") {
      throw ConfigError("metric '" + n + "' needs a fine-grained model");
    }
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  check_label_space(cfg, manifest);
  const std::string target = cfg.caption_target.empty() ? "full" : cfg.caption_target;
  const corpus::Vocabulary vocab = model_vocabulary(cfg);
  const int max_len = 14;
  const ClipDataset data(manifest, split, cfg.geometry, cfg.label_space, &vocab, target, max_len);
  if (data.size() == 0) throw ValidationError("split '" + split + "' is empty");

  const Predictions pred = predict(model, data, batch_size, want_captions, max_len);
  const auto& H = manifest.hierarchy;
  const int N = data.size();
  std::vector<int> own_pred, own_label, coarse_hard, coarse_sum, groups, cats;
  for (int i = 0; i < N; ++i) {
    const int a = argmax_row(pred.probs, i);
    own_pred.push_back(a);
    own_label.push_back(data.label(i));
    groups.push_back(data.group(i));
    cats.push_back(data.category(i));
    if (cfg.label_space == "fine") {
      coarse_hard.push_back(H.group_of(a));
      const std::vector<double> fine(pred.probs.data() + std::size_t(i) * cfg.classes,
                                     pred.probs.data() + std::size_t(i + 1) * cfg.classes);
      const auto g = metrics::group_probs_from_fine(fine, H);
      coarse_sum.push_back(static_cast<int>(std::max_element(g.begin(), g.end()) - g.begin()));
    } else {
      coarse_hard.push_back(a);
    }
  }

  std::vector<metrics::CaptionPair> pairs;
  if (want_captions) {
    for (int i = 0; i < N; ++i) pairs.push_back({corpus::decode_tokens(pred.captions[i], vocab), data.reference_tokens(i)});
  }

  std::map<std::string, double> values;
  for (const auto& n : names) {
    if (n == "accuracy") values[n] = metrics::classification_accuracy(own_pred, own_label);
    else if (n == "fine_accuracy") values[n] = metrics::classification_accuracy(own_pred, cats);
    else if (n == "coarse_accuracy") values[n] = metrics::classification_accuracy(coarse_hard, groups);
    else if (n == "coarse_accuracy_summed") values[n] = metrics::classification_accuracy(coarse_sum, groups);
    else if (n == "exact_match") values[n] = metrics::exact_match_accuracy(pairs);
    else if (n == "bleu4") values[n] = metrics::bleu4(pairs);
    else if (n == "rouge_l") values[n] = metrics::rouge_l(pairs);
    else if (n == "meteor_lite") values[n] = metrics::meteor_lite(pairs);
    else if (n == "baseline_frequent_fine") {
      std::vector<long> counts(std::size_t(H.category_count()), 0);
      for (const auto* e : manifest.split_episodes("train")) ++counts[std::size_t(e->category)];
      values[n] = metrics::classification_accuracy(metrics::baseline_frequent_fine(coarse_hard, counts, H), cats);
    } else if (n == "baseline_template_fill") {
      // Template of the predicted fine category filled with the modal training object string.
      if (cfg.label_space != "fine") throw ConfigError("baseline_template_fill needs a fine-grained model");
      std::vector<corpus::AnnotationRecord> train_recs;
      std::map<std::string, const Manifest::Episode*> train_ids;
      for (const auto* e : manifest.split_episodes("train")) train_ids[e->id] = e;
      for (auto r : manifest.load_annotations()) {
        if (!train_ids.count(r.video_id)) continue;
        if (target == "simplified")
          for (auto& p : r.placeholders) p = corpus::simplify_placeholder(p);
        train_recs.push_back(std::move(r));
      }
      const auto counts = metrics::count_object_strings(train_recs);
      std::vector<metrics::CaptionPair> fill_pairs;
      for (int i = 0; i < N; ++i) {
        const auto caption = metrics::baseline_template_fill(own_pred[i], manifest.category_templates, counts);
        fill_pairs.push_back({corpus::tokenize_caption(caption), data.reference_tokens(i)});
      }
      values[n] = metrics::exact_match_accuracy(fill_pairs);
    }
  }
  MetricsReport rep;
  rep.splits[split] = values;
  rep.config = cfg.to_json();
  rep.config.erase("vocabulary");
  rep.extra = {{"examples", N}};
  rep.validate();
  return rep;
}

MetricsReport evaluate_model(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path,
                             const std::string& split, const std::vector<std::string>& metrics, int batch_size) {
  JointModel model = JointModel::load(checkpoint);
  auto rep = evaluate_model(model, Manifest::load(manifest_path), split, metrics, batch_size);
  rep.extra["checkpoint"] = checkpoint.string();
  return rep;
}

// ------------------------------------------------------------ probes

Tensor extract_embeddings(JointModel& model, const ClipDataset& data, int batch_size) {
  const int D = model.config().encoder.embedding_dim();
  Tensor out({data.size(), D});
  for (int start = 0; start < data.size(); start += batch_size) {
    std::vector<int> idx;
    for (int i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor h = model.encode(data.batch(idx, videoio::Phase::Eval, 0).clips, nn::Mode::Eval);
    std::copy(h.data(), h.data() + h.size(), out.data() + std::size_t(start) * D);
  }
  return out;
}

MetricsReport fit_linear_probe(JointModel& model, const std::string& target, const Manifest& manifest,
                               const ProbeOptions& options) {
  if (target != "fine" && target != "coarse") throw ConfigError("probe target must be fine or coarse");
  check_label_space(model.config(), manifest);
  if (options.epochs < 1 || !(options.lr > 0.0)) throw ConfigError("probe needs epochs >= 1 and lr > 0");
  const auto enc_params = model.encoder_params();
  const std::uint64_t before = nn::hash_params(enc_params);

  const ClipDataset train(manifest, options.train_split, model.config().geometry, target);
  const ClipDataset eval(manifest, options.eval_split, model.config().geometry, target);
  if (train.size() == 0 || eval.size() == 0) throw ValidationError("probe splits must not be empty");
  const Tensor x_train = extract_embeddings(model, train);
  const Tensor x_eval = extract_embeddings(model, eval);
  std::vector<int> y_train, y_eval;
  for (int i = 0; i < train.size(); ++i) y_train.push_back(train.label(i));
  for (int i = 0; i < eval.size(); ++i) y_eval.push_back(eval.label(i));

  const int K = target == "coarse" ? manifest.hierarchy.group_count() : manifest.hierarchy.category_count();
  std::mt19937_64 rng(derive_seed({options.seed, 0x9B0BE}));
  nn::Linear probe("probe", x_train.dim(1), K, rng);
  nn::ParamList ps;
  probe.collect(ps);
  nn::Adam opt(ps, {options.lr});
  double loss = 0.0;
  for (int e = 0; e < options.epochs; ++e) {
    nn::zero_grads(ps);
    Tensor grad;
    loss = nn::softmax_cross_entropy(probe.forward(x_train), y_train, &grad);
    probe.backward(grad);
    opt.step();
  }
  auto accuracy = [&](const Tensor& logits, const std::vector<int>& y) {
    std::vector<int> p;
    for (int i = 0; i < logits.dim(0); ++i) p.push_back(argmax_row(logits, i));
    return metrics::classification_accuracy(p, y);
  };

  MetricsReport rep;
  rep.splits[options.eval_split]["probe_accuracy"] = accuracy(probe.infer(x_eval), y_eval);
  rep.splits[options.train_split]["probe_accuracy"] = accuracy(probe.infer(x_train), y_train);
  rep.splits[options.train_split]["probe_loss"] = loss;
  if (model.config().label_space == target) {
    rep.splits[options.eval_split]["head_accuracy"] =
        accuracy(model.classifier().infer_logits(x_eval), y_eval);
  }
  rep.splits[options.eval_split]["chance"] = 1.0 / K;

  const std::uint64_t after = nn::hash_params(enc_params);
  if (after != before) throw std::logic_error("linear probe modified the frozen encoder");
  rep.config = {{"target", target},
                {"epochs", options.epochs},
                {"lr", options.lr},
                {"seed", options.seed},
                {"train_split", options.train_split},
                {"eval_split", options.eval_split}};
  rep.steps = options.epochs;
  rep.extra = {{"encoder_hash_before", before}, {"encoder_hash_after", after}};
  rep.validate();
  return rep;
}

MetricsReport fit_linear_probe(const std::filesystem::path& checkpoint, const std::string& target,
                               const std::filesystem::path& manifest_path, const ProbeOptions& options) {
  JointModel model = JointModel::load(checkpoint);
  auto rep = fit_linear_probe(model, target, Manifest::load(manifest_path), options);
  rep.extra["checkpoint"] = checkpoint.string();
  return rep;
}

}  // namespace finegrain::training
