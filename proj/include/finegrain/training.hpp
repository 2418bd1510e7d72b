#pragma once

// Joint training loop with lambda annealing, evaluation passes and
// frozen-encoder linear probes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "finegrain/manifest.hpp"
#include "finegrain/model.hpp"
#include "finegrain/videoio.hpp"
#include "json.hpp"

namespace finegrain::training {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses "key = value" lines; '#' starts a comment. Duplicate keys keep the
// last value. Throws ParseError naming the line.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);

struct LambdaSchedule {
  double start = 1.0;
  double end = 0.1;
  long warmup_steps = 0;
  long anneal_steps = 1000;
};

// start before warmup, then linear to end over anneal_steps, then end.
double lambda_at_step(long step, const LambdaSchedule& schedule);

// Flat key=value training configuration. Field names are the config keys.
struct TrainConfig {
  std::string task = "fine_cls";  // coarse_cls | fine_cls | caption_simplified | caption_full
  double lambda_start = 1.0;
  double lambda_end = 0.1;
  long warmup_steps = -1;  // -1: one epoch
  long anneal_steps = 1000;
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 20;
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
  int checkpoint_every = 5;  // epochs between periodic checkpoints; 0 disables them
  double clip_norm = 5.0;
  bool deterministic = true;

  // model
  int channels_3d = 256;
  int channels_2d = 256;
  int blocks = 5;
  int lstm_hidden = 256;
  int lstm_layers = 2;
  int embed_dim = 256;
  int decoder_hidden = 256;
  int decoder_layers = 2;
  bool condition_every_step = false;

  // data
  int frames = 48;
  int resize = 128;
  int crop = 96;
  int max_len = 14;
  int min_occurrences = 6;

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void apply(const std::vector<std::pair<std::string, std::string>>& kv);
  static TrainConfig from_file(const std::filesystem::path& path);
  static std::vector<std::string> keys();
  void validate() const;

  bool is_classification() const { return task == "coarse_cls" || task == "fine_cls"; }
  std::string label_space() const { return task == "coarse_cls" ? "coarse" : "fine"; }
  std::string caption_target() const;
  LambdaSchedule schedule(long steps_per_epoch) const;
  videoio::ClipGeometry geometry() const { return {frames, resize, crop}; }

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Selects the caption text of a record: "full" or "simplified".
std::string caption_text(const corpus::AnnotationRecord& record, const std::string& target);

// Vocabulary over the training-split captions of the manifest.
corpus::Vocabulary build_corpus_vocabulary(const Manifest& manifest, const std::string& caption_target,
                                           int min_occurrences = 6, const std::string& split = "train");

ModelConfig make_model_config(const TrainConfig& config, int classes, const corpus::Vocabulary& vocab);

struct Batch {
  Tensor clips;
  std::vector<int> labels;
  std::vector<corpus::TokenSequence> captions;
};

// Decoded frames, labels and token sequences of one split, held in memory.
class ClipDataset {
 public:
  // caption_target may be empty when captions are not needed.
  ClipDataset(const Manifest& manifest, const std::string& split, const videoio::ClipGeometry& geometry,
              const std::string& label_space, const corpus::Vocabulary* vocab = nullptr,
              const std::string& caption_target = "", int max_len = 14);

  int size() const { return static_cast<int>(items_.size()); }
  const std::string& id(int i) const { return items_[i].id; }
  int label(int i) const { return label_space_ == "coarse" ? items_[i].group : items_[i].category; }
  int category(int i) const { return items_[i].category; }
  int group(int i) const { return items_[i].group; }
  const corpus::TokenSequence& caption(int i) const { return items_[i].caption; }
  // Reference tokens for caption metrics (not truncated, not vocabulary-mapped).
  const std::vector<std::string>& reference_tokens(int i) const { return items_[i].reference; }
  const corpus::AnnotationRecord& record(int i) const { return items_[i].record; }
  const std::vector<Image>& frames(int i) const { return items_[i].frames; }
  bool has_captions() const { return has_captions_; }

  // Clips of the given items; Train phase draws windows and crops from
  // `seed`, Eval phase is deterministic.
  Batch batch(const std::vector<int>& indices, videoio::Phase phase, std::uint64_t seed) const;

 private:
  struct Item {
    std::string id;
    int category = 0;
    int group = 0;
    corpus::AnnotationRecord record;
    corpus::TokenSequence caption;
    std::vector<std::string> reference;
    std::vector<Image> frames;
  };
  std::vector<Item> items_;
  videoio::ClipGeometry geometry_;
  std::string label_space_;
  bool has_captions_ = false;
};

// One optimiser update. Parameters whose loss term has zero weight are
// excluded from the update so they stay bit-identical.
LossBreakdown training_step(JointModel& model, nn::Adam& optimizer, const Batch& batch, double lambda,
                            double clip_norm);

// Per-split metric values plus run metadata.
struct MetricsReport {
  std::map<std::string, std::map<std::string, double>> splits;
  nlohmann::json config;
  long steps = 0;
  double wall_time_s = 0.0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  // Throws ValidationError if any metric is not finite.
  void validate() const;
};

using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  MetricsReport report;
};

// Trains on the manifest's train split and selects the best checkpoint on
// val. `vocab` defaults to a vocabulary built from the training captions.
TrainResult train_model(const TrainConfig& config, const std::filesystem::path& manifest_path,
                        const corpus::Vocabulary* vocab = nullptr, const LogFn& log = {});

// Metric names understood by evaluate_model.
const std::vector<std::string>& known_metrics();
// The metrics that apply to a model (all of them for joint models).
std::vector<std::string> default_metrics(const ModelConfig& config);

MetricsReport evaluate_model(JointModel& model, const Manifest& manifest, const std::string& split,
                             const std::vector<std::string>& metrics, int batch_size = 32);
MetricsReport evaluate_model(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path,
                             const std::string& split, const std::vector<std::string>& metrics = {},
                             int batch_size = 32);

// Pooled encoder embeddings [N, D] of a dataset in eval mode.
Tensor extract_embeddings(JointModel& model, const ClipDataset& data, int batch_size = 32);

struct ProbeOptions {
  std::string train_split = "train";
  std::string eval_split = "val";
  int epochs = 300;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

// Trains a fresh linear softmax head on frozen encoder embeddings.
MetricsReport fit_linear_probe(JointModel& model, const std::string& target_labels, const Manifest& manifest,
                               const ProbeOptions& options = {});
MetricsReport fit_linear_probe(const std::filesystem::path& checkpoint, const std::string& target_labels,
                               const std::filesystem::path& manifest_path, const ProbeOptions& options = {});

}  // namespace finegrain::training
