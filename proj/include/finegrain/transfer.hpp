#pragma once

// Frozen-backbone transfer benchmark: per-frame feature sequences, three
// probe heads, k-shot episodes and repeated runs with t-based intervals.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "finegrain/image.hpp"
#include "finegrain/manifest.hpp"
#include "finegrain/model.hpp"
#include "finegrain/nn.hpp"
#include "json.hpp"

namespace finegrain::transfer {

// A frozen feature extractor consuming clip_len frames per call.
class BackboneAdapter {
 public:
  virtual ~BackboneAdapter() = default;
  virtual std::string identity() const = 0;
  virtual int feature_dim() const = 0;
  virtual int clip_len() const = 0;
  // One feature row per clip; every clip holds exactly clip_len frames. [N, D]
  virtual Tensor extract(const std::vector<std::vector<Image>>& clips) = 0;
  virtual std::uint64_t parameter_hash() = 0;
};

// Penultimate embedding of a trained joint model, one clip of
// geometry.frames frames at a time, eval-mode preprocessing.
class JointModelAdapter : public BackboneAdapter {
 public:
  JointModelAdapter(const std::filesystem::path& checkpoint, std::string identity = "");
  explicit JointModelAdapter(JointModel model, std::string identity);

  std::string identity() const override { return identity_; }
  int feature_dim() const override { return model_.config().encoder.embedding_dim(); }
  int clip_len() const override { return model_.config().geometry.frames; }
  Tensor extract(const std::vector<std::vector<Image>>& clips) override;
  std::uint64_t parameter_hash() override { return nn::hash_params(model_.params()); }

 private:
  JointModel model_;
  std::string identity_;
};

// Parameter-free per-frame baseline: mean colour over a grid x grid layout.
class PixelGridAdapter : public BackboneAdapter {
 public:
  explicit PixelGridAdapter(int grid = 4) : grid_(grid) {}
  std::string identity() const override { return "pixels" + std::to_string(grid_); }
  int feature_dim() const override { return 3 * grid_ * grid_; }
  int clip_len() const override { return 1; }
  Tensor extract(const std::vector<std::vector<Image>>& clips) override;
  std::uint64_t parameter_hash() override { return 0; }

 private:
  int grid_;
};

// One feature vector per input frame [T, D]: non-overlapping clips of
// clip_len frames (the last padded by repeating its final frame), each clip
// feature repeated over its frames, padding rows dropped.
Tensor extract_feature_sequence(BackboneAdapter& adapter, const std::vector<Image>& frames);

enum class HeadKind { Logistic, Mlp512, BiLstm128 };
HeadKind parse_head_kind(const std::string& name);
std::string head_name(HeadKind kind);

struct HeadOptions {
  int max_epochs = 100;
  int patience = 10;
  double lr = 1e-3;
  // Per-class share of training samples held out for early stopping
  // (rounded down; classes too small to spare one hold none out).
  double holdout_fraction = 0.2;
  int batch_size = 32;
  // Hidden width override for tests; <= 0 keeps 512 / 128.
  int hidden = 0;
};

using Sequence = Tensor;  // [T, D]

class TransferHead {
 public:
  TransferHead(HeadKind kind, int feature_dim, int classes, std::uint64_t seed, int hidden = 0);

  // Scores [N, K]: time-averaged probabilities for the per-step heads,
  // softmax of the final-state projection for bilstm.
  Tensor predict_proba(const std::vector<Sequence>& seqs) const;
  std::vector<int> predict(const std::vector<Sequence>& seqs) const;
  double accuracy(const std::vector<Sequence>& seqs, const std::vector<int>& labels) const;

  // Mean training loss over a batch of equal-length sequences; accumulates gradients.
  double loss_and_grad(const std::vector<const Sequence*>& batch, const std::vector<int>& labels);
  double loss(const std::vector<Sequence>& seqs, const std::vector<int>& labels) const;

  nn::ParamList params();
  HeadKind kind() const { return kind_; }

 private:
  Tensor step_logits(const Tensor& x) const;  // rows of [M, D] -> [M, K]

  HeadKind kind_;
  int classes_;
  nn::Linear fc1_;
  nn::Linear fc2_;
  mutable nn::BiLstm lstm_;  // forward caches are scratch state
};

struct FitResult {
  std::unique_ptr<TransferHead> head;
  int epochs = 0;
  int holdout_size = 0;
  double best_holdout_loss = 0.0;
};

FitResult fit_transfer_head(const std::vector<Sequence>& features, const std::vector<int>& labels, int classes,
                            HeadKind kind, std::uint64_t seed, const HeadOptions& options = {});

struct EpisodeSpec {
  std::optional<int> shots;  // nullopt = full training split
  int runs = 10;
  std::uint64_t seed = 0;
  std::string train_split = "train";
  std::string test_split = "test";
};

std::string shots_name(const std::optional<int>& shots);
std::optional<int> parse_shots(const std::string& text);

struct Episode {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

Episode sample_episode(const Manifest& manifest, const EpisodeSpec& spec, int run_index);

struct CellResult {
  std::string backbone;
  std::string head;
  std::string shots;
  int runs = 0;
  double mean = 0.0;
  std::optional<double> ci95;  // undefined for a single run
  std::vector<double> scores;
};

// Mean and two-sided 95% Student-t half-width with n - 1 degrees of freedom.
std::pair<double, std::optional<double>> mean_ci95(const std::vector<double>& scores);

struct BenchmarkSpec {
  std::vector<HeadKind> heads = {HeadKind::Logistic, HeadKind::Mlp512, HeadKind::BiLstm128};
  std::vector<std::optional<int>> shots = {1, 5, std::nullopt};
  int runs = 10;
  std::uint64_t seed = 0;
  HeadOptions head_options;
};

struct BenchmarkReport {
  std::vector<CellResult> cells;
  std::vector<std::string> warnings;
  nlohmann::json to_json() const;
  static BenchmarkReport from_json(const nlohmann::json& j);
};

// Every (backbone, head, shots) cell over `runs` episodes. Throws if any
// backbone's parameters change.
BenchmarkReport run_benchmark(const std::vector<BackboneAdapter*>& adapters, const Manifest& manifest,
                              const BenchmarkSpec& spec);

// Grouped bar chart (one group per backbone/shots pair, one bar per head) with CI whiskers.
void write_benchmark_plot(const BenchmarkReport& report, const std::filesystem::path& path);

}  // namespace finegrain::transfer
