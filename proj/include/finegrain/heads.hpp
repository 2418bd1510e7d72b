#pragma once

// Classification head, caption decoder and the joint objective.

#include <random>
#include <vector>

#include "finegrain/corpus.hpp"
#include "finegrain/nn.hpp"
#include "finegrain/tensor.hpp"
#include "json.hpp"

namespace finegrain::heads {

// Fully connected layer over h followed by softmax.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int embedding_dim, int classes, std::mt19937_64& rng);

  Tensor logits(const Tensor& h);  // [N, K], caches for backward
  Tensor backward(const Tensor& grad_logits);
  Tensor classify(const Tensor& h) const;  // probabilities [N, K]
  Tensor infer_logits(const Tensor& h) const;

  void collect(nn::ParamList& out);
  int classes() const { return fc_.out_features(); }
  nn::Linear& linear() { return fc_; }

 private:
  nn::Linear fc_;
};

struct DecoderConfig {
  int vocab_size = 4;
  int embed_dim = 256;
  int hidden = 256;
  int layers = 2;
  // Feed h alongside the token embedding at every step (default: only the
  // initial states are conditioned on h).
  bool condition_every_step = false;

  nlohmann::json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
  void validate() const;
  bool operator==(const DecoderConfig&) const = default;
};

struct DecodeTrace {
  std::vector<int> inputs;        // token fed at each step (BOS first)
  std::vector<int> outputs;       // argmax emitted at each step
  std::vector<double> log_probs;  // log-probability of each emitted token
};

class CaptionDecoder {
 public:
  CaptionDecoder() = default;
  CaptionDecoder(int embedding_dim, const DecoderConfig& config, std::mt19937_64& rng);

  // Teacher-forced negative log-likelihood summed over the positions up to
  // and including EOS of every sequence, averaged over the batch. Caches for
  // backward. h: [N, D].
  double caption_nll(const Tensor& h, const std::vector<corpus::TokenSequence>& targets);
  // Per-sequence losses of the last caption_nll call.
  const std::vector<double>& last_losses() const { return losses_; }
  // Backpropagates `scale` * d(caption_nll)/d(params) and returns the gradient on h.
  Tensor backward(double scale = 1.0);
  // Backpropagates sum over scored positions of weights[n, s] * (-log p) of the
  // last caption_nll call; weights: [N, S] with S = last_log_probs().dim(1).
  Tensor backward_weighted(const Tensor& weights);

  // Teacher-forced log-probabilities [N, L-1, V] of the last caption_nll call.
  const Tensor& last_log_probs() const { return log_probs_; }

  // Greedy decoding from BOS; stops at EOS or after max_len content tokens.
  corpus::TokenSequence decode_greedy(const Tensor& h_row, int max_len = 14, DecodeTrace* trace = nullptr) const;

  void collect(nn::ParamList& out);
  const DecoderConfig& config() const { return config_; }
  // Output projection (exposed for tests that force particular outputs).
  nn::Linear& output() { return out_; }

 private:
  int embedding_dim_ = 0;
  DecoderConfig config_;
  nn::Embedding embed_;
  std::vector<nn::Linear> init_h_;
  std::vector<nn::Linear> init_c_;
  std::vector<nn::Lstm> lstm_;
  nn::Linear out_;

  // caches
  int batch_ = 0;
  int steps_ = 0;
  Tensor mask_;  // [N, L-1] 1 for scored positions
  std::vector<int> target_ids_;
  Tensor log_probs_;
  std::vector<double> losses_;
};

// Joint loss = lambda * cls + (1 - lambda) * cap, lambda in [0, 1].
double joint_loss(double cls_loss, double cap_loss, double lambda);

}  // namespace finegrain::heads
