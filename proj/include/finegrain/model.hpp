#pragma once

// The joint model (shared encoder + classifier + caption decoder) and its
// checkpoint archive.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "finegrain/encoder.hpp"
#include "finegrain/heads.hpp"
#include "finegrain/videoio.hpp"
#include "json.hpp"

namespace finegrain {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  heads::DecoderConfig decoder;
  int classes = 2;
  std::string label_space = "fine";  // "fine" or "coarse"
  videoio::ClipGeometry geometry;
  std::uint64_t seed = 0;
  // Training task and caption target ("full", "simplified" or empty), kept so
  // a checkpoint can be evaluated without its training config.
  std::string task;
  std::string caption_target;
  // Token list of the caption vocabulary, index = position.
  std::vector<std::string> vocabulary;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double captioning = 0.0;
};

class JointModel {
 public:
  explicit JointModel(const ModelConfig& config);

  // Forward + backward of lambda * CE + (1 - lambda) * NLL over a batch.
  // Parameter gradients are accumulated (call zero_grads first). A term
  // whose weight is zero is still evaluated for reporting but contributes no
  // gradient. Captions may be empty when lambda == 1.
  LossBreakdown forward_backward(const Tensor& clips, const std::vector<int>& labels,
                                 const std::vector<corpus::TokenSequence>& captions, double lambda, nn::Mode mode);

  Tensor encode(const Tensor& clips, nn::Mode mode = nn::Mode::Eval) { return encoder_.forward(clips, mode); }

  nn::ParamList params();
  nn::ParamList encoder_params();
  nn::ParamList classifier_params();
  nn::ParamList decoder_params();
  static bool is_decoder_param(const nn::Param& p);
  static bool is_classifier_param(const nn::Param& p);

  encoder::VideoEncoder& encoder() { return encoder_; }
  heads::ClassifierHead& classifier() { return classifier_; }
  heads::CaptionDecoder& decoder() { return decoder_; }
  const ModelConfig& config() const { return config_; }

  void save(const std::filesystem::path& path);
  static JointModel load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  encoder::VideoEncoder encoder_;
  heads::ClassifierHead classifier_;
  heads::CaptionDecoder decoder_;
};

// Reads only the config header of a checkpoint.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace finegrain
