#pragma once

// Two-channel video encoder: a per-frame 2D CNN and a spatiotemporal 3D CNN
// run in parallel, their per-timestep features are concatenated and
// aggregated by a 2-layer bidirectional LSTM whose outputs are mean-pooled
// into the encoding h.

#include <cstdint>
#include <random>
#include <vector>

#include "finegrain/nn.hpp"
#include "finegrain/tensor.hpp"
#include "json.hpp"

namespace finegrain::encoder {

struct EncoderConfig {
  int channels_3d = 256;  // F3; 0 disables the 3D channel
  int channels_2d = 256;  // F2; 0 disables the 2D channel
  int blocks = 5;         // conv blocks per channel
  int lstm_hidden = 256;  // per direction
  int lstm_layers = 2;    // fixed

  int embedding_dim() const { return 2 * lstm_hidden; }
  // Width of block i in a channel whose final width is `final_width`.
  int block_width(int final_width, int i) const;
  // Clip length divisor: the 3D channel pools time by 2 in its last two blocks.
  int temporal_stride() const;
  // Frames, height and width must be divisible by these for the pooling to tile.
  int spatial_stride() const { return 1 << blocks; }
  void validate() const;
  void validate_input(int frames, int height, int width) const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

class VideoEncoder {
 public:
  VideoEncoder() = default;
  VideoEncoder(const EncoderConfig& config, std::mt19937_64& rng);

  // clips: [N, 3, T, H, W] -> h: [N, D]. Caches everything backward needs.
  Tensor forward(const Tensor& clips, nn::Mode mode);
  // Accumulates parameter gradients for d(loss)/dh.
  void backward(const Tensor& grad_h);

  // Individual stages (each also caches for backward within `forward`).
  // [N, T', F3]
  Tensor forward_3d(const Tensor& clips, nn::Mode mode);
  // [N, T', F2] when `align` (T' = T / temporal_stride), otherwise per frame [N, T, F2].
  Tensor forward_2d(const Tensor& clips, nn::Mode mode, bool align = true);
  // [N, T', F3 + F2] -> [N, D]
  Tensor aggregate_temporal(const Tensor& features);

  // Target layer for saliency: post-ReLU map of the last 3D block (or the last
  // 2D block when the 3D channel is disabled) and the gradient reaching it in
  // the most recent backward pass. Shapes [N, C, T, H, W].
  Tensor target_activation() const;
  Tensor target_gradient() const;
  bool target_is_3d() const { return config_.channels_3d > 0; }

  void collect(nn::ParamList& out);
  const EncoderConfig& config() const { return config_; }
  long parameter_count();

 private:
  Tensor backward_aggregate(const Tensor& grad_h);
  void backward_3d(const Tensor& grad_features);
  void backward_2d(const Tensor& grad_features);

  EncoderConfig config_;
  std::vector<nn::ConvBlock> blocks_3d_;
  std::vector<nn::ConvBlock> blocks_2d_;
  std::vector<nn::BiLstm> lstm_;

  // Forward caches.
  int steps_ = 0;          // T'
  int frames_ = 0;         // T
  std::vector<int> map_3d_;  // final 3D map shape
  std::vector<int> map_2d_;  // final 2D map shape
  Tensor last_grad_map_;   // gradient on the final block output of the target channel
};

// Pools [N, T, F] over non-overlapping windows of `stride` steps.
Tensor temporal_average(const Tensor& seq, int stride);

}  // namespace finegrain::encoder
