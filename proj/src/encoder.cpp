#include "finegrain/encoder.hpp"

#include <stdexcept>
#include <string>

#include "finegrain/errors.hpp"

namespace finegrain::encoder {

using nlohmann::json;

int EncoderConfig::block_width(int final_width, int i) const {
  const int shift = blocks - 1 - i;
  return std::max(1, final_width >> shift);
}

int EncoderConfig::temporal_stride() const {
  if (channels_3d == 0) return 1;
  return blocks >= 2 ? 4 : 2;
}

void EncoderConfig::validate() const {
  if (channels_3d < 0 || channels_2d < 0) throw ConfigError("channel widths must be non-negative");
  if (channels_3d + channels_2d == 0) throw ConfigError("both encoder channels are disabled");
  if (blocks < 1) throw ConfigError("encoder needs at least one block per channel");
  if (lstm_hidden < 1) throw ConfigError("lstm_hidden must be positive");
  if (lstm_layers != 2) throw ConfigError("the aggregator has exactly 2 recurrent layers");
}

void EncoderConfig::validate_input(int frames, int height, int width) const {
  const int ts = temporal_stride(), ss = spatial_stride();
  if (frames < ts || frames % ts != 0) {
    throw ConfigError("clip length " + std::to_string(frames) + " not divisible by temporal stride " +
                      std::to_string(ts));
  }
  if (height % ss != 0 || width % ss != 0) {
    throw ConfigError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by spatial stride " + std::to_string(ss));
  }
}

json EncoderConfig::to_json() const {
  return {{"channels_3d", channels_3d},
          {"channels_2d", channels_2d},
          {"blocks", blocks},
          {"lstm_hidden", lstm_hidden},
          {"lstm_layers", lstm_layers}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  c.channels_3d = j.at("channels_3d").get<int>();
  c.channels_2d = j.at("channels_2d").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.lstm_layers = j.value("lstm_layers", 2);
  c.validate();
  return c;
}

namespace {

// [N, C, T, h, w] -> [N, T, C]
Tensor spatial_mean(const Tensor& map) {
  const int N = map.dim(0), C = map.dim(1), T = map.dim(2), HW = map.dim(3) * map.dim(4);
  Tensor out({N, T, C});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) {
        const double* p = map.data() + ((long(n) * C + c) * T + t) * HW;
        double s = 0.0;
        for (int i = 0; i < HW; ++i) s += p[i];
        out[(long(n) * T + t) * C + c] = s / HW;
      }
    }
  }
  return out;
}

// Adjoint of spatial_mean: [N, T, C] -> [N, C, T, h, w].
Tensor spatial_mean_backward(const Tensor& grad, const std::vector<int>& map_shape) {
  Tensor out(map_shape);
  const int N = map_shape[0], C = map_shape[1], T = map_shape[2], HW = map_shape[3] * map_shape[4];
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) {
        const double g = grad[(long(n) * T + t) * C + c] / HW;
        double* p = out.data() + ((long(n) * C + c) * T + t) * HW;
        for (int i = 0; i < HW; ++i) p[i] = g;
      }
    }
  }
  return out;
}

Tensor temporal_average_backward(const Tensor& grad, int stride) {
  const int N = grad.dim(0), Tp = grad.dim(1), F = grad.dim(2);
  Tensor out({N, Tp * stride, F});
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < Tp * stride; ++t) {
      const double* g = grad.data() + (long(n) * Tp + t / stride) * F;
      double* o = out.data() + (long(n) * Tp * stride + t) * F;
      for (int f = 0; f < F; ++f) o[f] = g[f] / stride;
    }
  }
  return out;
}

}  // namespace

Tensor temporal_average(const Tensor& seq, int stride) {
  const int N = seq.dim(0), T = seq.dim(1), F = seq.dim(2);
  if (stride < 1 || T % stride != 0) throw std::invalid_argument("temporal_average: length not divisible by stride");
  const int Tp = T / stride;
  Tensor out({N, Tp, F});
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < Tp; ++t) {
      double* o = out.data() + (long(n) * Tp + t) * F;
      for (int k = 0; k < stride; ++k) {
        const double* s = seq.data() + (long(n) * T + t * stride + k) * F;
        for (int f = 0; f < F; ++f) o[f] += s[f];
      }
      for (int f = 0; f < F; ++f) o[f] /= stride;
    }
  }
  return out;
}

VideoEncoder::VideoEncoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  const int B = config_.blocks;
  int in = 3;
  for (int i = 0; i < (config_.channels_3d > 0 ? B : 0); ++i) {
    nn::ConvBlock::Options o;
    o.in_channels = in;
    o.out_channels = config_.block_width(config_.channels_3d, i);
    o.kernel_t = 3;
    o.pool_t = i >= B - 2 ? 2 : 1;
    o.pool_s = 2;
    blocks_3d_.emplace_back("enc3d." + std::to_string(i), o, rng);
    in = o.out_channels;
  }
  in = 3;
  for (int i = 0; i < (config_.channels_2d > 0 ? B : 0); ++i) {
    nn::ConvBlock::Options o;
    o.in_channels = in;
    o.out_channels = config_.block_width(config_.channels_2d, i);
    o.kernel_t = 1;
    o.pool_t = 1;
    o.pool_s = 2;
    blocks_2d_.emplace_back("enc2d." + std::to_string(i), o, rng);
    in = o.out_channels;
  }
  const int F = config_.channels_3d + config_.channels_2d;
  lstm_.emplace_back("enc.lstm0", F, config_.lstm_hidden, rng);
  lstm_.emplace_back("enc.lstm1", 2 * config_.lstm_hidden, config_.lstm_hidden, rng);
}

Tensor VideoEncoder::forward_3d(const Tensor& clips, nn::Mode mode) {
  if (blocks_3d_.empty()) throw ConfigError("3D channel is disabled (channels_3d = 0)");
  Tensor x = clips;
  for (auto& b : blocks_3d_) x = b.forward(x, mode);
  map_3d_ = x.shape();
  return spatial_mean(x);
}

Tensor VideoEncoder::forward_2d(const Tensor& clips, nn::Mode mode, bool align) {
  if (blocks_2d_.empty()) throw ConfigError("2D channel is disabled (channels_2d = 0)");
  Tensor x = clips;
  for (auto& b : blocks_2d_) x = b.forward(x, mode);
  map_2d_ = x.shape();
  Tensor seq = spatial_mean(x);
  return align ? temporal_average(seq, config_.temporal_stride()) : seq;
}

Tensor VideoEncoder::aggregate_temporal(const Tensor& features) {
  const int F = config_.channels_3d + config_.channels_2d;
  if (features.rank() != 3 || features.dim(2) != F) {
    throw std::invalid_argument("aggregate_temporal: expected [N,T'," + std::to_string(F) + "], got " +
                                features.shape_string());
  }
  const int N = features.dim(0), T = features.dim(1);
  if (T < 1) throw std::invalid_argument("aggregate_temporal: empty sequence");
  steps_ = T;
  Tensor x = features;
  for (auto& l : lstm_) x = l.forward(x);
  const int D = config_.embedding_dim();
  Tensor h({N, D});
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < T; ++t) {
      const double* row = x.data() + (long(n) * T + t) * D;
      for (int d = 0; d < D; ++d) h[long(n) * D + d] += row[d];
    }
    for (int d = 0; d < D; ++d) h[long(n) * D + d] /= T;
  }
  return h;
}

Tensor VideoEncoder::forward(const Tensor& clips, nn::Mode mode) {
  if (clips.rank() != 5 || clips.dim(1) != 3) {
    throw std::invalid_argument("encoder input must be [N,3,T,H,W], got " + clips.shape_string());
  }
  config_.validate_input(clips.dim(2), clips.dim(3), clips.dim(4));
  frames_ = clips.dim(2);
  const int N = clips.dim(0);
  const int T = frames_ / config_.temporal_stride();
  const int F3 = config_.channels_3d, F2 = config_.channels_2d, F = F3 + F2;

  Tensor feats({N, T, F});
  if (F3 > 0) {
    const Tensor f3 = forward_3d(clips, mode);
    for (long r = 0; r < long(N) * T; ++r) std::copy(f3.data() + r * F3, f3.data() + (r + 1) * F3, feats.data() + r * F);
  }
  if (F2 > 0) {
    const Tensor f2 = forward_2d(clips, mode, true);
    for (long r = 0; r < long(N) * T; ++r) {
      std::copy(f2.data() + r * F2, f2.data() + (r + 1) * F2, feats.data() + r * F + F3);
    }
  }
  return aggregate_temporal(feats);
}

Tensor VideoEncoder::backward_aggregate(const Tensor& grad_h) {
  const int N = grad_h.dim(0), D = config_.embedding_dim(), T = steps_;
  Tensor g({N, T, D});
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) g[(long(n) * T + t) * D + d] = grad_h[long(n) * D + d] / T;
    }
  }
  for (auto it = lstm_.rbegin(); it != lstm_.rend(); ++it) g = it->backward(g);
  return g;
}

void VideoEncoder::backward_3d(const Tensor& grad_features) {
  Tensor g = spatial_mean_backward(grad_features, map_3d_);
  last_grad_map_ = g;
  for (auto it = blocks_3d_.rbegin(); it != blocks_3d_.rend(); ++it) {
    // The input gradient of the first block is never needed.
    if (std::next(it) == blocks_3d_.rend()) {
      it->backward(g);
      break;
    }
    g = it->backward(g);
  }
}

void VideoEncoder::backward_2d(const Tensor& grad_features) {
  const Tensor per_frame = temporal_average_backward(grad_features, config_.temporal_stride());
  Tensor g = spatial_mean_backward(per_frame, map_2d_);
  if (blocks_3d_.empty()) last_grad_map_ = g;
  for (auto it = blocks_2d_.rbegin(); it != blocks_2d_.rend(); ++it) g = it->backward(g);
}

void VideoEncoder::backward(const Tensor& grad_h) {
  const Tensor gf = backward_aggregate(grad_h);
  const int N = gf.dim(0), T = gf.dim(1);
  const int F3 = config_.channels_3d, F2 = config_.channels_2d, F = F3 + F2;
  if (F3 > 0) {
    Tensor g3({N, T, F3});
    for (long r = 0; r < long(N) * T; ++r) std::copy(gf.data() + r * F, gf.data() + r * F + F3, g3.data() + r * F3);
    backward_3d(g3);
  }
  if (F2 > 0) {
    Tensor g2({N, T, F2});
    for (long r = 0; r < long(N) * T; ++r) {
      std::copy(gf.data() + r * F + F3, gf.data() + (r + 1) * F, g2.data() + r * F2);
    }
    backward_2d(g2);
  }
}

Tensor VideoEncoder::target_activation() const {
  return target_is_3d() ? blocks_3d_.back().activation() : blocks_2d_.back().activation();
}

Tensor VideoEncoder::target_gradient() const {
  if (last_grad_map_.empty()) throw std::logic_error("target_gradient: no backward pass recorded");
  return target_is_3d() ? blocks_3d_.back().activation_grad(last_grad_map_)
                        : blocks_2d_.back().activation_grad(last_grad_map_);
}

void VideoEncoder::collect(nn::ParamList& out) {
  for (auto& b : blocks_3d_) b.collect(out);
  for (auto& b : blocks_2d_) b.collect(out);
  for (auto& l : lstm_) l.collect(out);
}

long VideoEncoder::parameter_count() {
  nn::ParamList ps;
  collect(ps);
  long n = 0;
  for (const auto* p : ps) {
    if (p->trainable) n += static_cast<long>(p->value.size());
  }
  return n;
}

}  // namespace finegrain::encoder
