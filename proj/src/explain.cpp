#include "finegrain/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "finegrain/errors.hpp"

namespace finegrain::explain {

using nlohmann::json;

bool SaliencyVolume::is_zero() const {
  return std::all_of(values.values().begin(), values.values().end(), [](double v) { return v == 0.0; });
}

json SaliencyVolume::metadata() const {
  return {{"target_layer", target_layer},
          {"fallback_2d", target_layer != "conv3d.last"},
          {"objective", objective},
          {"objective_value", objective_value},
          {"shape", values.shape()}};
}

SaliencyVolume grad_cam_from_maps(const Tensor& activation, const Tensor& gradient) {
  if (activation.shape() != gradient.shape() || activation.rank() != 5 || activation.dim(0) != 1) {
    throw std::invalid_argument("grad_cam_from_maps expects matching [1, C, T, H, W] maps");
  }
  const int C = activation.dim(1), T = activation.dim(2), H = activation.dim(3), W = activation.dim(4);
  const std::size_t plane = std::size_t(T) * H * W;
  SaliencyVolume v;
  v.values = Tensor({T, H, W});
  for (int c = 0; c < C; ++c) {
    const double* g = gradient.data() + c * plane;
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += g[i];
    alpha /= double(plane);
    if (alpha == 0.0) continue;
    const double* a = activation.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) v.values[i] += alpha * a[i];
  }
  double peak = 0.0;
  for (double& x : v.values.values()) {
    x = std::max(0.0, x);
    peak = std::max(peak, x);
  }
  if (peak > 0.0)
    for (double& x : v.values.values()) x /= peak;
  return v;
}

namespace {

Tensor clip_batch(const videoio::VideoClip& clip, const ModelConfig& config) {
  if (clip.frames != config.geometry.frames || clip.height != config.geometry.crop || clip.width != config.geometry.crop) {
    throw ValidationError("clip shape does not match the model geometry");
  }
  return videoio::clip_tensor(clip);
}

SaliencyVolume finish(JointModel& model, const std::string& objective, double value) {
  auto& enc = model.encoder();
  SaliencyVolume v = grad_cam_from_maps(enc.target_activation(), enc.target_gradient());
  v.target_layer = enc.target_is_3d() ? "conv3d.last" : "conv2d.last";
  v.objective = objective;
  v.objective_value = value;
  nn::zero_grads(model.params());
  return v;
}

}  // namespace

SaliencyVolume grad_cam_class(JointModel& model, const videoio::VideoClip& clip, int class_id) {
  if (class_id < 0 || class_id >= model.config().classes) throw std::out_of_range("class id out of range");
  const Tensor x = clip_batch(clip, model.config());
  nn::zero_grads(model.params());
  const Tensor h = model.encoder().forward(x, nn::Mode::Eval);
  const Tensor logits = model.classifier().logits(h);
  Tensor g({1, model.config().classes});
  g[class_id] = 1.0;
  model.encoder().backward(model.classifier().backward(g));
  return finish(model, "class:" + std::to_string(class_id), logits[class_id]);
}

SaliencyVolume grad_cam_class(const std::filesystem::path& checkpoint, const videoio::VideoClip& clip, int class_id) {
  JointModel model = JointModel::load(checkpoint);
  return grad_cam_class(model, clip, class_id);
}

SaliencyVolume grad_cam_token(JointModel& model, const videoio::VideoClip& clip, const corpus::TokenSequence& caption,
                              int position) {
  caption.validate();
  const int eos = caption.eos_position();
  if (position < 1 || position >= eos) {
    throw std::out_of_range("token position " + std::to_string(position) + " is not a content token (content spans 1.." +
                            std::to_string(eos - 1) + ")");
  }
  const Tensor x = clip_batch(clip, model.config());
  nn::zero_grads(model.params());
  const Tensor h = model.encoder().forward(x, nn::Mode::Eval);
  auto& dec = model.decoder();
  dec.caption_nll(h, {caption});
  const Tensor& lp = dec.last_log_probs();
  const int S = lp.dim(1), V = lp.dim(2);
  // Step s predicts token s + 1; weight -1 turns the NLL gradient into that of log p.
  Tensor w({1, S});
  w[position - 1] = -1.0;
  model.encoder().backward(dec.backward_weighted(w));
  const double value = lp[std::size_t(position - 1) * V + caption.indices[position]];
  return finish(model, "token:" + std::to_string(position), value);
}

SaliencyVolume grad_cam_token(const std::filesystem::path& checkpoint, const videoio::VideoClip& clip,
                              const corpus::TokenSequence& caption, int position) {
  JointModel model = JointModel::load(checkpoint);
  return grad_cam_token(model, clip, caption, position);
}

Tensor upsample_volume(const Tensor& volume, int frames, int height, int width) {
  if (volume.rank() != 3) throw std::invalid_argument("upsample_volume expects [T, H, W]");
  const int t0 = volume.dim(0), h0 = volume.dim(1), w0 = volume.dim(2);
  struct Tap {
    int lo, hi;
    double f;
  };
  auto taps = [](int n_out, int n_in) {
    std::vector<Tap> out(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
      const double src = std::clamp((i + 0.5) * n_in / n_out - 0.5, 0.0, double(n_in - 1));
      const int lo = static_cast<int>(std::floor(src));
      out[i] = {lo, std::min(lo + 1, n_in - 1), src - lo};
    }
    return out;
  };
  const auto tt = taps(frames, t0), ty = taps(height, h0), tx = taps(width, w0);
  auto at = [&](int t, int y, int x) { return volume[(std::size_t(t) * h0 + y) * w0 + x]; };
  Tensor out({frames, height, width});
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
              const double wt = (a ? tt[t].f : 1 - tt[t].f) * (b ? ty[y].f : 1 - ty[y].f) * (c ? tx[x].f : 1 - tx[x].f);
              if (wt != 0.0) acc += wt * at(a ? tt[t].hi : tt[t].lo, b ? ty[y].hi : ty[y].lo, c ? tx[x].hi : tx[x].lo);
            }
        out[(std::size_t(t) * height + y) * width + x] = acc;
      }
  return out;
}

std::vector<Image> clip_images(const videoio::VideoClip& clip) {
  std::vector<Image> out;
  for (int t = 0; t < clip.frames; ++t) {
    Image im(clip.width, clip.height);
    for (int y = 0; y < clip.height; ++y)
      for (int x = 0; x < clip.width; ++x)
        for (int c = 0; c < 3; ++c)
          im.pixel(x, y)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(clip.at(t, y, x, c), 0.0, 1.0) * 255.0));
    out.push_back(std::move(im));
  }
  return out;
}

std::vector<Image> overlay_frames(const videoio::VideoClip& clip, const SaliencyVolume& volume, double alpha) {
  std::vector<Image> frames = clip_images(clip);
  if (volume.is_zero()) return frames;
  const Tensor up = upsample_volume(volume.values, clip.frames, clip.height, clip.width);
  for (int t = 0; t < clip.frames; ++t) {
    for (int y = 0; y < clip.height; ++y) {
      for (int x = 0; x < clip.width; ++x) {
        const double s = std::clamp(up[(std::size_t(t) * clip.height + y) * clip.width + x], 0.0, 1.0);
        const double heat[3] = {std::clamp(1.5 - std::abs(4 * s - 3), 0.0, 1.0),
                                std::clamp(1.5 - std::abs(4 * s - 2), 0.0, 1.0),
                                std::clamp(1.5 - std::abs(4 * s - 1), 0.0, 1.0)};
        auto* p = frames[t].pixel(x, y);
        for (int c = 0; c < 3; ++c)
          p[c] = static_cast<std::uint8_t>(std::lround(p[c] * (1 - alpha * s) + 255.0 * heat[c] * alpha * s));
      }
    }
  }
  return frames;
}

void render_saliency_overlay(const videoio::VideoClip& clip, const SaliencyVolume& volume,
                             const std::filesystem::path& path, int columns) {
  if (columns < 1) throw std::invalid_argument("overlay grid needs at least one column");
  const auto frames = overlay_frames(clip, volume);
  const int n = std::min(columns, clip.frames), gap = 2;
  Image grid(n * clip.width + (n - 1) * gap, clip.height);
  std::fill(grid.rgb.begin(), grid.rgb.end(), std::uint8_t(255));
  for (int i = 0; i < n; ++i) {
    const int t = n == 1 ? 0 : static_cast<int>(std::lround(double(i) * (clip.frames - 1) / (n - 1)));
    for (int y = 0; y < clip.height; ++y)
      for (int x = 0; x < clip.width; ++x)
        std::copy_n(frames[t].pixel(x, y), 3, grid.pixel(i * (clip.width + gap) + x, y));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_png(path, grid);
}

void write_npy(const Tensor& values, const std::filesystem::path& path) {
  std::string dims = "(";
  for (std::size_t i = 0; i < values.shape().size(); ++i) dims += (i ? ", " : "") + std::to_string(values.shape()[i]);
  dims += values.rank() == 1 ? ",)" : ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + dims + ", }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char le[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(le, 2);
  out << header;
  out.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(double)));
}

Tensor read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[10];
  in.read(magic, 10);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw ParseError("not an npy file: " + path.string());
  const std::size_t len = std::uint8_t(magic[8]) | (std::size_t(std::uint8_t(magic[9])) << 8);
  std::string header(len, '\0');
  in.read(header.data(), std::streamsize(len));
  if (header.find("'<f8'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos) {
    throw ParseError("unsupported npy layout in " + path.string());
  }
  const auto open = header.find('(', header.find("'shape'")), close = header.find(')', open);
  std::vector<int> shape;
  std::stringstream dims(header.substr(open + 1, close - open - 1));
  for (std::string item; std::getline(dims, item, ',');)
    if (item.find_first_not_of(' ') != std::string::npos) shape.push_back(std::stoi(item));
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
  if (!in) throw ParseError("truncated npy file: " + path.string());
  return t;
}

}  // namespace finegrain::explain
