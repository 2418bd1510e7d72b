#include "finegrain/videoio.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <stdexcept>
#include <string>

#include "finegrain/errors.hpp"
#include "finegrain/seeding.hpp"

namespace finegrain::videoio {

void ClipGeometry::validate() const {
  if (frames <= 0 || resize <= 0 || crop <= 0) throw ConfigError("clip geometry must be positive");
  if (crop > resize) throw ConfigError("crop larger than resize target");
}

std::vector<int> clip_window_indices(int length, int target, Phase phase, std::uint64_t seed) {
  if (length <= 0) throw std::invalid_argument("clip window: video has no frames");
  if (target <= 0) throw std::invalid_argument("clip window: target must be positive");
  std::vector<int> idx;
  idx.reserve(target);
  if (length >= target) {
    int start = (length - target) / 2;
    if (phase == Phase::Train) {
      std::mt19937_64 rng(seed);
      start = std::uniform_int_distribution<int>(0, length - target)(rng);
    }
    for (int i = 0; i < target; ++i) idx.push_back(start + i);
    return idx;
  }
  const int deficit = target - length;
  const int front = (deficit + 1) / 2;
  const int back = deficit / 2;
  idx.insert(idx.end(), front, 0);
  for (int i = 0; i < length; ++i) idx.push_back(i);
  idx.insert(idx.end(), back, length - 1);
  return idx;
}

std::vector<Image> sample_clip_window(const std::vector<Image>& frames, int target, Phase phase,
                                      std::uint64_t seed) {
  const auto idx = clip_window_indices(static_cast<int>(frames.size()), target, phase, seed);
  std::vector<Image> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(frames[i]);
  return out;
}

VideoClip preprocess_frames(const std::vector<Image>& frames, const ClipGeometry& geometry, Phase phase,
                            std::uint64_t seed) {
  geometry.validate();
  if (static_cast<int>(frames.size()) != geometry.frames) {
    throw std::invalid_argument("preprocess: expected " + std::to_string(geometry.frames) + " frames, got " +
                                std::to_string(frames.size()));
  }
  VideoClip clip;
  clip.frames = geometry.frames;
  clip.height = geometry.crop;
  clip.width = geometry.crop;
  clip.crop_x = clip.crop_y = geometry.center_offset();
  if (phase == Phase::Train) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dist(0, geometry.max_offset());
    clip.crop_x = dist(rng);
    clip.crop_y = dist(rng);
  }
  const int R = geometry.resize, C = geometry.crop, T = geometry.frames;
  clip.data.assign(std::size_t(3) * T * C * C, 0.0);
  for (int t = 0; t < T; ++t) {
    const auto resized = resize_bilinear_planar(frames[t], R, R);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < C; ++y) {
        const double* src = resized.data() + (std::size_t(c) * R + (y + clip.crop_y)) * R + clip.crop_x;
        double* dst = clip.data.data() + ((std::size_t(c) * T + t) * C + y) * C;
        for (int x = 0; x < C; ++x) dst[x] = std::clamp(src[x] / 255.0, 0.0, 1.0);
      }
    }
  }
  return clip;
}

VideoClip make_clip(const std::vector<Image>& frames, const ClipGeometry& geometry, Phase phase,
                    std::uint64_t seed) {
  auto window = sample_clip_window(frames, geometry.frames, phase, derive_seed({seed, 1}));
  return preprocess_frames(window, geometry, phase, derive_seed({seed, 2}));
}

Tensor clip_tensor(const VideoClip& clip) {
  Tensor t({1, 3, clip.frames, clip.height, clip.width});
  std::copy(clip.data.begin(), clip.data.end(), t.data());
  return t;
}

Tensor stack_clips(const std::vector<const VideoClip*>& clips) {
  if (clips.empty()) throw std::invalid_argument("stack_clips: no clips");
  const VideoClip& first = *clips.front();
  Tensor t({static_cast<int>(clips.size()), 3, first.frames, first.height, first.width});
  const std::size_t per = first.data.size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const VideoClip& c = *clips[i];
    if (c.frames != first.frames || c.height != first.height || c.width != first.width) {
      throw std::invalid_argument("stack_clips: clip shapes differ");
    }
    std::copy(c.data.begin(), c.data.end(), t.data() + i * per);
  }
  return t;
}

std::vector<Image> load_frame_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a frame directory: " + dir.string());
  std::vector<std::pair<long, std::filesystem::path>> numbered;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); })) {
      continue;
    }
    numbered.emplace_back(std::stol(stem), entry.path());
  }
  std::sort(numbered.begin(), numbered.end());
  std::vector<Image> frames;
  frames.reserve(numbered.size());
  for (const auto& [n, path] : numbered) frames.push_back(read_png(path));
  if (frames.empty()) throw std::runtime_error("no numbered PNG frames in " + dir.string());
  return frames;
}

}  // namespace finegrain::videoio
