#pragma once

// Frame sequences -> fixed-length, cropped, [0,1]-scaled clips.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "finegrain/image.hpp"
#include "finegrain/tensor.hpp"

namespace finegrain::videoio {

enum class Phase { Train, Eval };

// Defaults follow the full-scale recipe: 48 frames, resize to 128, crop 96.
struct ClipGeometry {
  int frames = 48;
  int resize = 128;
  int crop = 96;

  void validate() const;
  int max_offset() const { return resize - crop; }
  int center_offset() const { return (resize - crop) / 2; }
};

// Planar [3][T][H][W] clip with values in [0, 1].
struct VideoClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  int crop_x = 0;
  int crop_y = 0;
  std::vector<double> data;

  double at(int t, int y, int x, int c) const {
    return data[((std::size_t(c) * frames + t) * height + y) * width + x];
  }
};

// Source frame index for each of the `target` output frames. Longer inputs
// take a consecutive window (random in Train, centred in Eval); shorter inputs
// replicate the first frame ceil(d/2) times in front and the last frame
// floor(d/2) times at the back.
std::vector<int> clip_window_indices(int length, int target, Phase phase, std::uint64_t seed);

std::vector<Image> sample_clip_window(const std::vector<Image>& frames, int target, Phase phase,
                                      std::uint64_t seed);

// Resizes every frame to geometry.resize, applies one shared crop window
// (random in Train, centred in Eval) and scales to [0, 1].
VideoClip preprocess_frames(const std::vector<Image>& frames, const ClipGeometry& geometry, Phase phase,
                            std::uint64_t seed);

// sample_clip_window followed by preprocess_frames with decorrelated seeds.
VideoClip make_clip(const std::vector<Image>& frames, const ClipGeometry& geometry, Phase phase,
                    std::uint64_t seed);

// Stacks clips into a model batch [N, 3, T, H, W].
Tensor stack_clips(const std::vector<const VideoClip*>& clips);
Tensor clip_tensor(const VideoClip& clip);

// Reads the numbered PNG frames <dir>/<n>.png in numeric order.
std::vector<Image> load_frame_directory(const std::filesystem::path& dir);

}  // namespace finegrain::videoio
