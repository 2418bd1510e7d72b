#pragma once

// Grad-CAM saliency for video: class scores and individual caption tokens,
// computed on the last convolutional block of the encoder.

#include <filesystem>
#include <string>
#include <vector>

#include "finegrain/corpus.hpp"
#include "finegrain/image.hpp"
#include "finegrain/model.hpp"
#include "finegrain/videoio.hpp"
#include "json.hpp"

namespace finegrain::explain {

struct SaliencyVolume {
  Tensor values;  // [T', h', w'], nonnegative, max 1 unless all zero
  std::string target_layer;  // "conv3d.last" or "conv2d.last"
  std::string objective;     // "class:<id>" or "token:<position>"
  double objective_value = 0.0;

  int frames() const { return values.dim(0); }
  int height() const { return values.dim(1); }
  int width() const { return values.dim(2); }
  bool is_zero() const;
  nlohmann::json metadata() const;
};

// Weights each target channel by its space-time mean gradient, sums, applies
// ReLU and scales the maximum to 1. The target is the last 3D block, or the
// last 2D block applied per frame when the 3D channel is disabled.
SaliencyVolume grad_cam_from_maps(const Tensor& activation, const Tensor& gradient);

// Objective: the pre-softmax score of class_id.
SaliencyVolume grad_cam_class(JointModel& model, const videoio::VideoClip& clip, int class_id);
SaliencyVolume grad_cam_class(const std::filesystem::path& checkpoint, const videoio::VideoClip& clip,
                              int class_id);

// Objective: teacher-forced log-probability of caption.indices[position],
// which must be a content token (not BOS, EOS or PAD).
SaliencyVolume grad_cam_token(JointModel& model, const videoio::VideoClip& clip, const corpus::TokenSequence& caption,
                              int position);
SaliencyVolume grad_cam_token(const std::filesystem::path& checkpoint, const videoio::VideoClip& clip,
                              const corpus::TokenSequence& caption, int position);

// Trilinear upsampling with half-cell centres to [frames, height, width].
Tensor upsample_volume(const Tensor& volume, int frames, int height, int width);

// Clip frames as 8-bit images.
std::vector<Image> clip_images(const videoio::VideoClip& clip);
// Frames alpha-blended with a heat colouring of the upsampled volume; a
// zero volume returns the raw frames.
std::vector<Image> overlay_frames(const videoio::VideoClip& clip, const SaliencyVolume& volume, double alpha = 0.5);
// Writes a one-row grid of `columns` evenly spaced overlay frames as a PNG.
void render_saliency_overlay(const videoio::VideoClip& clip, const SaliencyVolume& volume,
                             const std::filesystem::path& path, int columns = 8);

// NumPy .npy (v1.0, little-endian float64, C order) export.
void write_npy(const Tensor& values, const std::filesystem::path& path);
Tensor read_npy(const std::filesystem::path& path);

}  // namespace finegrain::explain
