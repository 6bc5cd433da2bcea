#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vinet {

namespace fs = std::filesystem;

/// RGB frame stored channels-first as a float32 [3, H, W] tensor with values in [0, 1].
/// H and W must be at least 16 and divisible by 8 so that the 1/2, 1/4 and 1/8 scales exist.
class Frame {
 public:
  Frame() = default;
  explicit Frame(torch::Tensor pixels);

  static Frame filled(int64_t height, int64_t width, float value);

  const torch::Tensor& tensor() const { return pixels_; }
  int64_t height() const { return pixels_.size(1); }
  int64_t width() const { return pixels_.size(2); }
  bool empty() const { return !pixels_.defined(); }

 private:
  torch::Tensor pixels_;
};

/// Binary hole mask, float32 [1, H, W], 1 marks a hole.
class Mask {
 public:
  Mask() = default;
  explicit Mask(torch::Tensor pixels);

  static Mask zeros(int64_t height, int64_t width);

  const torch::Tensor& tensor() const { return pixels_; }
  int64_t height() const { return pixels_.size(1); }
  int64_t width() const { return pixels_.size(2); }
  double area() const { return pixels_.sum().item<double>(); }

 private:
  torch::Tensor pixels_;
};

/// Backward displacement field, float32 [2, H, W] holding (dx, dy) in pixels.
/// The value at target pixel p names the source sample location p + flow(p).
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(torch::Tensor vectors);

  static FlowField zeros(int64_t height, int64_t width);

  const torch::Tensor& tensor() const { return vectors_; }
  int64_t height() const { return vectors_.size(1); }
  int64_t width() const { return vectors_.size(2); }

 private:
  torch::Tensor vectors_;
};

class Clip {
 public:
  Clip() = default;
  explicit Clip(std::vector<Frame> frames);

  /// Builds a clip from a [T, 3, H, W] tensor.
  static Clip from_tensor(const torch::Tensor& stacked);

  const std::vector<Frame>& frames() const { return frames_; }
  const Frame& operator[](size_t i) const { return frames_.at(i); }
  size_t size() const { return frames_.size(); }
  int64_t height() const { return frames_.front().height(); }
  int64_t width() const { return frames_.front().width(); }

  /// [T, 3, H, W]
  torch::Tensor stacked() const;

 private:
  std::vector<Frame> frames_;
};

class MaskSeq {
 public:
  MaskSeq() = default;
  explicit MaskSeq(std::vector<Mask> masks);

  static MaskSeq from_tensor(const torch::Tensor& stacked);
  static MaskSeq zeros(size_t count, int64_t height, int64_t width);

  const std::vector<Mask>& masks() const { return masks_; }
  const Mask& operator[](size_t i) const { return masks_.at(i); }
  size_t size() const { return masks_.size(); }
  bool empty() const { return masks_.empty(); }

  /// [T, 1, H, W]
  torch::Tensor stacked() const;

 private:
  std::vector<Mask> masks_;
};

/// Throws DimensionMismatch unless every mask matches the clip's frame count and size.
void check_aligned(const Clip& clip, const MaskSeq& masks);

/// Sorted list of *.png files in a directory.
std::vector<fs::path> list_png_files(const fs::path& dir);

/// Decodes an 8-bit RGB PNG into a float [3, H, W] tensor in [0, 1] with no size contract.
torch::Tensor read_rgb_png(const fs::path& path);
void write_rgb_png(const torch::Tensor& rgb, const fs::path& path);

/// Grayscale PNG thresholded at 128 into a {0,1} [1, H, W] tensor.
torch::Tensor read_binary_png(const fs::path& path);
void write_binary_png(const torch::Tensor& mask, const fs::path& path);

Clip load_clip(const fs::path& dir);
void save_clip(const Clip& clip, const fs::path& dir);
MaskSeq load_mask_seq(const fs::path& dir);
void save_mask_seq(const MaskSeq& masks, const fs::path& dir);

/// Bilinear resampling of a [C, H, W] or [N, C, H, W] tensor using half-pixel
/// centres (edge samples clamp). No size contract.
torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t out_h, int64_t out_w);

Frame resize_frame(const Frame& frame, int64_t out_h, int64_t out_w);
Mask resize_mask(const Mask& mask, int64_t out_h, int64_t out_w);
/// Resamples the field and rescales displacements to the new pixel units.
FlowField resize_flow(const FlowField& flow, int64_t out_h, int64_t out_w);

/// Middlebury layout: "PIEH", int32 width, int32 height, interleaved float32 (dx, dy).
FlowField read_flow(const fs::path& path);
void write_flow(const FlowField& flow, const fs::path& path);

bool is_dyadic_size(int64_t height, int64_t width);

}  // namespace vinet
