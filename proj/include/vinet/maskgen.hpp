#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vinet/media.hpp"

namespace vinet {

enum class MaskKind { RandomSquare, FlyingSquare, Arbitrary, Object };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& name);

struct SquareParams {
  double min_side_fraction = 0.25;  // of min(H, W)
  double max_side_fraction = 0.5;
};

enum class Direction { Up, Down, Left, Right };

struct FlyingSquarePath {
  int64_t x0 = 0;
  int64_t y0 = 0;
  int64_t side = 16;
  int64_t step = 2;  // pixels per frame, in [2, 8]
  Direction direction = Direction::Right;
};

struct FlyingSquareParams {
  SquareParams size;
  int64_t min_step = 2;
  int64_t max_step = 8;
};

struct BrushParams {
  int min_strokes = 1;
  int max_strokes = 5;
  int min_width = 3;
  int max_width = 0;  // 0 selects H / 8
  int min_vertices = 4;
  int max_vertices = 12;
  double max_translation = 5.0;  // pixels per frame
  double max_rotation_deg = 5.0;  // per frame
  double min_scale = 0.95;
  double max_scale = 1.05;
  double max_shear = 0.05;
};

/// One polyline stroke in pixel coordinates.
struct Stroke {
  std::vector<std::array<double, 2>> points;  // (x, y)
  int width = 3;
};

/// Everything needed to regenerate a mask sequence.
struct MaskSpec {
  MaskKind kind = MaskKind::RandomSquare;
  SquareParams square;
  FlyingSquareParams flying;
  BrushParams brush;
  uint64_t seed = 0;
};

MaskSeq random_square(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                      const SquareParams& params = {});

MaskSeq flying_square(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                      const FlyingSquareParams& params = {});
/// Deterministic path; the square is clamped to stay inside the canvas.
MaskSeq flying_square(int64_t frames, int64_t height, int64_t width, const FlyingSquarePath& path);

MaskSeq arbitrary_mask(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                       const BrushParams& brush = {});
/// Rasterizes strokes into a single {0,1} [1, H, W] mask.
torch::Tensor rasterize_strokes(int64_t height, int64_t width, const std::vector<Stroke>& strokes);

/// Loads per-frame segmentation PNGs and dilates each with a disk of `dilation_radius` px.
MaskSeq object_mask(const fs::path& segmentation_dir, int dilation_radius = 5,
                    std::optional<size_t> expected_frames = std::nullopt);
MaskSeq dilate_masks(const MaskSeq& masks, int radius);

/// Kinds other than Object; object masks need segmentation input.
MaskSeq generate_masks(const MaskSpec& spec, int64_t frames, int64_t height, int64_t width);

}  // namespace vinet
