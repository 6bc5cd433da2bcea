#include "vinet/maskgen.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vinet/error.hpp"

namespace vinet {

namespace {

using Rng = std::mt19937_64;

int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void check_square_params(const SquareParams& p) {
  require(p.min_side_fraction > 0.0 && p.max_side_fraction <= 0.5 &&
              p.min_side_fraction <= p.max_side_fraction,
          "square side fractions must satisfy 0 < min <= max <= 0.5");
}

int64_t draw_side(Rng& rng, int64_t height, int64_t width, const SquareParams& p) {
  const double m = static_cast<double>(std::min(height, width));
  const auto lo = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(p.min_side_fraction * m)));
  const auto hi = std::max<int64_t>(lo, static_cast<int64_t>(std::floor(p.max_side_fraction * m)));
  return uniform_int(rng, lo, hi);
}

torch::Tensor square(int64_t height, int64_t width, int64_t x, int64_t y, int64_t side) {
  auto m = torch::zeros({1, height, width});
  using torch::indexing::Slice;
  m.index_put_({0, Slice(y, y + side), Slice(x, x + side)}, 1.0);
  return m;
}

cv::Mat to_mat(const torch::Tensor& mask) {
  auto bytes = (mask.squeeze(0) > 0.5).to(torch::kUInt8).contiguous();
  cv::Mat view(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1,
               bytes.data_ptr<uint8_t>());
  return view.clone();
}

torch::Tensor from_mat(const cv::Mat& mat) {
  auto t = torch::from_blob(mat.data, {1, mat.rows, mat.cols}, torch::kUInt8).clone();
  return (t > 0).to(torch::kFloat32);
}

void check_brush(const BrushParams& b, int64_t height) {
  const int max_width = b.max_width > 0 ? b.max_width : std::max<int>(3, static_cast<int>(height / 8));
  require(b.min_strokes >= 1 && b.max_strokes <= 5 && b.min_strokes <= b.max_strokes,
          "brush stroke count must lie in [1, 5]");
  require(b.min_width >= 3 && b.min_width <= max_width &&
              max_width <= std::max<int>(3, static_cast<int>(height / 8)),
          "brush width must lie in [3, H/8]");
  require(b.min_vertices >= 4 && b.max_vertices <= 12 && b.min_vertices <= b.max_vertices,
          "brush vertex count must lie in [4, 12]");
  require(b.min_scale > 0.0 && b.min_scale <= b.max_scale, "brush scale range is invalid");
}

}  // namespace

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::RandomSquare: return "random_square";
    case MaskKind::FlyingSquare: return "flying_square";
    case MaskKind::Arbitrary: return "arbitrary";
    case MaskKind::Object: return "object";
  }
  return "unknown";
}

MaskKind parse_mask_kind(const std::string& name) {
  if (name == "random_square") return MaskKind::RandomSquare;
  if (name == "flying_square") return MaskKind::FlyingSquare;
  if (name == "arbitrary") return MaskKind::Arbitrary;
  if (name == "object") return MaskKind::Object;
  throw ContractError("unknown mask kind '" + name + "'");
}

MaskSeq random_square(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                      const SquareParams& params) {
  check_square_params(params);
  require(frames >= 1, "random_square: at least one frame");
  Rng rng(seed);
  std::vector<Mask> masks;
  masks.reserve(frames);
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t side = draw_side(rng, height, width, params);
    const int64_t x = uniform_int(rng, 0, width - side);
    const int64_t y = uniform_int(rng, 0, height - side);
    masks.emplace_back(square(height, width, x, y, side));
  }
  return MaskSeq(std::move(masks));
}

MaskSeq flying_square(int64_t frames, int64_t height, int64_t width, const FlyingSquarePath& path) {
  require(frames >= 1, "flying_square: at least one frame");
  require(path.step >= 1, "flying_square: step must be positive");
  require(path.side >= 1 && path.side <= std::min(height, width),
          "flying_square: side must fit inside the canvas");
  require(path.step <= path.side, "flying_square: step must not exceed the square side");
  int64_t dx = 0;
  int64_t dy = 0;
  switch (path.direction) {
    case Direction::Up: dy = -1; break;
    case Direction::Down: dy = 1; break;
    case Direction::Left: dx = -1; break;
    case Direction::Right: dx = 1; break;
  }
  std::vector<Mask> masks;
  masks.reserve(frames);
  for (int64_t k = 0; k < frames; ++k) {
    const int64_t x = std::clamp(path.x0 + k * path.step * dx, int64_t{0}, width - path.side);
    const int64_t y = std::clamp(path.y0 + k * path.step * dy, int64_t{0}, height - path.side);
    masks.emplace_back(square(height, width, x, y, path.side));
  }
  return MaskSeq(std::move(masks));
}

MaskSeq flying_square(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                      const FlyingSquareParams& params) {
  check_square_params(params.size);
  require(params.min_step >= 1 && params.min_step <= params.max_step,
          "flying_square: step range must be positive and ordered");
  Rng rng(seed);
  FlyingSquarePath path;
  path.side = draw_side(rng, height, width, params.size);
  path.x0 = uniform_int(rng, 0, width - path.side);
  path.y0 = uniform_int(rng, 0, height - path.side);
  path.step = std::min(uniform_int(rng, params.min_step, params.max_step), path.side);
  path.direction = static_cast<Direction>(uniform_int(rng, 0, 3));
  return flying_square(frames, height, width, path);
}

torch::Tensor rasterize_strokes(int64_t height, int64_t width, const std::vector<Stroke>& strokes) {
  auto canvas = torch::zeros({1, height, width});
  auto acc = canvas.accessor<float, 3>();
  // A pixel belongs to a segment when its centre lies within width / 2 of it.
  auto stamp = [&](const std::array<double, 2>& a, const std::array<double, 2>& b, double radius) {
    const double dx = b[0] - a[0];
    const double dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    const auto x_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a[0], b[0]) - radius)));
    const auto x_hi = std::min<int64_t>(width - 1, static_cast<int64_t>(std::ceil(std::max(a[0], b[0]) + radius)));
    const auto y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a[1], b[1]) - radius)));
    const auto y_hi = std::min<int64_t>(height - 1, static_cast<int64_t>(std::ceil(std::max(a[1], b[1]) + radius)));
    for (int64_t y = y_lo; y <= y_hi; ++y) {
      for (int64_t x = x_lo; x <= x_hi; ++x) {
        double t = len2 > 0 ? ((x - a[0]) * dx + (y - a[1]) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = x - (a[0] + t * dx);
        const double ey = y - (a[1] + t * dy);
        if (ex * ex + ey * ey <= radius * radius) acc[0][y][x] = 1.f;
      }
    }
  };
  for (const auto& s : strokes) {
    require(s.width >= 1, "rasterize_strokes: stroke width must be positive");
    require(!s.points.empty(), "rasterize_strokes: empty stroke");
    const double radius = s.width / 2.0;
    if (s.points.size() == 1) stamp(s.points[0], s.points[0], radius);
    for (size_t i = 0; i + 1 < s.points.size(); ++i) stamp(s.points[i], s.points[i + 1], radius);
  }
  return canvas;
}

MaskSeq arbitrary_mask(int64_t frames, int64_t height, int64_t width, uint64_t seed,
                       const BrushParams& brush) {
  check_brush(brush, height);
  require(frames >= 1, "arbitrary_mask: at least one frame");
  const int max_width =
      brush.max_width > 0 ? brush.max_width : std::max<int>(3, static_cast<int>(height / 8));
  Rng rng(seed);

  std::vector<Stroke> strokes;
  const auto n_strokes = uniform_int(rng, brush.min_strokes, brush.max_strokes);
  const double min_len = std::max<double>(2.0, std::min(height, width) / 16.0);
  const double max_len = std::min(height, width) / 4.0;
  for (int64_t s = 0; s < n_strokes; ++s) {
    Stroke stroke;
    stroke.width = static_cast<int>(uniform_int(rng, brush.min_width, max_width));
    const auto n_vertices = uniform_int(rng, brush.min_vertices, brush.max_vertices);
    double x = uniform_real(rng, 0.0, width - 1.0);
    double y = uniform_real(rng, 0.0, height - 1.0);
    double heading = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
    stroke.points.push_back({x, y});
    for (int64_t v = 1; v < n_vertices; ++v) {
      heading += uniform_real(rng, -std::numbers::pi / 2.0, std::numbers::pi / 2.0);
      const double len = uniform_real(rng, min_len, max_len);
      x = std::clamp(x + len * std::cos(heading), 0.0, width - 1.0);
      y = std::clamp(y + len * std::sin(heading), 0.0, height - 1.0);
      stroke.points.push_back({x, y});
    }
    strokes.push_back(std::move(stroke));
  }
  cv::Mat base = to_mat(rasterize_strokes(height, width, strokes));

  // Random walk of small affine perturbations about the canvas centre.
  const cv::Point2d centre((width - 1) / 2.0, (height - 1) / 2.0);
  cv::Mat accumulated = cv::Mat::eye(3, 3, CV_64F);
  std::vector<Mask> masks;
  masks.reserve(frames);
  for (int64_t t = 0; t < frames; ++t) {
    if (t > 0) {
      const double angle = uniform_real(rng, -brush.max_rotation_deg, brush.max_rotation_deg);
      const double scale = uniform_real(rng, brush.min_scale, brush.max_scale);
      const double shear = uniform_real(rng, -brush.max_shear, brush.max_shear);
      const double tx = uniform_real(rng, -brush.max_translation, brush.max_translation);
      const double ty = uniform_real(rng, -brush.max_translation, brush.max_translation);
      cv::Mat rot = cv::Mat::eye(3, 3, CV_64F);
      cv::getRotationMatrix2D(centre, angle, scale).copyTo(rot.rowRange(0, 2));
      cv::Mat shr = cv::Mat::eye(3, 3, CV_64F);
      shr.at<double>(0, 1) = shear;
      shr.at<double>(0, 2) = -shear * centre.y;
      cv::Mat move = cv::Mat::eye(3, 3, CV_64F);
      move.at<double>(0, 2) = tx;
      move.at<double>(1, 2) = ty;
      accumulated = move * shr * rot * accumulated;
    }
    cv::Mat warped;
    cv::warpAffine(base, warped, accumulated.rowRange(0, 2), base.size(), cv::INTER_NEAREST,
                   cv::BORDER_CONSTANT, cv::Scalar(0));
    masks.emplace_back(from_mat(warped));
  }
  return MaskSeq(std::move(masks));
}

MaskSeq dilate_masks(const MaskSeq& masks, int radius) {
  require(radius >= 0, "dilation radius must be non-negative");
  if (radius == 0) return masks;
  cv::Mat kernel =
      cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(2 * radius + 1, 2 * radius + 1));
  std::vector<Mask> out;
  out.reserve(masks.size());
  for (const auto& m : masks.masks()) {
    cv::Mat src = to_mat(m.tensor());
    cv::Mat dst;
    cv::dilate(src, dst, kernel, cv::Point(-1, -1), 1, cv::BORDER_CONSTANT, cv::Scalar(0));
    out.emplace_back(from_mat(dst));
  }
  return MaskSeq(std::move(out));
}

MaskSeq object_mask(const fs::path& segmentation_dir, int dilation_radius,
                    std::optional<size_t> expected_frames) {
  auto seg = load_mask_seq(segmentation_dir);
  if (expected_frames && seg.size() != *expected_frames) {
    throw ContractError("object_mask: " + std::to_string(seg.size()) +
                        " segmentation frames for a clip of " +
                        std::to_string(*expected_frames));
  }
  return dilate_masks(seg, dilation_radius);
}

MaskSeq generate_masks(const MaskSpec& spec, int64_t frames, int64_t height, int64_t width) {
  switch (spec.kind) {
    case MaskKind::RandomSquare: return random_square(frames, height, width, spec.seed, spec.square);
    case MaskKind::FlyingSquare: return flying_square(frames, height, width, spec.seed, spec.flying);
    case MaskKind::Arbitrary: return arbitrary_mask(frames, height, width, spec.seed, spec.brush);
    case MaskKind::Object: break;
  }
  throw ContractError("object masks are derived from segmentation; use object_mask()");
}

}  // namespace vinet
