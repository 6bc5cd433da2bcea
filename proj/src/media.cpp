#include "vinet/media.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vinet/error.hpp"

namespace vinet {

namespace {

std::string shape_str(int64_t h, int64_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

torch::Tensor as_cpu_float(const torch::Tensor& t) {
  return t.detach().to(torch::kCPU, torch::kFloat32).contiguous().clone();
}

void check_dyadic(int64_t h, int64_t w, const char* what) {
  if (!is_dyadic_size(h, w)) {
    throw ContractError(std::string(what) + ": size " + shape_str(h, w) +
                        " must be >= 16 and divisible by 8");
  }
}

void check_binary(const torch::Tensor& t, const char* what) {
  auto ok = torch::logical_or(t == 0, t == 1).all().item<bool>();
  require(ok, std::string(what) + ": values must be exactly 0 or 1");
}

}  // namespace

bool is_dyadic_size(int64_t height, int64_t width) {
  return height >= 16 && width >= 16 && height % 8 == 0 && width % 8 == 0;
}

Frame::Frame(torch::Tensor pixels) {
  require(pixels.dim() == 3 && pixels.size(0) == 3, "Frame: expected a [3, H, W] tensor");
  check_dyadic(pixels.size(1), pixels.size(2), "Frame");
  pixels = as_cpu_float(pixels);
  require(torch::isfinite(pixels).all().item<bool>(), "Frame: non-finite pixel value");
  require(pixels.min().item<float>() >= 0.f && pixels.max().item<float>() <= 1.f,
          "Frame: pixel values must lie in [0, 1]");
  pixels_ = std::move(pixels);
}

Frame Frame::filled(int64_t height, int64_t width, float value) {
  return Frame(torch::full({3, height, width}, value));
}

Mask::Mask(torch::Tensor pixels) {
  if (pixels.dim() == 2) pixels = pixels.unsqueeze(0);
  require(pixels.dim() == 3 && pixels.size(0) == 1, "Mask: expected a [1, H, W] tensor");
  pixels = as_cpu_float(pixels);
  check_binary(pixels, "Mask");
  pixels_ = std::move(pixels);
}

Mask Mask::zeros(int64_t height, int64_t width) { return Mask(torch::zeros({1, height, width})); }

FlowField::FlowField(torch::Tensor vectors) {
  require(vectors.dim() == 3 && vectors.size(0) == 2, "FlowField: expected a [2, H, W] tensor");
  vectors = as_cpu_float(vectors);
  require(torch::isfinite(vectors).all().item<bool>(), "FlowField: non-finite displacement");
  vectors_ = std::move(vectors);
}

FlowField FlowField::zeros(int64_t height, int64_t width) {
  return FlowField(torch::zeros({2, height, width}));
}

Clip::Clip(std::vector<Frame> frames) : frames_(std::move(frames)) {
  require(!frames_.empty(), "Clip: at least one frame is required");
  for (const auto& f : frames_) {
    if (f.height() != frames_.front().height() || f.width() != frames_.front().width()) {
      throw DimensionMismatch("Clip: frame size " + shape_str(f.height(), f.width()) +
                              " differs from " +
                              shape_str(frames_.front().height(), frames_.front().width()));
    }
  }
}

Clip Clip::from_tensor(const torch::Tensor& stacked) {
  require(stacked.dim() == 4, "Clip::from_tensor: expected [T, 3, H, W]");
  std::vector<Frame> frames;
  frames.reserve(stacked.size(0));
  for (int64_t t = 0; t < stacked.size(0); ++t) frames.emplace_back(stacked[t]);
  return Clip(std::move(frames));
}

torch::Tensor Clip::stacked() const {
  std::vector<torch::Tensor> ts;
  ts.reserve(frames_.size());
  for (const auto& f : frames_) ts.push_back(f.tensor());
  return torch::stack(ts);
}

MaskSeq::MaskSeq(std::vector<Mask> masks) : masks_(std::move(masks)) {
  for (const auto& m : masks_) {
    if (m.height() != masks_.front().height() || m.width() != masks_.front().width()) {
      throw DimensionMismatch("MaskSeq: mask sizes differ");
    }
  }
}

MaskSeq MaskSeq::from_tensor(const torch::Tensor& stacked) {
  require(stacked.dim() == 4 && stacked.size(1) == 1, "MaskSeq::from_tensor: expected [T, 1, H, W]");
  std::vector<Mask> masks;
  masks.reserve(stacked.size(0));
  for (int64_t t = 0; t < stacked.size(0); ++t) masks.emplace_back(stacked[t]);
  return MaskSeq(std::move(masks));
}

MaskSeq MaskSeq::zeros(size_t count, int64_t height, int64_t width) {
  return MaskSeq(std::vector<Mask>(count, Mask::zeros(height, width)));
}

torch::Tensor MaskSeq::stacked() const {
  require(!masks_.empty(), "MaskSeq::stacked: empty sequence");
  std::vector<torch::Tensor> ts;
  ts.reserve(masks_.size());
  for (const auto& m : masks_) ts.push_back(m.tensor());
  return torch::stack(ts);
}

void check_aligned(const Clip& clip, const MaskSeq& masks) {
  if (clip.size() != masks.size()) {
    throw DimensionMismatch("clip has " + std::to_string(clip.size()) + " frames but " +
                            std::to_string(masks.size()) + " masks were given");
  }
  for (const auto& m : masks.masks()) {
    if (m.height() != clip.height() || m.width() != clip.width()) {
      throw DimensionMismatch("mask size " + shape_str(m.height(), m.width()) +
                              " does not match frame size " +
                              shape_str(clip.height(), clip.width()));
    }
  }
}

std::vector<fs::path> list_png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

torch::Tensor read_rgb_png(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DecodeError("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void write_rgb_png(const torch::Tensor& rgb, const fs::path& path) {
  require(rgb.dim() == 3 && rgb.size(0) == 3, "write_rgb_png: expected [3, H, W]");
  auto bytes = as_cpu_float(rgb).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8)
                   .permute({1, 2, 0}).contiguous();
  cv::Mat view(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3,
               bytes.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image: " + path.string());
}

torch::Tensor read_binary_png(const fs::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DecodeError("cannot decode mask: " + path.string());
  auto t = torch::from_blob(gray.data, {1, gray.rows, gray.cols}, torch::kUInt8).clone();
  return (t >= 128).to(torch::kFloat32);
}

void write_binary_png(const torch::Tensor& mask, const fs::path& path) {
  auto m = as_cpu_float(mask);
  if (m.dim() == 3) m = m.squeeze(0);
  require(m.dim() == 2, "write_binary_png: expected [1, H, W] or [H, W]");
  auto bytes = (m > 0.5).to(torch::kUInt8).mul(255).contiguous();
  cv::Mat view(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1,
               bytes.data_ptr<uint8_t>());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), view)) throw IoError("cannot write mask: " + path.string());
}

Clip load_clip(const fs::path& dir) {
  auto files = list_png_files(dir);
  if (files.empty()) throw IoError("no frames found in " + dir.string());
  std::vector<torch::Tensor> raw;
  raw.reserve(files.size());
  for (const auto& f : files) {
    raw.push_back(read_rgb_png(f));
    if (raw.back().sizes() != raw.front().sizes()) {
      throw DimensionMismatch("frame " + f.string() + " is " +
                              shape_str(raw.back().size(1), raw.back().size(2)) +
                              " but the clip is " +
                              shape_str(raw.front().size(1), raw.front().size(2)));
    }
  }
  std::vector<Frame> frames;
  frames.reserve(raw.size());
  for (auto& r : raw) frames.emplace_back(std::move(r));
  return Clip(std::move(frames));
}

void save_clip(const Clip& clip, const fs::path& dir) {
  fs::create_directories(dir);
  char name[32];
  for (size_t t = 0; t < clip.size(); ++t) {
    std::snprintf(name, sizeof(name), "%05zu.png", t);
    write_rgb_png(clip[t].tensor(), dir / name);
  }
}

MaskSeq load_mask_seq(const fs::path& dir) {
  auto files = list_png_files(dir);
  if (files.empty()) throw IoError("no masks found in " + dir.string());
  std::vector<Mask> masks;
  masks.reserve(files.size());
  for (const auto& f : files) {
    masks.emplace_back(read_binary_png(f));
    if (masks.back().height() != masks.front().height() ||
        masks.back().width() != masks.front().width()) {
      throw DimensionMismatch("mask " + f.string() + " has a different size");
    }
  }
  return MaskSeq(std::move(masks));
}

void save_mask_seq(const MaskSeq& masks, const fs::path& dir) {
  fs::create_directories(dir);
  char name[32];
  for (size_t t = 0; t < masks.size(); ++t) {
    std::snprintf(name, sizeof(name), "%05zu.png", t);
    write_binary_png(masks[t].tensor(), dir / name);
  }
}

torch::Tensor resize_bilinear(const torch::Tensor& image, int64_t out_h, int64_t out_w) {
  require(image.dim() == 3 || image.dim() == 4, "resize_bilinear: expected [C,H,W] or [N,C,H,W]");
  require(out_h > 0 && out_w > 0, "resize_bilinear: output size must be positive");
  const bool batched = image.dim() == 4;
  auto in = batched ? image : image.unsqueeze(0);
  if (in.size(2) == out_h && in.size(3) == out_w) return image.clone();
  namespace F = torch::nn::functional;
  auto out = F::interpolate(in, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{out_h, out_w})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  return batched ? out : out.squeeze(0);
}

Frame resize_frame(const Frame& frame, int64_t out_h, int64_t out_w) {
  check_dyadic(out_h, out_w, "resize_frame");
  return Frame(resize_bilinear(frame.tensor(), out_h, out_w).clamp(0.0, 1.0));
}

Mask resize_mask(const Mask& mask, int64_t out_h, int64_t out_w) {
  return Mask((resize_bilinear(mask.tensor(), out_h, out_w) >= 0.5).to(torch::kFloat32));
}

FlowField resize_flow(const FlowField& flow, int64_t out_h, int64_t out_w) {
  auto t = resize_bilinear(flow.tensor(), out_h, out_w);
  const double sx = static_cast<double>(out_w) / static_cast<double>(flow.width());
  const double sy = static_cast<double>(out_h) / static_cast<double>(flow.height());
  auto scale = torch::tensor({sx, sy}, torch::kFloat32).view({2, 1, 1});
  return FlowField(t * scale);
}

namespace {
constexpr std::array<char, 4> kFlowMagic = {'P', 'I', 'E', 'H'};
}

FlowField read_flow(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file: " + path.string());
  std::array<char, 4> magic{};
  int32_t width = 0;
  int32_t height = 0;
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(&width), sizeof(width));
  in.read(reinterpret_cast<char*>(&height), sizeof(height));
  if (!in) throw FormatError("truncated flow header: " + path.string());
  if (magic != kFlowMagic) throw FormatError("bad flow magic in " + path.string());
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw FormatError("implausible flow dimensions in " + path.string());
  }
  auto hwc = torch::empty({height, width, 2}, torch::kFloat32);
  const auto bytes = static_cast<std::streamsize>(hwc.numel() * sizeof(float));
  in.read(reinterpret_cast<char*>(hwc.data_ptr<float>()), bytes);
  if (in.gcount() != bytes) throw FormatError("truncated flow payload: " + path.string());
  return FlowField(hwc.permute({2, 0, 1}).contiguous());
}

void write_flow(const FlowField& flow, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create flow file: " + path.string());
  const auto width = static_cast<int32_t>(flow.width());
  const auto height = static_cast<int32_t>(flow.height());
  auto hwc = flow.tensor().permute({1, 2, 0}).contiguous();
  out.write(kFlowMagic.data(), 4);
  out.write(reinterpret_cast<const char*>(&width), sizeof(width));
  out.write(reinterpret_cast<const char*>(&height), sizeof(height));
  out.write(reinterpret_cast<const char*>(hwc.data_ptr<float>()),
            static_cast<std::streamsize>(hwc.numel() * sizeof(float)));
  if (!out) throw IoError("failed writing flow file: " + path.string());
}

}  // namespace vinet
