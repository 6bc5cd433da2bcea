#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vinet/media.hpp"
#include "vinet/warp.hpp"

namespace vinet {

constexpr double kPsnrCap = 99.0;

/// Occlusion-masked flow warping error of an output video.
///
/// For each t >= 1: sum_p M(p) * |Y_t(p) - warp(Y_{t-1}, W_t)(p)|_1 / (3 * sum_p M(p)), averaged
/// over the frames whose mask is non-empty. flows[k] and occl[k] belong to frame k + 1.
double warping_error(const Clip& output, const std::vector<FlowField>& flows,
                     const std::vector<OcclusionMask>& occl);
/// Tensor form: output [T, 3, H, W], flows [T-1, 2, H, W], occl [T-1, 1, H, W].
double warping_error(const torch::Tensor& output, const torch::Tensor& flows,
                     const torch::Tensor& occl);

/// Maps a clip to a fixed-length feature vector.
class ClipFeatureExtractor {
 public:
  virtual ~ClipFeatureExtractor() = default;
  virtual Eigen::VectorXd features(const Clip& clip) const = 0;
};

/// Fixed-seed random-weight 3D convolutional encoder with global average pooling.
class RandomConv3dExtractor final : public ClipFeatureExtractor {
 public:
  explicit RandomConv3dExtractor(uint64_t seed = 1234);
  Eigen::VectorXd features(const Clip& clip) const override;

 private:
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) over row-sample matrices, with
/// unbiased covariances. Needs at least two rows per set.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

enum class FidStandardization {
  None,
  Reference,  // per-dimension mean and deviation of the reference set
  Pooled,     // statistics of both sets together; keeps the distance symmetric
};

struct FidOptions {
  FidStandardization standardization = FidStandardization::Reference;
};

double video_fid(const std::vector<Clip>& outputs, const std::vector<Clip>& references,
                 const ClipFeatureExtractor& extractor, const FidOptions& options = {});

struct PsnrSsim {
  double psnr = 0;
  double ssim = 0;
};

/// PSNR (peak 1.0, capped at 99 dB) and SSIM, both averaged over frames.
PsnrSsim psnr_ssim(const Clip& output, const Clip& target);
double psnr(const torch::Tensor& a, const torch::Tensor& b);

struct VideoMetric {
  std::string video;
  double value = 0;
};

struct MetricReport {
  std::string metric;
  std::vector<VideoMetric> per_video;
  double aggregate = 0;

  /// One row per video plus an "aggregate" row: `video,metric,value`.
  std::string to_csv() const;
};

/// Aggregate = mean of per-video values.
MetricReport make_metric_report(const std::string& metric, std::vector<VideoMetric> per_video);

}  // namespace vinet
