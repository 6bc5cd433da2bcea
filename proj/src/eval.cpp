#include "vinet/eval.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "vinet/error.hpp"
#include "vinet/losses.hpp"

namespace vinet {

double warping_error(const torch::Tensor& output, const torch::Tensor& flows,
                     const torch::Tensor& occl) {
  require(output.dim() == 4 && output.size(1) == 3, "warping_error: output must be [T, 3, H, W]");
  const int64_t t = output.size(0);
  if (flows.size(0) != t - 1 || occl.size(0) != t - 1) {
    throw DimensionMismatch("warping_error: need T - 1 flows and occlusion masks");
  }
  torch::NoGradGuard no_grad;
  auto out = output.to(torch::kFloat64);
  double sum = 0;
  int64_t counted = 0;
  for (int64_t k = 0; k + 1 < t; ++k) {
    auto m = occl[k].to(torch::kFloat64);
    const double support = m.sum().item<double>();
    if (support <= 0) continue;
    auto warped = bilinear_warp(out[k], flows[k].to(torch::kFloat64));
    const double err = (m * (out[k + 1] - warped).abs()).sum().item<double>();
    sum += err / (3.0 * support);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double warping_error(const Clip& output, const std::vector<FlowField>& flows,
                     const std::vector<OcclusionMask>& occl) {
  if (flows.size() + 1 != output.size() || occl.size() + 1 != output.size()) {
    throw DimensionMismatch("warping_error: need T - 1 flows and occlusion masks");
  }
  if (output.size() == 1) return 0.0;
  std::vector<torch::Tensor> f;
  std::vector<torch::Tensor> o;
  for (const auto& x : flows) f.push_back(x.tensor());
  for (const auto& x : occl) o.push_back(x.tensor());
  return warping_error(output.stacked(), torch::stack(f), torch::stack(o));
}

RandomConv3dExtractor::RandomConv3dExtractor(uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::pair<int64_t, int64_t>> channels = {{3, 16}, {16, 32}, {32, 64}};
  for (auto [in, out] : channels) {
    const double fan_in = static_cast<double>(in * 27);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    auto w = torch::empty({out, in, 3, 3, 3}, torch::kFloat64);
    auto* p = w.data_ptr<double>();
    for (int64_t i = 0; i < w.numel(); ++i) p[i] = dist(rng);
    weights_.push_back(w);
    biases_.push_back(torch::zeros({out}, torch::kFloat64));
  }
}

Eigen::VectorXd RandomConv3dExtractor::features(const Clip& clip) const {
  torch::NoGradGuard no_grad;
  // [1, 3, T, H, W]
  auto x = clip.stacked().to(torch::kFloat64).permute({1, 0, 2, 3}).unsqueeze(0);
  const std::vector<std::vector<int64_t>> strides = {{1, 2, 2}, {2, 2, 2}, {2, 2, 2}};
  for (size_t l = 0; l < weights_.size(); ++l) {
    x = torch::relu(torch::conv3d(x, weights_[l], biases_[l], strides[l], 1));
  }
  auto pooled = x.mean({2, 3, 4}).squeeze(0).contiguous();
  Eigen::VectorXd v(pooled.size(0));
  for (int64_t i = 0; i < pooled.size(0); ++i) v(i) = pooled[i].item<double>();
  return v;
}

namespace {

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
  Eigen::MatrixXd centred = x.rowwise() - mean;
  return (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  // Tr((A B)^{1/2}) = Tr((A^{1/2} B A^{1/2})^{1/2}) for PSD A, B.
  const Eigen::MatrixXd root_a = psd_sqrt(a);
  const Eigen::MatrixXd inner = root_a * b * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()),
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require(a.rows() >= 2 && b.rows() >= 2, "frechet_distance: at least two samples per set");
  require(a.cols() == b.cols(), "frechet_distance: feature dimensions differ");
  const Eigen::RowVectorXd mu_a = a.colwise().mean();
  const Eigen::RowVectorXd mu_b = b.colwise().mean();
  const Eigen::MatrixXd cov_a = covariance(a, mu_a);
  const Eigen::MatrixXd cov_b = covariance(b, mu_b);
  // Average both orderings so the result is exactly symmetric in its arguments.
  const double cross = 0.5 * (trace_sqrt_product(cov_a, cov_b) + trace_sqrt_product(cov_b, cov_a));
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

double video_fid(const std::vector<Clip>& outputs, const std::vector<Clip>& references,
                 const ClipFeatureExtractor& extractor, const FidOptions& options) {
  require(outputs.size() >= 2 && references.size() >= 2,
          "video_fid: at least two clips per set are required");
  auto collect = [&](const std::vector<Clip>& clips) {
    Eigen::MatrixXd m;
    for (size_t i = 0; i < clips.size(); ++i) {
      Eigen::VectorXd f = extractor.features(clips[i]);
      if (i == 0) m.resize(static_cast<Eigen::Index>(clips.size()), f.size());
      require(f.size() == m.cols(), "video_fid: extractor returned inconsistent feature sizes");
      m.row(static_cast<Eigen::Index>(i)) = f.transpose();
    }
    return m;
  };
  Eigen::MatrixXd fo = collect(outputs);
  Eigen::MatrixXd fr = collect(references);
  require(fo.cols() == fr.cols(), "video_fid: feature dimensions differ");
  if (options.standardization != FidStandardization::None) {
    Eigen::MatrixXd basis = fr;
    if (options.standardization == FidStandardization::Pooled) {
      basis.resize(fo.rows() + fr.rows(), fo.cols());
      basis << fo, fr;
    }
    const Eigen::RowVectorXd mean = basis.colwise().mean();
    Eigen::RowVectorXd sd =
        ((basis.rowwise() - mean).array().square().colwise().sum() /
         static_cast<double>(basis.rows() - 1))
            .sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j) {
      if (sd(j) < 1e-12) sd(j) = 1.0;
    }
    fo = (fo.rowwise() - mean).array().rowwise() / sd.array();
    fr = (fr.rowwise() - mean).array().rowwise() / sd.array();
  }
  return frechet_distance(fo, fr);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw DimensionMismatch("psnr: shape mismatch");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

PsnrSsim psnr_ssim(const Clip& output, const Clip& target) {
  if (output.size() != target.size() || output.height() != target.height() ||
      output.width() != target.width()) {
    throw DimensionMismatch("psnr_ssim: clips differ in shape");
  }
  torch::NoGradGuard no_grad;
  PsnrSsim r;
  for (size_t t = 0; t < output.size(); ++t) {
    r.psnr += psnr(output[t].tensor(), target[t].tensor());
    r.ssim += ssim(output[t].tensor().to(torch::kFloat64), target[t].tensor().to(torch::kFloat64))
                  .item<double>();
  }
  r.psnr /= static_cast<double>(output.size());
  r.ssim /= static_cast<double>(output.size());
  return r;
}

MetricReport make_metric_report(const std::string& metric, std::vector<VideoMetric> per_video) {
  MetricReport r;
  r.metric = metric;
  r.per_video = std::move(per_video);
  double sum = 0;
  for (const auto& v : r.per_video) sum += v.value;
  r.aggregate = r.per_video.empty() ? 0.0 : sum / static_cast<double>(r.per_video.size());
  return r;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "video,metric,value\n";
  for (const auto& v : per_video) os << v.video << ',' << metric << ',' << v.value << '\n';
  os << "aggregate," << metric << ',' << aggregate << '\n';
  return os.str();
}

}  // namespace vinet
