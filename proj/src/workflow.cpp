#include "vinet/workflow.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "vinet/error.hpp"
#include "vinet/pipeline.hpp"
#include "vinet/warp.hpp"

namespace vinet {

namespace {

std::string numbered(int64_t t, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%05lld%s", static_cast<long long>(t), suffix);
  return buf;
}

bool non_empty_dir(const fs::path& dir) {
  return fs::exists(dir) && (!fs::is_directory(dir) || !fs::is_empty(dir));
}

}  // namespace

std::vector<std::string> make_synthetic_data(const SynthDataOptions& options,
                                             const fs::path& out_dir) {
  require(options.height % 8 == 0 && options.width % 8 == 0 && options.height >= 16 &&
              options.width >= 16,
          "make-data: resolution must be >= 16 and divisible by 8");
  require(options.clips >= 1, "make-data: at least one clip");
  require(options.frames >= 2, "make-data: at least two frames per clip");
  require(options.max_speed >= 1, "make-data: max_speed must be >= 1");
  if (non_empty_dir(out_dir)) {
    if (!options.force) {
      throw ContractError("make-data: output directory is not empty (use --force): " +
                          out_dir.string());
    }
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir);

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> speed(-options.max_speed, options.max_speed);
  std::uniform_real_distribution<double> fraction(0.3, 0.5);
  std::vector<std::string> names;
  std::ofstream manifest(out_dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
  for (int64_t c = 0; c < options.clips; ++c) {
    SynthSpec spec;
    spec.height = options.height;
    spec.width = options.width;
    spec.frames = options.frames;
    int vx = 0;
    while (vx == 0) vx = speed(rng);
    spec.velocity_x = vx;
    spec.velocity_y = speed(rng);
    spec.object_fraction = fraction(rng);
    const uint64_t clip_seed = rng();
    auto seq = synth_sequence(spec, clip_seed);

    char name[32];
    std::snprintf(name, sizeof(name), "clip%03lld", static_cast<long long>(c));
    const fs::path dir = out_dir / name;
    save_clip(seq.clip, dir / "frames");
    save_mask_seq(seq.object_masks, dir / "seg");
    fs::create_directories(dir / "flow");
    fs::create_directories(dir / "occ");
    for (size_t k = 0; k < seq.flows_prev.size(); ++k) {
      const auto t = static_cast<int64_t>(k + 1);
      write_flow(seq.flows_prev[k], dir / "flow" / numbered(t, "_bwd.flo"));
      write_flow(seq.flows_first[k], dir / "flow" / numbered(t, "_to1.flo"));
      write_binary_png(seq.occl_prev[k].tensor(), dir / "occ" / numbered(t, "_bwd.png"));
      write_binary_png(seq.occl_first[k].tensor(), dir / "occ" / numbered(t, "_to1.png"));
    }
    manifest << name << "\n";
    names.emplace_back(name);
  }
  return names;
}

int cache_flow(const fs::path& dataset_root, const FlowEstimator& estimator, bool force) {
  int processed = 0;
  for (const auto& name : read_manifest(dataset_root)) {
    const fs::path dir = dataset_root / name;
    const Clip clip = load_clip(dir / "frames");
    const auto length = static_cast<int64_t>(clip.size());
    const fs::path last = dir / "flow" / numbered(length - 1, "_bwd.flo");
    if (!force && (length == 1 || fs::exists(last))) continue;
    fs::create_directories(dir / "flow");
    fs::create_directories(dir / "occ");
    for (int64_t t = 1; t < length; ++t) {
      const Frame& cur = clip[static_cast<size_t>(t)];
      const Frame& prev = clip[static_cast<size_t>(t - 1)];
      const Frame& first = clip[0];
      // Backward flow W_{t => t-1} aligns frame t-1 onto frame t.
      const auto bwd = estimator.estimate(cur, prev);
      const auto fwd = estimator.estimate(prev, cur);
      const auto to_first = estimator.estimate(cur, first);
      const auto from_first = estimator.estimate(first, cur);
      write_flow(bwd, dir / "flow" / numbered(t, "_bwd.flo"));
      write_flow(to_first, dir / "flow" / numbered(t, "_to1.flo"));
      write_binary_png(occlusion_mask(fwd, bwd).tensor(), dir / "occ" / numbered(t, "_bwd.png"));
      write_binary_png(occlusion_mask(from_first, to_first).tensor(),
                       dir / "occ" / numbered(t, "_to1.png"));
    }
    ++processed;
  }
  return processed;
}

int compare_video(const std::vector<fs::path>& sources, const std::optional<fs::path>& masks_dir,
                  const fs::path& out_dir) {
  require(!sources.empty(), "compare: at least one source directory");
  std::vector<std::vector<fs::path>> files;
  for (const auto& s : sources) {
    if (!fs::is_directory(s)) throw IoError("compare: not a directory: " + s.string());
    files.push_back(list_png_files(s));
  }
  const size_t count = files.front().size();
  if (count == 0) throw ContractError("compare: no frames in " + sources.front().string());
  for (size_t i = 1; i < files.size(); ++i) {
    if (files[i].size() != count) {
      throw ContractError("compare: frame count mismatch between " + sources.front().string() +
                          " and " + sources[i].string());
    }
  }
  std::vector<fs::path> mask_files;
  if (masks_dir) {
    mask_files = list_png_files(*masks_dir);
    if (mask_files.size() != count) throw ContractError("compare: mask count mismatch");
  }
  constexpr int64_t kGap = 2;
  fs::create_directories(out_dir);
  for (size_t t = 0; t < count; ++t) {
    std::vector<torch::Tensor> tiles;
    for (const auto& f : files) tiles.push_back(read_rgb_png(f[t]));
    const int64_t h = tiles.front().size(1);
    for (const auto& tile : tiles) {
      if (tile.size(1) != h) throw DimensionMismatch("compare: tiles differ in height");
    }
    if (masks_dir) {
      auto hole = read_binary_png(mask_files[t]);
      if (hole.size(1) != h || hole.size(2) != tiles[0].size(2)) {
        throw DimensionMismatch("compare: mask size differs from the first source");
      }
      // Boundary: hole pixels with a non-hole 4-neighbour.
      auto eroded = -torch::max_pool2d(-hole.unsqueeze(0), 3, 1, 1).squeeze(0);
      auto edge = (hole - eroded).clamp_min(0) > 0.5;
      auto red = torch::tensor({1.f, 0.f, 0.f}).view({3, 1, 1}).expand_as(tiles[0]);
      tiles[0] = torch::where(edge.expand_as(tiles[0]), red, tiles[0]);
    }
    std::vector<torch::Tensor> row;
    for (size_t i = 0; i < tiles.size(); ++i) {
      if (i > 0) row.push_back(torch::ones({3, h, kGap}));
      row.push_back(tiles[i]);
    }
    write_rgb_png(torch::cat(row, 2), out_dir / numbered(static_cast<int64_t>(t), ".png"));
  }
  return static_cast<int>(count);
}

MetricReport evaluate_predictions(const std::string& metric, const fs::path& dataset_root,
                                  const fs::path& pred_root, uint64_t extractor_seed) {
  require(metric == "warp" || metric == "fid" || metric == "psnr",
          "eval: metric must be one of warp, fid, psnr");
  const auto names = read_manifest(dataset_root);
  std::vector<Clip> preds;
  std::vector<Clip> refs;
  for (const auto& name : names) {
    preds.push_back(load_clip(pred_root / name / "frames"));
    refs.push_back(load_clip(dataset_root / name / "frames"));
    if (preds.back().size() != refs.back().size() ||
        preds.back().height() != refs.back().height() ||
        preds.back().width() != refs.back().width()) {
      throw DimensionMismatch("eval: prediction for '" + name + "' differs in shape from the reference");
    }
  }

  std::vector<VideoMetric> rows;
  if (metric == "psnr") {
    for (size_t i = 0; i < names.size(); ++i) rows.push_back({names[i], psnr_ssim(preds[i], refs[i]).psnr});
    return make_metric_report("psnr", rows);
  }
  if (metric == "warp") {
    for (size_t i = 0; i < names.size(); ++i) {
      const fs::path dir = dataset_root / names[i];
      std::vector<FlowField> flows;
      std::vector<OcclusionMask> occl;
      for (size_t t = 1; t < preds[i].size(); ++t) {
        const auto tt = static_cast<int64_t>(t);
        auto flow = read_flow(dir / "flow" / numbered(tt, "_bwd.flo"));
        if (flow.height() != preds[i].height() || flow.width() != preds[i].width()) {
          throw DimensionMismatch("eval: cached flow size differs for '" + names[i] + "'");
        }
        flows.push_back(flow);
        occl.emplace_back(read_binary_png(dir / "occ" / numbered(tt, "_bwd.png")));
      }
      rows.push_back({names[i], warping_error(preds[i], flows, occl)});
    }
    return make_metric_report("warp", rows);
  }

  // FID is a set statistic: per-video rows hold the squared feature distance of each
  // prediction to its own reference.
  RandomConv3dExtractor extractor(extractor_seed);
  for (size_t i = 0; i < names.size(); ++i) {
    const double d = (extractor.features(preds[i]) - extractor.features(refs[i])).squaredNorm();
    rows.push_back({names[i], d});
  }
  MetricReport report = make_metric_report("fid", rows);
  report.aggregate = video_fid(preds, refs, extractor);
  return report;
}

}  // namespace vinet
