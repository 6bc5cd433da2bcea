#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vinet/eval.hpp"
#include "vinet/flow_oracle.hpp"

namespace vinet {

struct SynthDataOptions {
  int64_t clips = 8;
  int64_t frames = 16;
  int64_t height = 64;
  int64_t width = 64;
  uint64_t seed = 0;
  int max_speed = 2;  // integer velocities in [-max_speed, max_speed], x never 0
  bool force = false;
};

/// Writes a dataset of translating-texture clips with analytic flows, occlusion masks and
/// object segmentation in the Dataset directory layout. Returns the clip names.
std::vector<std::string> make_synthetic_data(const SynthDataOptions& options,
                                             const fs::path& out_dir);

/// Estimates and caches backward, to-first and occlusion maps for every clip of a dataset
/// lacking them (all clips with `force`). Returns the number of clips processed.
int cache_flow(const fs::path& dataset_root, const FlowEstimator& estimator, bool force);

/// Side-by-side frames with 2-px separators. With `masks_dir`, the hole boundary is drawn
/// in red on the first tile. Returns the number of frames written.
int compare_video(const std::vector<fs::path>& sources, const std::optional<fs::path>& masks_dir,
                  const fs::path& out_dir);

/// Evaluates `<pred_root>/<clip>/frames` against the clips of a dataset. `metric` is one of
/// warp, fid, psnr.
MetricReport evaluate_predictions(const std::string& metric, const fs::path& dataset_root,
                                  const fs::path& pred_root, uint64_t extractor_seed = 1234);

}  // namespace vinet
