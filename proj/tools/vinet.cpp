#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "vinet/checkpoint.hpp"
#include "vinet/config.hpp"
#include "vinet/error.hpp"
#include "vinet/maskgen.hpp"
#include "vinet/pipeline.hpp"
#include "vinet/workflow.hpp"

namespace fs = std::filesystem;
using namespace vinet;

namespace {

constexpr int kExitContract = 2;
constexpr int kExitIo = 3;

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const char* kind, const std::string& what, int code) {
  std::cerr << "vinet: error[" << kind << "]: " << one_line(what) << std::endl;
  return code;
}

// --config wins; otherwise ./vinet.cfg when present; otherwise built-in defaults.
KeyValueConfig resolve_config(const std::string& flag) {
  if (!flag.empty()) return KeyValueConfig::load(flag);
  if (fs::exists("vinet.cfg")) return KeyValueConfig::load("vinet.cfg");
  return {};
}

std::string numbered(int64_t t, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%05lld%s", static_cast<long long>(t), suffix);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video inpainting: data synthesis, training, inference and evaluation"};
  app.require_subcommand(1);

  // make-data
  SynthDataOptions synth;
  std::string data_out;
  int64_t size = 0;
  auto* make_data = app.add_subcommand("make-data", "Write a synthetic dataset with analytic flows");
  make_data->add_option("--out", data_out, "Output directory")->required();
  make_data->add_option("--clips", synth.clips, "Number of clips");
  make_data->add_option("--frames", synth.frames, "Frames per clip");
  make_data->add_option("--size", size, "Square resolution (overrides --height/--width)");
  make_data->add_option("--height", synth.height);
  make_data->add_option("--width", synth.width);
  make_data->add_option("--seed", synth.seed);
  make_data->add_flag("--force", synth.force, "Replace a non-empty output directory");

  // make-masks
  std::string mask_kind = "random_square";
  std::string mask_out;
  std::string seg_dir;
  uint64_t mask_seed = 0;
  int64_t mask_frames = 16;
  int64_t mask_h = 64;
  int64_t mask_w = 64;
  int dilation = 5;
  auto* make_masks = app.add_subcommand("make-masks", "Write a hole-mask sequence");
  make_masks->add_option("--kind", mask_kind, "random_square, flying_square, arbitrary or object");
  make_masks->add_option("--seed", mask_seed);
  make_masks->add_option("--frames", mask_frames);
  make_masks->add_option("--height", mask_h);
  make_masks->add_option("--width", mask_w);
  make_masks->add_option("--segmentation", seg_dir, "Segmentation PNGs for --kind object");
  make_masks->add_option("--dilation", dilation);
  make_masks->add_option("--out", mask_out)->required();

  // cache-flow
  std::string flow_data;
  bool flow_force = false;
  auto* cache = app.add_subcommand("cache-flow", "Estimate and cache flows for a dataset");
  cache->add_option("--data", flow_data)->required();
  cache->add_flag("--force", flow_force, "Recompute existing caches");

  // train
  int stage = 0;
  std::string config_path;
  std::string train_data;
  std::string train_out;
  std::string train_ckpt;
  std::optional<uint64_t> train_seed;
  std::optional<int64_t> train_iters;
  auto* train_cmd = app.add_subcommand("train", "Train one stage");
  train_cmd->add_option("--stage", stage)->required()->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--config", config_path, "key=value config (default ./vinet.cfg)");
  train_cmd->add_option("--data", train_data)->required();
  train_cmd->add_option("--out", train_out)->required();
  train_cmd->add_option("--ckpt", train_ckpt, "Initial weights (required for stage 2)");
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--iterations", train_iters);

  // infer
  std::string infer_ckpt;
  std::string infer_frames;
  std::string infer_masks;
  std::string infer_out;
  std::string infer_config;
  bool per_frame = false;
  int64_t stride = 3;
  auto* infer_cmd = app.add_subcommand("infer", "Inpaint a clip");
  infer_cmd->add_option("--ckpt", infer_ckpt)->required();
  infer_cmd->add_option("--frames", infer_frames)->required();
  infer_cmd->add_option("--masks", infer_masks)->required();
  infer_cmd->add_option("--out", infer_out)->required();
  infer_cmd->add_option("--config", infer_config, "Reads `stride` (default ./vinet.cfg)");
  infer_cmd->add_option("--stride", stride);
  infer_cmd->add_flag("--per-frame", per_frame, "Disable feedback and memory");

  // eval
  std::string metric;
  std::string eval_data;
  std::string eval_pred;
  std::string eval_out;
  uint64_t eval_seed = 1234;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a dataset");
  eval_cmd->add_option("--metric", metric)->required()->check(CLI::IsMember({"warp", "fid", "psnr"}));
  eval_cmd->add_option("--data", eval_data, "Reference dataset")->required();
  eval_cmd->add_option("--pred", eval_pred, "Root holding <clip>/frames predictions")->required();
  eval_cmd->add_option("--out", eval_out, "Report CSV")->required();
  eval_cmd->add_option("--seed", eval_seed, "Feature extractor seed");

  // compare
  std::vector<std::string> compare_inputs;
  std::string compare_masks;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Tile frame directories side by side");
  compare->add_option("--inputs", compare_inputs)->required();
  compare->add_option("--masks", compare_masks, "Hole masks drawn on the first tile");
  compare->add_option("--out", compare_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("contract", e.what(), kExitContract);
  }

  try {
    if (*make_data) {
      if (size > 0) synth.height = synth.width = size;
      auto names = make_synthetic_data(synth, data_out);
      std::cout << "wrote " << names.size() << " clips to " << data_out << "\n";
    } else if (*make_masks) {
      MaskSeq masks;
      const auto kind = parse_mask_kind(mask_kind);
      if (kind == MaskKind::Object) {
        require(!seg_dir.empty(), "make-masks: --kind object needs --segmentation");
        masks = object_mask(seg_dir, dilation);
      } else {
        MaskSpec spec;
        spec.kind = kind;
        spec.seed = mask_seed;
        masks = generate_masks(spec, mask_frames, mask_h, mask_w);
      }
      save_mask_seq(masks, mask_out);
      std::cout << "wrote " << masks.size() << " masks to " << mask_out << "\n";
    } else if (*cache) {
      GradientFlowEstimator estimator;
      const int n = cache_flow(flow_data, estimator, flow_force);
      std::cout << "cached flows for " << n << " clips\n";
    } else if (*train_cmd) {
      auto kv = resolve_config(config_path);
      kv.set("stage", std::to_string(stage));
      if (train_seed) kv.set("seed", std::to_string(*train_seed));
      if (train_iters) kv.set("iterations", std::to_string(*train_iters));
      const auto config = TrainConfig::from_config(kv);
      auto dataset = Dataset::load(train_data, config.stage == 2,
                                   std::make_pair(config.height, config.width));
      std::optional<fs::path> ckpt;
      if (!train_ckpt.empty()) ckpt = train_ckpt;
      fs::create_directories(train_out);
      {
        std::ofstream used(fs::path(train_out) / "config_used.cfg");
        used << config.to_config().to_text();
      }
      auto result = train(config, dataset, ckpt, train_out, [](int64_t it, const LossReport& r) {
        std::cout << "iter " << it << " total " << r.total << " l1 " << r.recon_l1 << "\n"
                  << std::flush;
      });
      std::cout << "checkpoint " << result.checkpoint.string() << "\n";
    } else if (*infer_cmd) {
      auto kv = resolve_config(infer_config);
      if (!infer_cmd->count("--stride")) stride = kv.get_int("stride", stride);
      require(stride >= 1, "infer: stride must be >= 1");
      auto [model, meta] = load_model(infer_ckpt);
      const Clip clip = load_clip(infer_frames);
      const MaskSeq masks = load_mask_seq(infer_masks);
      auto result = infer(model, clip, masks, !per_frame, stride);
      const fs::path out(infer_out);
      save_clip(result.frames, out / "frames");
      fs::create_directories(out / "flow");
      for (size_t t = 0; t < result.flows.size(); ++t) {
        write_flow(result.flows[t], out / "flow" / numbered(static_cast<int64_t>(t), ".flo"));
      }
      save_mask_seq(MaskSeq::from_tensor((result.final_masks >= 0.5).to(torch::kFloat32)),
                    out / "blend");
      std::cout << "wrote " << result.frames.size() << " frames to " << infer_out << "\n";
    } else if (*eval_cmd) {
      auto report = evaluate_predictions(metric, eval_data, eval_pred, eval_seed);
      std::ofstream out(eval_out);
      if (!out) throw IoError("cannot write " + eval_out);
      out << report.to_csv();
      std::cout << metric << " " << report.aggregate << "\n";
    } else if (*compare) {
      std::vector<fs::path> inputs(compare_inputs.begin(), compare_inputs.end());
      std::optional<fs::path> masks;
      if (!compare_masks.empty()) masks = compare_masks;
      const int n = compare_video(inputs, masks, compare_out);
      std::cout << "wrote " << n << " frames to " << compare_out << "\n";
    }
  } catch (const ContractError& e) {
    return fail("contract", e.what(), kExitContract);
  } catch (const IoError& e) {
    return fail("io", e.what(), kExitIo);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kExitIo);
  } catch (const TrainingDiverged& e) {
    return fail("diverged", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
