#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "vinet/model.hpp"

namespace vinet {

constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ArchConfig arch;
  int stage = 1;         // training stage that produced the weights
  int64_t iteration = 0;
};

/// Binary layout: "VINETCKP", uint32 version, length-prefixed key=value metadata (architecture,
/// stage, iteration), then every parameter as (name, rank, int64 dims, float32 data) in
/// registration order. Names are prefixed by their parameter group.
void save_checkpoint(VINet& model, const CheckpointMeta& meta, const std::filesystem::path& path);

/// Reads only the metadata block.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Loads weights into `model`; throws ContractError when the stored architecture differs from
/// the model's.
CheckpointMeta load_checkpoint(VINet& model, const std::filesystem::path& path);

/// Builds a model from the stored architecture and loads the weights.
std::pair<VINet, CheckpointMeta> load_model(const std::filesystem::path& path);

}  // namespace vinet
