#include "vinet/checkpoint.hpp"

#include <array>
#include <fstream>

#include "vinet/config.hpp"
#include "vinet/error.hpp"

namespace vinet {

namespace {

constexpr std::array<char, 8> kMagic = {'V', 'I', 'N', 'E', 'T', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint: " + path.string());
  return v;
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<uint32_t>(in, path);
  if (n > (1u << 24)) throw FormatError("corrupt string length in checkpoint: " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("truncated checkpoint: " + path.string());
  return s;
}

std::string meta_text(const CheckpointMeta& meta) {
  KeyValueConfig kv(meta.arch.to_map());
  kv.set("stage", std::to_string(meta.stage));
  kv.set("iteration", std::to_string(meta.iteration));
  return kv.to_text();
}

CheckpointMeta read_header(std::istream& in, const std::filesystem::path& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("not a checkpoint file: " + path.string());
  const auto version = get<uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " +
                      path.string());
  }
  auto kv = KeyValueConfig::parse(get_string(in, path));
  CheckpointMeta meta;
  meta.arch = ArchConfig::from_map(kv.values());
  meta.stage = static_cast<int>(kv.get_int("stage", 1));
  meta.iteration = kv.get_int("iteration", 0);
  return meta;
}

}  // namespace

void save_checkpoint(VINet& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  require(meta.arch == model->config(), "save_checkpoint: metadata architecture differs from model");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create checkpoint: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put(out, kCheckpointVersion);
    put_string(out, meta_text(meta));
    auto params = model->named_parameters(true);
    put(out, static_cast<uint32_t>(params.size()));
    for (const auto& item : params) {
      auto data = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
      put_string(out, item.key());
      put(out, static_cast<uint32_t>(data.dim()));
      for (auto d : data.sizes()) put(out, static_cast<int64_t>(d));
      out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
                static_cast<std::streamsize>(data.numel() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return read_header(in, path);
}

CheckpointMeta load_checkpoint(VINet& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  auto meta = read_header(in, path);
  if (!(meta.arch == model->config())) {
    throw ContractError("checkpoint architecture does not match the model configuration: " +
                        path.string());
  }
  auto params = model->named_parameters(true);
  const auto count = get<uint32_t>(in, path);
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  torch::NoGradGuard no_grad;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name = get_string(in, path);
    auto* target = params.find(name);
    if (target == nullptr) throw FormatError("unknown parameter '" + name + "' in " + path.string());
    const auto rank = get<uint32_t>(in, path);
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = get<int64_t>(in, path);
    if (c10::IntArrayRef(dims) != target->sizes()) {
      throw FormatError("shape mismatch for parameter '" + name + "' in " + path.string());
    }
    auto buf = torch::empty(dims, torch::kFloat32);
    const auto bytes = static_cast<std::streamsize>(buf.numel() * sizeof(float));
    in.read(reinterpret_cast<char*>(buf.data_ptr<float>()), bytes);
    if (in.gcount() != bytes) throw FormatError("truncated checkpoint: " + path.string());
    target->copy_(buf.to(target->scalar_type()));
  }
  return meta;
}

std::pair<VINet, CheckpointMeta> load_model(const std::filesystem::path& path) {
  auto meta = read_checkpoint_meta(path);
  VINet model(meta.arch);
  load_checkpoint(model, path);
  return {model, meta};
}

}  // namespace vinet
