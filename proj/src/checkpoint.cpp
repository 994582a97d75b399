#include "fis/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fis/common.hpp"

namespace fis {

namespace {

constexpr char kMagic[8] = {'F', 'I', 'S', 'C', 'K', 'P', 'T', '1'};

void write_u64_le(std::ostream& out, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["format_version"] = checkpoint.format_version;
  manifest["completed_epochs"] = checkpoint.completed_epochs;
  manifest["completed_iters"] = checkpoint.completed_iters;
  manifest["config"] = checkpoint.config;
  manifest["optimizer_steps"] = checkpoint.optimizer_steps;

  std::vector<torch::Tensor> blobs;
  std::uint64_t offset = 0;
  nlohmann::json tensor_entries = nlohmann::json::array();
  for (const auto& [name, tensor] : checkpoint.tensors) {
    auto f32 = tensor.detach().to(torch::kFloat32).contiguous().cpu();
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = std::vector<std::int64_t>(tensor.sizes().begin(), tensor.sizes().end());
    entry["offset"] = offset;
    entry["numel"] = f32.numel();
    tensor_entries.push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(f32.numel()) * 4;
    blobs.push_back(std::move(f32));
  }
  manifest["tensors"] = std::move(tensor_entries);

  const std::string manifest_str = manifest.dump();
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  FIS_CHECK(out.good(), "cannot write checkpoint: ", path);
  out.write(kMagic, 8);
  write_u64_le(out, manifest_str.size());
  out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
  for (const torch::Tensor& blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob.data_ptr<float>()),
              static_cast<std::streamsize>(blob.numel() * 4));
  }
  FIS_CHECK(out.good(), "write failed for checkpoint: ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  FIS_CHECK(in.good(), "cannot read checkpoint: ", path);
  char magic[8];
  in.read(magic, 8);
  FIS_CHECK(in.good() && std::memcmp(magic, kMagic, 8) == 0, "not a checkpoint file: ", path);
  const std::uint64_t manifest_len = read_u64_le(in);
  std::string manifest_str(manifest_len, '\0');
  in.read(manifest_str.data(), static_cast<std::streamsize>(manifest_len));
  FIS_CHECK(in.good(), "truncated checkpoint manifest: ", path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_str);
  } catch (const nlohmann::json::exception& e) {
    fail("invalid checkpoint manifest in ", path, ": ", e.what());
  }

  Checkpoint checkpoint;
  checkpoint.format_version = manifest.at("format_version").get<int>();
  FIS_CHECK(checkpoint.format_version == 1, "unsupported checkpoint format version ",
            checkpoint.format_version);
  checkpoint.completed_epochs = manifest.at("completed_epochs").get<int>();
  checkpoint.completed_iters = manifest.at("completed_iters").get<std::int64_t>();
  checkpoint.config = manifest.value("config", nlohmann::json::object());
  checkpoint.optimizer_steps =
      manifest.value("optimizer_steps", std::map<std::string, std::int64_t>{});

  for (const nlohmann::json& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto numel = entry.at("numel").get<std::int64_t>();
    auto tensor = torch::empty(shape, torch::kFloat32);
    FIS_CHECK(tensor.numel() == numel, "shape/numel mismatch for tensor ", name);
    in.read(reinterpret_cast<char*>(tensor.data_ptr<float>()),
            static_cast<std::streamsize>(numel * 4));
    FIS_CHECK(in.good(), "truncated tensor data for ", name, " in ", path);
    checkpoint.tensors.emplace_back(name, std::move(tensor));
  }
  return checkpoint;
}

void load_model_parameters(torch::nn::Module& module, const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  for (const auto& item : module.named_parameters()) {
    const torch::Tensor* stored = checkpoint.find("model/" + item.key());
    FIS_CHECK(stored != nullptr, "checkpoint is missing parameter ", item.key(),
              " (architecture mismatch between checkpoint and config?)");
    FIS_CHECK(stored->sizes() == item.value().sizes(), "checkpoint parameter ", item.key(),
              " shape mismatch (architecture mismatch between checkpoint and config?)");
    item.value().copy_(stored->to(item.value().dtype()));
  }
}

}  // namespace fis
