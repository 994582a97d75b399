#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fis {

// Single-archive checkpoint: a JSON manifest plus raw little-endian float32
// parameter blocks keyed by hierarchical names. save→load→save is
// byte-identical.
struct Checkpoint {
  int format_version = 1;
  int completed_epochs = 0;
  std::int64_t completed_iters = 0;
  nlohmann::json config;  // run-config snapshot
  std::map<std::string, std::int64_t> optimizer_steps;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;  // float32, CPU

  const torch::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Copies every "model/<name>" tensor into the module's parameters, failing
// loudly on missing names or shape mismatches (architecture mismatch).
void load_model_parameters(torch::nn::Module& module, const Checkpoint& checkpoint);

}  // namespace fis
