#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "fcm/common.hpp"

namespace fcm {

// Versioned key->tensor map. The tensor payload is a torch archive; a JSON
// sidecar (<path>.json) carries the version, shape manifest, and free-form
// metadata so checkpoints can be inspected without loading libtorch.
struct Checkpoint {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::map<std::string, torch::Tensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Copies all parameters and buffers of `module` under `prefix.`.
  void put_module(const std::string& prefix, const torch::nn::Module& module);
  // Writes them back; missing key or shape mismatch raises CheckpointError.
  void load_module(const std::string& prefix, torch::nn::Module& module) const;

  const torch::Tensor& at(const std::string& key) const;
};

// FNV-1a over the file bytes, hex-encoded; used in run records.
std::string file_hash(const std::string& path);

}  // namespace fcm
