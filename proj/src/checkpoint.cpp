#include "fcm/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <torch/serialize.h>

namespace fcm {

using json = nlohmann::json;

void Checkpoint::save(const std::string& path) const {
  torch::serialize::OutputArchive archive;
  json shapes = json::object();
  for (const auto& [key, tensor] : tensors) {
    archive.write(key, tensor);
    shapes[key] = std::vector<int64_t>(tensor.sizes().begin(), tensor.sizes().end());
  }
  archive.save_to(path);

  json sidecar{{"version", version}, {"shapes", shapes}, {"meta", meta}};
  std::ofstream f(path + ".json");
  if (!f) throw CheckpointError("cannot write checkpoint sidecar: " + path + ".json");
  f << sidecar.dump(1) << "\n";
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path + ".json");
  if (!f) throw CheckpointError("missing checkpoint sidecar: " + path + ".json");
  json sidecar;
  try {
    f >> sidecar;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint sidecar: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = sidecar.at("version").get<int>();
  if (ckpt.version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.meta = sidecar.value("meta", json::object());

  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
  }
  for (const auto& [key, shape_json] : sidecar.at("shapes").items()) {
    torch::Tensor t;
    if (!archive.try_read(key, t))
      throw CheckpointError("checkpoint tensor missing: " + key);
    auto expect = shape_json.get<std::vector<int64_t>>();
    if (std::vector<int64_t>(t.sizes().begin(), t.sizes().end()) != expect)
      throw CheckpointError("checkpoint shape mismatch for " + key);
    ckpt.tensors[key] = t;
  }
  return ckpt;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters())
    tensors[prefix + "." + p.key()] = p.value().detach().clone();
  for (const auto& b : module.named_buffers())
    tensors[prefix + "." + b.key()] = b.value().detach().clone();
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard guard;
  auto restore = [&](const std::string& name, torch::Tensor dest) {
    const auto& src = at(prefix + "." + name);
    if (src.sizes() != dest.sizes())
      throw CheckpointError("parameter shape mismatch: " + prefix + "." + name);
    dest.copy_(src);
  };
  for (const auto& p : module.named_parameters()) restore(p.key(), p.value());
  for (const auto& b : module.named_buffers()) restore(b.key(), b.value());
}

const torch::Tensor& Checkpoint::at(const std::string& key) const {
  auto it = tensors.find(key);
  if (it == tensors.end()) throw CheckpointError("checkpoint key missing: " + key);
  return it->second;
}

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot hash file: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace fcm
