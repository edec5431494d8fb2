#pragma once
// Checkpoint container.
//
//   "starnet-v1\n"
//   uint64 little-endian header length
//   JSON header (keys sorted): format, config, epoch, step, tensors[], state
//   raw tensor bytes, in header order
//
// Tensors are stored as contiguous little-endian CPU data, so a save/load
// round trip is bit-exact.

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "starnet/starnet.hpp"

namespace starnet {

inline constexpr const char* kCheckpointFormat = "starnet-v1";

struct Checkpoint {
  std::string config_text;  // canonical StarNetConfig text
  int64_t epoch = 0;
  int64_t step = 0;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  nlohmann::json state = nlohmann::json::object();  // trainer bookkeeping

  const torch::Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters and buffers of the model under "model/<name>".
void add_model_tensors(Checkpoint& ckpt, const ModelState& model);
// Copies "model/<name>" tensors into the model; every parameter must be present.
void load_model_tensors(const Checkpoint& ckpt, ModelState& model);

void save_model(const std::filesystem::path& path, const ModelState& model, int64_t epoch = 0);
// Rebuilds the network from the embedded configuration and loads its weights.
ModelState load_model(const std::filesystem::path& path);
ModelState model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace starnet
