#pragma once
// Feature-map visualization around the DFM of one skip level.

#include <torch/torch.h>

#include <filesystem>

#include "starnet/starnet.hpp"

namespace starnet {

// Tiles the first `max_channels` channels of a [C, H, W] map into a gray
// [rows * H, cols * W] image in [0, 1], cols = ceil(sqrt(n)), rows = ceil(n / cols).
// Each tile is min-max normalized; a constant channel becomes mid-gray (128 / 255).
// Unused tiles are black.
torch::Tensor tile_channels(const torch::Tensor& features, int64_t max_channels = 64);

struct FeatureDump {
  std::filesystem::path pre_dfm;
  std::filesystem::path post_dfm;
  int64_t rows = 0;
  int64_t cols = 0;
};

// Writes level<L>_pre_dfm.png and level<L>_post_dfm.png under `out_dir`.
// Throws ParameterError for a level outside the network.
FeatureDump dump_features(ModelState& model, const torch::Tensor& image, int64_t level,
                          const std::filesystem::path& out_dir);

}  // namespace starnet
