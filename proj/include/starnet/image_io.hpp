#pragma once
// 8-bit image files <-> float tensors in [0, 1].

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace starnet {

// Reads any OpenCV-decodable image as a [3, H, W] float32 RGB tensor in [0, 1].
torch::Tensor read_image(const std::filesystem::path& path);

// Writes a [3, H, W] (RGB) or [H, W] / [1, H, W] (gray) tensor in [0, 1] as an
// 8-bit PNG, rounding to the nearest level. read_image(write_png(x)) is exact
// for tensors that already hold multiples of 1/255.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

bool is_image_file(const std::filesystem::path& path);

// Image files directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace starnet
