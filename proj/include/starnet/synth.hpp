#pragma once
// Synthetic snow: blurred soft-disk particles alpha-composited in white over a
// veiled copy of the clean image.
//
//   veiled = clean (1 - v) + v
//   A      = 1 - prod_k (1 - o_k m_k)      m_k: blurred disk mask of particle k
//   snowy  = veiled (1 - A) + A

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>

#include "starnet/dataset.hpp"

namespace starnet {

struct SnowSynthesisSpec {
  int64_t particles_min = 30;
  int64_t particles_max = 60;
  double size_min = 1.0;  // particle radius in pixels
  double size_max = 3.0;
  double opacity_min = 0.6;
  double opacity_max = 1.0;
  double blur_sigma = 0.8;
  double veiling = 0.2;
  uint64_t seed = 0;

  // Throws ParameterError for inverted or out-of-range values.
  void validate() const;
};

// Keys: particles_min, particles_max, size_min, size_max, opacity_min,
// opacity_max, blur_sigma, veiling, seed. Unknown keys throw ConfigError.
SnowSynthesisSpec read_synthesis_spec(const std::filesystem::path& path);

// `clean` is a [3, H, W] tensor in [0, 1]; it is copied, never modified.
ImagePair synthesize_pair(const torch::Tensor& clean, const SnowSynthesisSpec& spec);

// Smooth gradients and flat shapes, quantized to 8-bit levels.
torch::Tensor procedural_clean(int64_t height, int64_t width, uint64_t seed);

}  // namespace starnet
