#include "starnet/features.hpp"

#include <cmath>

#include "starnet/errors.hpp"
#include "starnet/image_io.hpp"

namespace starnet {

torch::Tensor tile_channels(const torch::Tensor& features, int64_t max_channels) {
  if (features.dim() != 3) throw ShapeError("tile_channels: expected a [C, H, W] map");
  if (max_channels <= 0) throw ParameterError("tile_channels: max_channels must be positive");
  const int64_t n = std::min(features.size(0), max_channels);
  const int64_t h = features.size(1), w = features.size(2);
  const int64_t cols = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int64_t rows = (n + cols - 1) / cols;
  auto f = features.detach().to(torch::kCPU, torch::kFloat64);
  auto grid = torch::zeros({rows * h, cols * w}, torch::kFloat64);
  using torch::indexing::Slice;
  for (int64_t c = 0; c < n; ++c) {
    auto tile = f[c];
    const double lo = tile.min().item<double>(), hi = tile.max().item<double>();
    auto norm = hi > lo ? (tile - lo) / (hi - lo) : torch::full_like(tile, 128.0 / 255.0);
    const int64_t r = c / cols, k = c % cols;
    grid.index_put_({Slice(r * h, (r + 1) * h), Slice(k * w, (k + 1) * w)}, norm);
  }
  return grid.to(torch::kFloat32);
}

FeatureDump dump_features(ModelState& model, const torch::Tensor& image, int64_t level,
                          const std::filesystem::path& out_dir) {
  const auto levels = static_cast<int64_t>(model.config.levels());
  if (level < 0 || level >= levels) {
    throw ParameterError("dump_features: level " + std::to_string(level) + " is outside [0, " +
                         std::to_string(levels - 1) + "]");
  }
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("dump_features: expected a [3, H, W] image");
  const int64_t m = model.config.input_multiple();
  const int64_t ph = (m - image.size(1) % m) % m, pw = (m - image.size(2) % m) % m;
  auto x = image.unsqueeze(0).to(model.net->parameters().front().scalar_type());
  if (ph || pw) {
    namespace F = torch::nn::functional;
    x = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  }

  torch::NoGradGuard no_grad;
  model.net->eval();
  const auto taps = model.net->skip_path(model.net->encode(x));
  const auto pre = tile_channels(taps.dfm_in[level][0]);
  const auto post = tile_channels(taps.dfm_out[level][0]);

  FeatureDump d;
  const int64_t n = std::min<int64_t>(taps.dfm_in[level].size(1), 64);
  d.cols = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  d.rows = (n + d.cols - 1) / d.cols;
  d.pre_dfm = out_dir / ("level" + std::to_string(level) + "_pre_dfm.png");
  d.post_dfm = out_dir / ("level" + std::to_string(level) + "_post_dfm.png");
  write_png(d.pre_dfm, pre);
  write_png(d.post_dfm, post);
  return d;
}

}  // namespace starnet
